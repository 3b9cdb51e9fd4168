#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "semb/objectives.hpp"
#include "semb/search.hpp"

namespace semb {

// JSONL readers. Blank lines are skipped; any other malformed line throws
// DataFormatError carrying its 1-based line number.

// {"a", "b", "label"}; label is an NLI name or a non-negative integer.
std::vector<PairExample> read_label_pairs(std::istream& in);
// {"a", "b", "score"}
std::vector<PairExample> read_score_pairs(std::istream& in);
// {"anchor", "positive", "negative"}
std::vector<TripletExample> read_triplets(std::istream& in);

struct ProbeData {
  std::vector<std::string> texts;
  std::vector<std::size_t> labels;
};
// {"text", "label"}; string labels are numbered in order of first appearance.
ProbeData read_probe(std::istream& in);
// {"id", "text"}; ids must be unique.
std::vector<CorpusEntry> read_corpus(std::istream& in);

// Label name -> class id (contradiction/entailment/neutral or an integer).
std::size_t parse_pair_label(const std::string& label);

std::vector<PairExample> load_label_pairs(const std::filesystem::path& path);
std::vector<PairExample> load_score_pairs(const std::filesystem::path& path);
std::vector<TripletExample> load_triplets(const std::filesystem::path& path);
ProbeData load_probe(const std::filesystem::path& path);
std::vector<CorpusEntry> load_corpus(const std::filesystem::path& path);

}  // namespace semb
