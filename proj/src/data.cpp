#include "semb/data.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <unordered_set>

#include <json.hpp>

namespace semb {
namespace {

using nlohmann::json;

void for_each_record(std::istream& in, const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataFormatError(number, "malformed JSON (" + std::string(e.what()) + ")");
    }
    if (!record.is_object()) throw DataFormatError(number, "expected a JSON object");
    fn(record, number);
  }
}

std::string text_field(const json& r, const char* key, std::size_t line) {
  const auto it = r.find(key);
  if (it == r.end()) throw DataFormatError(line, std::string("missing field \"") + key + "\"");
  if (!it->is_string()) {
    throw DataFormatError(line, std::string("field \"") + key + "\" must be a string");
  }
  return it->get<std::string>();
}

const json& field(const json& r, const char* key, std::size_t line) {
  const auto it = r.find(key);
  if (it == r.end()) throw DataFormatError(line, std::string("missing field \"") + key + "\"");
  return *it;
}

template <typename Fn>
auto open_and_read(const std::filesystem::path& path, Fn read) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read(in);
}

}  // namespace

std::size_t parse_pair_label(const std::string& label) {
  for (std::size_t i = 0; i < kNliLabels.size(); ++i) {
    if (label == kNliLabels[i]) return i;
  }
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(label, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != label.size() || label[0] == '-') {
    throw InvalidArgument("unknown label '" + label + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<PairExample> read_label_pairs(std::istream& in) {
  std::vector<PairExample> out;
  for_each_record(in, [&](const json& r, std::size_t line) {
    PairExample p{text_field(r, "a", line), text_field(r, "b", line), std::nullopt, std::nullopt};
    const json& label = field(r, "label", line);
    if (label.is_number_unsigned()) {
      p.label = label.get<std::size_t>();
    } else if (label.is_string()) {
      try {
        p.label = parse_pair_label(label.get<std::string>());
      } catch (const InvalidArgument& e) {
        throw DataFormatError(line, e.what());
      }
    } else {
      throw DataFormatError(line, "field \"label\" must be a string or non-negative integer");
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<PairExample> read_score_pairs(std::istream& in) {
  std::vector<PairExample> out;
  for_each_record(in, [&](const json& r, std::size_t line) {
    PairExample p{text_field(r, "a", line), text_field(r, "b", line), std::nullopt, std::nullopt};
    const json& score = field(r, "score", line);
    if (!score.is_number()) throw DataFormatError(line, "field \"score\" must be a number");
    p.score = score.get<double>();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<TripletExample> read_triplets(std::istream& in) {
  std::vector<TripletExample> out;
  for_each_record(in, [&](const json& r, std::size_t line) {
    out.push_back({text_field(r, "anchor", line), text_field(r, "positive", line),
                   text_field(r, "negative", line)});
  });
  return out;
}

ProbeData read_probe(std::istream& in) {
  ProbeData out;
  std::map<std::string, std::size_t> names;
  for_each_record(in, [&](const json& r, std::size_t line) {
    out.texts.push_back(text_field(r, "text", line));
    const json& label = field(r, "label", line);
    if (label.is_number_unsigned()) {
      out.labels.push_back(label.get<std::size_t>());
    } else if (label.is_string()) {
      const auto [it, added] = names.emplace(label.get<std::string>(), names.size());
      out.labels.push_back(it->second);
    } else {
      throw DataFormatError(line, "field \"label\" must be a string or non-negative integer");
    }
  });
  return out;
}

std::vector<CorpusEntry> read_corpus(std::istream& in) {
  std::vector<CorpusEntry> out;
  std::unordered_set<std::string> seen;
  for_each_record(in, [&](const json& r, std::size_t line) {
    CorpusEntry e{text_field(r, "id", line), text_field(r, "text", line)};
    if (!seen.insert(e.id).second) throw DataFormatError(line, "duplicate id '" + e.id + "'");
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<PairExample> load_label_pairs(const std::filesystem::path& path) {
  return open_and_read(path, [](std::istream& in) { return read_label_pairs(in); });
}
std::vector<PairExample> load_score_pairs(const std::filesystem::path& path) {
  return open_and_read(path, [](std::istream& in) { return read_score_pairs(in); });
}
std::vector<TripletExample> load_triplets(const std::filesystem::path& path) {
  return open_and_read(path, [](std::istream& in) { return read_triplets(in); });
}
ProbeData load_probe(const std::filesystem::path& path) {
  return open_and_read(path, [](std::istream& in) { return read_probe(in); });
}
std::vector<CorpusEntry> load_corpus(const std::filesystem::path& path) {
  return open_and_read(path, [](std::istream& in) { return read_corpus(in); });
}

}  // namespace semb
