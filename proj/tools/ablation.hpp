#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "semb/objectives.hpp"
#include "semb/trainer.hpp"

namespace semb::cli {

struct AblationCell {
  Objective objective = Objective::kClassification;
  PoolingStrategy pooling = PoolingStrategy::kMean;
  std::optional<ConcatMode> concat;  // classification cells only
  MultiSeedResult result;
};

struct AblationData {
  std::vector<PairExample> classification;  // labelled pairs
  std::vector<PairExample> regression;      // scored pairs; empty skips the regression block
  std::vector<PairExample> dev;             // scored pairs
};

// Called after every (cell, seed) run with the dev Spearman.
using AblationObserver =
    std::function<void(const AblationCell&, std::uint64_t seed, double spearman)>;

// Classification cells for every pooling x concat pair, then one regression
// cell per pooling. Each seed trains a fresh model (encoder and head seeded
// with it) and scores dev Spearman. Failed seeds are recorded, not thrown.
std::vector<AblationCell> run_ablation(const RunConfig& config, const AblationData& data,
                                       const AblationObserver& observer = {});

// Values x100 as "mean ± stdev", one block per objective.
std::string format_ablation_table(const std::vector<AblationCell>& cells, std::size_t seeds);

}  // namespace semb::cli
