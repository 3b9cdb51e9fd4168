#include "ablation.hpp"

#include <cctype>
#include <sstream>

#include "semb/eval.hpp"
#include "semb/model.hpp"

namespace semb::cli {
namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s += std::string(width - s.size(), ' ');
  return s;
}

}  // namespace

std::vector<AblationCell> run_ablation(const RunConfig& config, const AblationData& data,
                                       const AblationObserver& observer) {
  const auto& ab = config.ablate;
  std::vector<std::string> texts;
  for (const auto* set : {&data.classification, &data.regression}) {
    for (const auto& p : *set) {
      texts.push_back(p.a);
      texts.push_back(p.b);
    }
  }

  std::vector<AblationCell> cells;
  for (PoolingStrategy p : ab.pooling) {
    for (ConcatMode c : ab.concat) cells.push_back({Objective::kClassification, p, c, {}});
  }
  if (!data.regression.empty()) {
    for (PoolingStrategy p : ab.pooling) {
      cells.push_back({Objective::kRegression, p, std::nullopt, {}});
    }
  }

  for (AblationCell& cell : cells) {
    auto run_one = [&](std::uint64_t seed) {
      EncoderConfig ec = config.encoder;
      ec.seed = seed;
      SentenceModel model = make_model(texts, config.min_freq, ec, cell.pooling);
      model.pool_special_tokens = config.pool_special_tokens;
      TrainConfig tc = config.train;
      tc.seed = seed;
      tc.pooling = cell.pooling;
      tc.objective = cell.objective;
      TrainingData train_data;
      if (cell.concat) {
        tc.concat = *cell.concat;
        train_data.pairs = data.classification;
      } else {
        train_data.pairs = data.regression;
      }
      train(model, train_data, tc);
      const double rho =
          sts_eval(ModelEmbedder(model, config.eval.batch_size), data.dev, config.eval.similarity)
              .spearman;
      if (observer) observer(cell, seed, rho);
      return rho;
    };
    cell.result = multi_seed_run(ab.seeds, run_one);
  }
  return cells;
}

std::string format_ablation_table(const std::vector<AblationCell>& cells, std::size_t seeds) {
  std::ostringstream t;
  t << "Dev Spearman x100, mean ± stdev over " << seeds << " seeds\n";
  bool header_cls = false, header_reg = false;
  for (const auto& cell : cells) {
    const auto& r = cell.result;
    std::string score = r.values.empty() ? "failed" : r.formatted(100.0);
    if (!r.failures.empty() && !r.values.empty()) {
      score += "  (" + std::to_string(r.failures.size()) + " failed)";
    }
    if (cell.concat) {
      if (!header_cls) {
        t << "\n" << pad("Pooling", 10) << pad("Concatenation", 22) << "Score\n";
        header_cls = true;
      }
      t << pad(upper(to_string(cell.pooling)), 10) << pad(concat_label(*cell.concat), 22) << score
        << "\n";
    } else {
      if (!header_reg) {
        t << "\n" << pad("Pooling", 10) << pad("(regression)", 22) << "Score\n";
        header_reg = true;
      }
      t << pad(upper(to_string(cell.pooling)), 32) << score << "\n";
    }
  }
  return t.str();
}

}  // namespace semb::cli
