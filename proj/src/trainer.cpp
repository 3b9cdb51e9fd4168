#include "semb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "semb/batching.hpp"

namespace semb {

Schedule parse_schedule(std::string_view name) {
  if (name == "linear") return Schedule::kWarmupLinear;
  if (name == "constant-after-warmup") return Schedule::kConstantAfterWarmup;
  throw InvalidArgument("unknown schedule '" + std::string(name) +
                        "' (expected linear|constant-after-warmup)");
}

std::string_view to_string(Schedule schedule) {
  return schedule == Schedule::kWarmupLinear ? "linear" : "constant-after-warmup";
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw InvalidArgument("warmup_fraction must be in [0, 1)");
  }
  if (!(base_lr >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) {
    throw InvalidArgument("grad_clip_norm must be positive");
  }
  if (!(score_max > 0.0)) throw InvalidArgument("score_max must be positive");
  if (!(triplet_margin >= 0.0)) throw InvalidArgument("triplet margin must be >= 0");
  if (objective == Objective::kClassification && num_labels < 2) {
    throw InvalidArgument("num_labels must be >= 2");
  }
}

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, AdamState<T>& state, double lr,
               const AdamConfig& config) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape(), T{0});
      state.v.emplace_back(p->shape(), T{0});
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i]->shape()) {
      throw DimensionError("adam_step: moment shape " + shape_to_string(state.m[i].shape()) +
                           " does not match parameter " +
                           shape_to_string(params[i]->shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto g = p.grad();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const T gk = g.empty() ? T{0} : g[k];
      m[k] = b1 * m[k] + (T{1} - b1) * gk;
      v[k] = b2 * v[k] + (T{1} - b2) * gk * gk;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

template void adam_step<float>(std::span<BasicTensor<float>* const>, AdamState<float>&,
                               double, const AdamConfig&);
template void adam_step<double>(std::span<BasicTensor<double>* const>, AdamState<double>&,
                                double, const AdamConfig&);

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config) {
  if (total_steps == 0) throw InvalidArgument("lr_at: total_steps must be positive");
  if (step > total_steps) {
    throw InvalidArgument("lr_at: step " + std::to_string(step) + " beyond total " +
                          std::to_string(total_steps));
  }
  const auto warmup = static_cast<std::size_t>(
      std::llround(config.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) {
    return config.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (config.schedule == Schedule::kConstantAfterWarmup || total_steps == warmup) {
    return config.base_lr;
  }
  return config.base_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor* p : params) {
    for (float g : p->grad()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float factor = static_cast<float>(max_norm / norm);
    for (Tensor* p : params) {
      for (float& g : p->grad()) g *= factor;
    }
  }
  return norm;
}

double TrainResult::initial_loss(std::size_t window) const {
  const std::size_t n = std::min(window, batches.size());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += batches[i].loss;
  return total / double(n);
}

double TrainResult::final_loss(std::size_t window) const {
  const std::size_t n = std::min(window, batches.size());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = batches.size() - n; i < batches.size(); ++i) total += batches[i].loss;
  return total / double(n);
}

namespace {

void check_data(const TrainingData& data, const TrainConfig& config) {
  switch (config.objective) {
    case Objective::kTriplet:
      if (data.triplets.empty()) throw InvalidArgument("triplet objective needs triplet data");
      for (const auto& t : data.triplets) {
        if (t.anchor.empty() || t.positive.empty() || t.negative.empty()) {
          throw InvalidArgument("triplet with an empty sentence");
        }
      }
      break;
    case Objective::kClassification:
      if (data.pairs.empty()) throw InvalidArgument("classification objective needs pair data");
      for (const auto& p : data.pairs) {
        if (!p.label || *p.label >= config.num_labels) {
          throw InvalidArgument("classification pair without a label in [0," +
                                std::to_string(config.num_labels) + ")");
        }
      }
      break;
    case Objective::kRegression:
      if (data.pairs.empty()) throw InvalidArgument("regression objective needs pair data");
      for (const auto& p : data.pairs) {
        if (!p.score) throw InvalidArgument("regression pair without a score");
        regression_target(*p.score, config.score_max, config.target_scale);
      }
      break;
  }
}

}  // namespace

TrainResult train(SentenceModel& model, const TrainingData& data, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  check_data(data, config);
  model.pooling = config.pooling;
  model.objective = config.objective;
  const std::size_t dim = model.dim();

  if (config.objective == Objective::kClassification) {
    const bool compatible = model.head && model.head->mode == config.concat &&
                            model.head->num_labels() == config.num_labels &&
                            model.head->input_dim() == concat_dim(config.concat, dim);
    if (!compatible) {
      model.head = make_classifier_head<float>(dim, config.num_labels, config.concat,
                                               config.seed ^ 0x5eedULL);
    }
  }

  // Towers per example: 2 for pairs, 3 for triplets.
  const bool triplets = config.objective == Objective::kTriplet;
  const std::size_t towers = triplets ? 3 : 2;
  const std::size_t count = triplets ? data.triplets.size() : data.pairs.size();
  std::vector<std::vector<TokenizedSentence>> tokens(towers);
  for (std::size_t i = 0; i < count; ++i) {
    if (triplets) {
      tokens[0].push_back(model.tokenize(data.triplets[i].anchor));
      tokens[1].push_back(model.tokenize(data.triplets[i].positive));
      tokens[2].push_back(model.tokenize(data.triplets[i].negative));
    } else {
      tokens[0].push_back(model.tokenize(data.pairs[i].a));
      tokens[1].push_back(model.tokenize(data.pairs[i].b));
    }
  }
  std::vector<std::size_t> lengths(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    for (const auto& tower : tokens) lengths[i] = std::max(lengths[i], tower[i].ids.size());
  }

  std::vector<Tensor*> params;
  for (auto& p : model.encoder.parameters()) params.push_back(p.tensor);
  if (config.objective == Objective::kClassification) params.push_back(&model.head->weight);
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->ensure_grad();
  }
  model.encoder.mode = EncoderMode::kTrain;

  const std::size_t batches_per_epoch = (count + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches_per_epoch * config.epochs;
  std::mt19937_64 dropout_rng(config.seed);
  AdamState<float> adam;
  TrainResult result;

  auto finish = [&] {
    for (Tensor* p : params) {
      p->set_requires_grad(false);
      p->clear_grad();
    }
    model.encoder.mode = EncoderMode::kInfer;
    model.train_steps += result.steps;
  };

  try {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      const std::uint64_t epoch_seed = config.seed + 0x9E3779B97F4A7C15ULL * (epoch + 1);
      std::vector<Batch> batches;
      if (config.smart_batching) {
        batches = smart_batches(lengths, config.batch_size, epoch_seed, true);
      } else {
        std::vector<std::size_t> order(count);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 order_rng(epoch_seed);
        std::shuffle(order.begin(), order.end(), order_rng);
        for (const auto& chunk : plain_batches(count, config.batch_size)) {
          Batch b;
          for (std::size_t i : chunk) b.push_back(order[i]);
          batches.push_back(std::move(b));
        }
      }

      for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const Batch& batch = batches[bi];
        const std::size_t b = batch.size();
        std::vector<TokenizedSentence> members;
        members.reserve(b * towers);
        for (const auto& tower : tokens) {
          for (std::size_t i : batch) members.push_back(tower[i]);
        }
        const auto padded = pad_batch(members);

        Graph<float> g;
        g.training = true;
        g.rng = &dropout_rng;
        Var<float> out = encode_batch(g, model.encoder, padded);
        Var<float> pooled =
            pool(out, pooling_mask(padded, model.pool_special_tokens), config.pooling);
        Var<float> loss;
        if (triplets) {
          loss = triplet_loss(slice_rows(pooled, 0, b), slice_rows(pooled, b, 2 * b),
                              slice_rows(pooled, 2 * b, 3 * b),
                              static_cast<float>(config.triplet_margin));
        } else if (config.objective == Objective::kClassification) {
          std::vector<std::size_t> labels;
          for (std::size_t i : batch) labels.push_back(*data.pairs[i].label);
          loss = classification_loss(slice_rows(pooled, 0, b), slice_rows(pooled, b, 2 * b),
                                     std::span<const std::size_t>(labels),
                                     g.parameter(model.head->weight), config.concat)
                     .loss;
        } else {
          std::vector<double> gold;
          for (std::size_t i : batch) gold.push_back(*data.pairs[i].score);
          loss = regression_loss(slice_rows(pooled, 0, b), slice_rows(pooled, b, 2 * b),
                                 std::span<const double>(gold), config.score_max,
                                 config.target_scale)
                     .loss;
        }

        const double lr = lr_at(result.steps, total_steps, config);
        const double loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          char msg[160];
          std::snprintf(msg, sizeof msg,
                        "non-finite loss at epoch %zu batch %zu (step %zu, lr %.3g)", epoch,
                        bi, result.steps, lr);
          throw TrainingDivergedError(msg);
        }
        for (Tensor* p : params) p->zero_grad();
        g.backward(loss);
        if (config.grad_clip_norm) clip_grad_norm(params, *config.grad_clip_norm);
        adam_step<float>(params, adam, lr, config.adam);

        BatchRecord record{epoch, result.steps, lr, loss_value};
        result.batches.push_back(record);
        ++result.steps;
        if (hooks.on_batch) hooks.on_batch(record);
      }
      if (hooks.on_epoch) hooks.on_epoch(epoch, model);
    }
  } catch (...) {
    finish();
    throw;
  }
  finish();
  return result;
}

std::string format_mean_std(double mean, double stdev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, stdev);
  return buf;
}

std::string MultiSeedResult::formatted(double factor) const {
  return format_mean_std(mean * factor, stdev * factor);
}

std::pair<double, double> mean_and_stdev(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / double(values.size() - 1))};
}

MultiSeedResult multi_seed_run(std::span<const std::uint64_t> seeds,
                               const std::function<double(std::uint64_t)>& run_one) {
  if (seeds.size() < 2) throw InvalidArgument("multi_seed_run needs at least 2 seeds");
  MultiSeedResult out;
  for (std::uint64_t seed : seeds) {
    try {
      const double value = run_one(seed);
      out.seeds.push_back(seed);
      out.values.push_back(value);
    } catch (const std::exception& e) {
      out.failures.push_back({seed, e.what()});
    }
  }
  std::tie(out.mean, out.stdev) = mean_and_stdev(out.values);
  return out;
}

}  // namespace semb
