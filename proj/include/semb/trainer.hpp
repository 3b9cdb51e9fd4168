#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semb/model.hpp"
#include "semb/objectives.hpp"
#include "semb/pooling.hpp"

namespace semb {

// Fine-tuning rate for pretrained encoders. From-scratch desk models use
// TrainConfig's default of 1e-3 instead.
inline constexpr double kFineTuneLearningRate = 2e-5;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class Schedule { kWarmupLinear, kConstantAfterWarmup };
Schedule parse_schedule(std::string_view name);
std::string_view to_string(Schedule schedule);

struct TrainConfig {
  std::size_t batch_size = 16;
  double base_lr = 1e-3;
  double warmup_fraction = 0.10;
  std::size_t epochs = 1;
  std::uint64_t seed = 42;
  Objective objective = Objective::kRegression;
  ConcatMode concat = ConcatMode::kUVAbsDiff;
  PoolingStrategy pooling = PoolingStrategy::kMean;
  bool smart_batching = true;
  AdamConfig adam;
  std::optional<double> grad_clip_norm = 1.0;
  Schedule schedule = Schedule::kWarmupLinear;
  TargetScale target_scale = TargetScale::kUnit;
  double score_max = kStsScoreMax;
  double triplet_margin = kDefaultTripletMargin;
  std::size_t num_labels = 3;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update. Parameters without a gradient buffer are
// treated as having zero gradient.
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, AdamState<T>& state, double lr,
               const AdamConfig& config = {});

// Linear warm-up from 0 to base_lr over round(warmup_fraction * total_steps)
// steps, then linear decay to 0 at total_steps (or constant).
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(std::span<Tensor* const> params, double max_norm);

struct TrainingData {
  std::vector<PairExample> pairs;
  std::vector<TripletExample> triplets;

  std::size_t size() const { return pairs.size() + triplets.size(); }
};

struct BatchRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainHooks {
  std::function<void(const BatchRecord&)> on_batch;
  std::function<void(std::size_t epoch, const SentenceModel&)> on_epoch;
};

struct TrainResult {
  std::vector<BatchRecord> batches;
  std::size_t steps = 0;

  // Mean loss over the first / last `window` batches.
  double initial_loss(std::size_t window = 10) const;
  double final_loss(std::size_t window = 10) const;
};

// Runs epochs x batches of forward/backward/Adam on `model` in place. The
// encoder is shared by every tower. A classification head is created (or
// replaced when incompatible) from config.seed. Throws
// TrainingDivergedError on a non-finite loss.
TrainResult train(SentenceModel& model, const TrainingData& data, const TrainConfig& config,
                  const TrainHooks& hooks = {});

struct SeedFailure {
  std::uint64_t seed;
  std::string message;
};

struct MultiSeedResult {
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  std::vector<SeedFailure> failures;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation

  std::string formatted(double factor = 1.0) const;
};

// "%.2f ± %.2f"
std::string format_mean_std(double mean, double stdev);
// Sample mean and standard deviation (n - 1 denominator).
std::pair<double, double> mean_and_stdev(std::span<const double> values);

// Runs `run_one` for each seed; failures are recorded per seed. Needs >= 2 seeds.
MultiSeedResult multi_seed_run(std::span<const std::uint64_t> seeds,
                               const std::function<double(std::uint64_t)>& run_one);

}  // namespace semb
