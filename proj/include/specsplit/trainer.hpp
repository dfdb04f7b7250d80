#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "specsplit/error.hpp"
#include "specsplit/hypercube.hpp"
#include "specsplit/metrics.hpp"
#include "specsplit/ssanet.hpp"

namespace specsplit::trainer {

enum class Loss { L1, L2 };

struct TrainConfig {
  double lr0 = 1e-4;
  double decay_factor = 0.1;
  int decay_every = 30;  // epochs
  int epochs = 60;
  int batch_size = 4;
  Loss loss = Loss::L1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// lr0 * decay_factor^floor(epoch / decay_every).
double lr_schedule(int epoch, const TrainConfig& config);

struct SamplePair {
  HyperCube lr;
  HyperCube hr;
};

/// Builds (bicubic-down(hr), hr) pairs.
std::vector<SamplePair> make_pairs(std::span<const HyperCube> hr, int scale);

/// Seeded split into (train, holdout) indices; the holdout takes
/// round(fraction * n) items, at least one when n > 1 and fraction > 0.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<metrics::MetricReport> validation;
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<EpochRecord> epochs;
  std::vector<double> lr_trace;  // one entry per epoch
  int best_epoch = -1;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ssanet::ParamSet params;  // best-validation parameters (last, without validation data)
  ssanet::ParamSet last;
  TrainLog log;
};

struct TrainOptions {
  std::optional<ssanet::ParamSet> initial;  // otherwise init_params(config, seed)
  std::optional<std::filesystem::path> checkpoint_dir;  // best.ssap / last.ssap
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Thrown on a non-finite loss; carries the parameters from before the
/// offending step.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, ssanet::ParamSet last_good)
      : DivergenceError(what), last_good_(std::move(last_good)) {}
  const ssanet::ParamSet& last_good() const { return last_good_; }

 private:
  ssanet::ParamSet last_good_;
};

/// Adam with bias correction, state kept per conv tensor.
class Adam {
 public:
  Adam(const ssanet::ParamSet& shape, double beta1, double beta2, double eps);
  void step(ssanet::ParamSet& params, const ssanet::ParamSet& grads, double lr);
  long steps() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  ssanet::ParamSet m_;
  ssanet::ParamSet v_;
};

/// Loss of output against target; writes dLoss/doutput when grad is non-null.
double loss_and_grad(const nn::Tensor& output, const HyperCube& target, Loss loss,
                     nn::Tensor* grad);

/// Mean loss over a batch and the gradient of that mean.
double batch_loss_and_grad(const ssanet::SSANetConfig& config, const ssanet::ParamSet& params,
                           std::span<const SamplePair* const> batch, Loss loss,
                           ssanet::ParamSet* grads);

TrainResult train(const ssanet::SSANetConfig& config, const TrainConfig& tconfig,
                  std::span<const SamplePair> train_pairs, std::span<const SamplePair> val_pairs,
                  const TrainOptions& options = {});

struct Evaluation {
  metrics::MetricReport mean;
  std::vector<metrics::MetricReport> per_image;
};

/// Forward every LR input, clip to [0,1] and score against its HR cube.
Evaluation evaluate_model(const ssanet::ParamSet& params, const ssanet::SSANetConfig& config,
                          std::span<const SamplePair> test_pairs);

/// JSON-lines rendering of the log: one record per epoch plus a summary line.
std::string log_to_jsonl(const TrainLog& log, bool include_timing = true);

}  // namespace specsplit::trainer
