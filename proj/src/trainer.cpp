#include "specsplit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace specsplit::trainer {
namespace {

// Uniform integer in [0, bound) from raw mt19937_64 output; portable across
// standard libraries (unlike uniform_int_distribution).
std::size_t draw_below(std::mt19937_64& rng, std::size_t bound) {
  return static_cast<std::size_t>(rng() % bound);
}

void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[draw_below(rng, i)]);
}

void check_pair(const SamplePair& p, const ssanet::SSANetConfig& config) {
  if (p.lr.bands() != config.bands || p.hr.bands() != config.bands) {
    throw ShapeError("training pair band count does not match the model");
  }
  const auto s = static_cast<std::size_t>(config.scale);
  if (p.hr.height() != p.lr.height() * s || p.hr.width() != p.lr.width() * s) {
    throw ShapeError("HR cube is not the LR cube scaled by " + std::to_string(config.scale));
  }
}

bool all_finite(const ssanet::ParamSet& p) {
  bool ok = true;
  p.for_each_conv([&](const std::string&, const nn::Conv2d& c) {
    for (double v : c.weight) ok = ok && std::isfinite(v);
    for (double v : c.bias) ok = ok && std::isfinite(v);
  });
  return ok;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(decay_factor > 0.0)) throw ArgumentError("decay factor must be positive");
  if (decay_every <= 0) throw ArgumentError("decay interval must be positive");
  if (epochs < 0) throw ArgumentError("epoch count must be non-negative");
  if (batch_size <= 0) throw ArgumentError("batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
    throw ArgumentError("invalid Adam hyper-parameters");
  }
}

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0) throw ArgumentError("epoch must be non-negative");
  const int k = epoch / config.decay_every;
  // Dividing by an integral 1/decay keeps decade steps exact (1e-4 -> 1e-5).
  const double inverse = 1.0 / config.decay_factor;
  if (std::abs(inverse - std::round(inverse)) < 1e-12) {
    return config.lr0 / std::pow(std::round(inverse), k);
  }
  return config.lr0 * std::pow(config.decay_factor, k);
}

std::vector<SamplePair> make_pairs(std::span<const HyperCube> hr, int scale) {
  std::vector<SamplePair> pairs;
  pairs.reserve(hr.size());
  for (const auto& cube : hr) {
    pairs.push_back({bicubic_resample(cube, scale, ResampleDirection::Down), cube});
  }
  return pairs;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  shuffle_indices(idx, rng);
  std::size_t hold = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  if (fraction > 0.0 && n > 1) hold = std::max<std::size_t>(hold, 1);
  hold = std::min(hold, n > 0 ? n - 1 : 0);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(hold));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(hold), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

Adam::Adam(const ssanet::ParamSet& shape, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(shape), v_(shape) {
  auto zero = [](const std::string&, nn::Conv2d& c) {
    std::fill(c.weight.begin(), c.weight.end(), 0.0);
    std::fill(c.bias.begin(), c.bias.end(), 0.0);
  };
  m_.for_each_conv(zero);
  v_.for_each_conv(zero);
}

void Adam::step(ssanet::ParamSet& params, const ssanet::ParamSet& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::vector<const nn::Conv2d*> g;
  grads.for_each_conv([&](const std::string&, const nn::Conv2d& c) { g.push_back(&c); });
  std::vector<nn::Conv2d*> m;
  m_.for_each_conv([&](const std::string&, nn::Conv2d& c) { m.push_back(&c); });
  std::vector<nn::Conv2d*> v;
  v_.for_each_conv([&](const std::string&, nn::Conv2d& c) { v.push_back(&c); });

  auto update = [&](std::vector<double>& p, const std::vector<double>& gr, std::vector<double>& mm,
                    std::vector<double>& vv) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      mm[i] = beta1_ * mm[i] + (1.0 - beta1_) * gr[i];
      vv[i] = beta2_ * vv[i] + (1.0 - beta2_) * gr[i] * gr[i];
      p[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps_);
    }
  };
  std::size_t k = 0;
  params.for_each_conv([&](const std::string&, nn::Conv2d& c) {
    update(c.weight, g[k]->weight, m[k]->weight, v[k]->weight);
    update(c.bias, g[k]->bias, m[k]->bias, v[k]->bias);
    ++k;
  });
}

double loss_and_grad(const nn::Tensor& output, const HyperCube& target, Loss loss,
                     nn::Tensor* grad) {
  if (output.channels != target.bands() || output.height != target.height() ||
      output.width != target.width()) {
    throw ShapeError("network output and target differ in shape");
  }
  const std::size_t n = output.data.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) *grad = nn::Tensor(output.channels, output.height, output.width);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = output.data[i] - target.data()[i];
    if (loss == Loss::L1) {
      acc += std::abs(d);
      if (grad) grad->data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
    } else {
      acc += d * d;
      if (grad) grad->data[i] = 2.0 * d * inv_n;
    }
  }
  return acc * inv_n;
}

double batch_loss_and_grad(const ssanet::SSANetConfig& config, const ssanet::ParamSet& params,
                           std::span<const SamplePair* const> batch, Loss loss,
                           ssanet::ParamSet* grads) {
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const SamplePair* pair : batch) {
    ssanet::ForwardTrace trace;
    const nn::Tensor out =
        ssanet::forward_tensor(ssanet::to_tensor(pair->lr), config, params, grads ? &trace : nullptr);
    nn::Tensor dout;
    total += loss_and_grad(out, pair->hr, loss, grads ? &dout : nullptr);
    if (grads) {
      for (auto& v : dout.data) v *= inv_b;
      ssanet::backward(trace, dout, config, params, *grads);
    }
  }
  return total * inv_b;
}

TrainResult train(const ssanet::SSANetConfig& config, const TrainConfig& tconfig,
                  std::span<const SamplePair> train_pairs, std::span<const SamplePair> val_pairs,
                  const TrainOptions& options) {
  config.validate();
  tconfig.validate();
  if (train_pairs.empty()) throw ArgumentError("training needs at least one pair");
  for (const auto& p : train_pairs) check_pair(p, config);
  for (const auto& p : val_pairs) check_pair(p, config);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  result.last = options.initial ? *options.initial : ssanet::init_params(config, tconfig.seed);
  if (!all_finite(result.last)) throw DataError("initial parameters contain non-finite values");
  result.params = result.last;

  Adam adam(result.last, tconfig.beta1, tconfig.beta2, tconfig.eps);
  std::mt19937_64 rng(tconfig.seed);
  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(tconfig.batch_size);
  double best_psnr = -std::numeric_limits<double>::infinity();
  const ssanet::ParamSet zero = ssanet::zero_params(config);

  for (int epoch = 0; epoch < tconfig.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, tconfig);
    result.log.lr_trace.push_back(lr);
    shuffle_indices(order, rng);

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<const SamplePair*> members;
      for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) {
        members.push_back(&train_pairs[order[k]]);
      }
      ssanet::ParamSet grads = zero;
      const double loss = batch_loss_and_grad(config, result.last, members, tconfig.loss, &grads);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(result.log.step_loss.size()),
                               result.last);
      }
      result.log.step_loss.push_back(loss);
      epoch_loss += loss;
      ++steps;
      adam.step(result.last, grads, lr);
    }

    EpochRecord record{epoch, lr, epoch_loss / static_cast<double>(steps), std::nullopt};
    bool improved = val_pairs.empty();
    if (!val_pairs.empty()) {
      record.validation = evaluate_model(result.last, config, val_pairs).mean;
      if (record.validation->psnr_db > best_psnr || result.log.best_epoch < 0) {
        best_psnr = record.validation->psnr_db;
        improved = true;
      }
    }
    if (improved) {
      result.params = result.last;
      result.log.best_epoch = epoch;
      if (options.checkpoint_dir) {
        ssanet::save_checkpoint(*options.checkpoint_dir / "best.ssap", config, result.params);
      }
    }
    result.log.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }
  if (options.checkpoint_dir) {
    ssanet::save_checkpoint(*options.checkpoint_dir / "last.ssap", config, result.last);
  }
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

Evaluation evaluate_model(const ssanet::ParamSet& params, const ssanet::SSANetConfig& config,
                          std::span<const SamplePair> test_pairs) {
  if (test_pairs.empty()) throw ArgumentError("evaluation needs at least one pair");
  Evaluation ev;
  for (const auto& p : test_pairs) {
    check_pair(p, config);
    const HyperCube sr = ssanet::forward(p.lr, config, params);
    ev.per_image.push_back(metrics::evaluate_all(sr, p.hr, config.scale));
  }
  ev.mean = metrics::mean_report(ev.per_image);
  return ev;
}

std::string log_to_jsonl(const TrainLog& log, bool include_timing) {
  std::string out;
  std::size_t step = 0;
  for (const auto& e : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["mean_loss"] = e.mean_loss;
    auto losses = nlohmann::ordered_json::array();
    const std::size_t per_epoch = log.epochs.empty() ? 0 : log.step_loss.size() / log.epochs.size();
    for (std::size_t k = 0; k < per_epoch && step < log.step_loss.size(); ++k) {
      losses.push_back(log.step_loss[step++]);
    }
    j["step_loss"] = std::move(losses);
    if (e.validation) j["validation"] = metrics::to_json(*e.validation, false);
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json summary;
  summary["best_epoch"] = log.best_epoch;
  summary["steps"] = log.step_loss.size();
  if (include_timing) summary["wall_seconds"] = log.wall_seconds;
  out += summary.dump() + "\n";
  return out;
}

}  // namespace specsplit::trainer
