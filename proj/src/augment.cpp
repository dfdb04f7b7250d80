#include "specsplit/augment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "specsplit/error.hpp"

namespace specsplit::augment {
namespace {

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Patch at (row, col) flattened band-major into out.
void gather_patch(const HyperCube& cube, std::size_t row, std::size_t col, std::size_t size,
                  std::vector<double>& out) {
  out.resize(size * size * cube.bands());
  std::size_t k = 0;
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) out[k++] = cube(b, row + r, col + c);
    }
  }
}

// Unnormalised similarities, shifted by the smallest distance so the nearest
// term is exp(0) and small sigmas cannot underflow every term. G = 0 gives
// all-ones.
std::vector<double> similarity_terms(std::span<const double> target,
                                     std::span<const std::span<const double>> others,
                                     double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("sigma must be positive");
  if (others.empty()) throw ArgumentError("similarity weights need at least one other sample");
  std::vector<double> d(others.size());
  double g = 0.0;
  for (std::size_t j = 0; j < others.size(); ++j) {
    if (others[j].size() != target.size()) throw ShapeError("patch length mismatch");
    d[j] = sq_distance(target, others[j]);
    g += d[j];
  }
  g /= static_cast<double>(others.size());
  if (g == 0.0) return std::vector<double>(others.size(), 1.0);
  const double dmin = *std::min_element(d.begin(), d.end());
  const double scale = sigma * sigma * g;
  for (auto& v : d) v = std::exp(-(v - dmin) / scale);
  return d;
}

}  // namespace

void SynthesisConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("sigma must be positive");
  for (double s : sigmas) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ArgumentError("every sigma must be positive");
  }
  if (patch_size == 0 || patch_overlap >= patch_size) {
    throw ArgumentError("need 0 <= patch_overlap < patch_size");
  }
}

double mean_sq_distance(std::span<const double> target,
                        std::span<const std::span<const double>> others) {
  if (others.empty()) throw ArgumentError("mean distance needs at least one other sample");
  double acc = 0.0;
  for (const auto& o : others) {
    if (o.size() != target.size()) throw ShapeError("patch length mismatch");
    acc += sq_distance(target, o);
  }
  return acc / static_cast<double>(others.size());
}

WeightVector similarity_weights(std::span<const double> target,
                                std::span<const std::span<const double>> others, double sigma) {
  WeightVector out;
  out.weights = similarity_terms(target, others, sigma);
  double total = 0.0;
  for (double s : out.weights) total += s;
  for (auto& w : out.weights) w /= total;
  return out;
}

HyperCube synthesize_sample(std::size_t index, std::span<const HyperCube> dataset,
                            const SynthesisConfig& config) {
  config.validate();
  if (dataset.size() < 2) throw ArgumentError("self-representation needs at least two samples");
  if (index >= dataset.size()) throw ArgumentError("sample index out of range");
  const HyperCube& target = dataset[index];
  for (const auto& c : dataset) {
    if (!c.same_dims(target)) throw ShapeError("dataset cubes differ in shape");
  }

  const std::size_t h = target.height();
  const std::size_t w = target.width();
  const std::size_t nb = target.bands();
  const std::size_t p = config.patch_size;
  const auto grid = make_patch_grid(h, w, p, config.patch_overlap);

  // Running means keep the result exact when every contribution is the same
  // value (e.g. N = 2, or identical donors).
  HyperCube out(h, w, nb);
  std::vector<std::size_t> coverage(h * w, 0);

  std::vector<double> target_patch;
  std::vector<double> estimate;
  std::vector<std::vector<double>> other_patches(dataset.size() - 1);
  std::vector<std::span<const double>> views(dataset.size() - 1);

  for (const auto& [row, col] : grid.origins) {
    gather_patch(target, row, col, p, target_patch);
    for (std::size_t j = 0, k = 0; j < dataset.size(); ++j) {
      if (j == index) continue;
      gather_patch(dataset[j], row, col, p, other_patches[k]);
      views[k] = other_patches[k];
      ++k;
    }
    const auto sims = similarity_terms(target_patch, views, config.sigma);

    estimate.assign(target_patch.size(), 0.0);
    double mass = 0.0;
    for (std::size_t k = 0; k < views.size(); ++k) {
      if (sims[k] == 0.0) continue;
      mass += sims[k];
      const double step = sims[k] / mass;
      for (std::size_t e = 0; e < estimate.size(); ++e) {
        estimate[e] += step * (other_patches[k][e] - estimate[e]);
      }
    }

    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) {
        const std::size_t pix = (row + r) * w + col + c;
        const double inv = 1.0 / static_cast<double>(++coverage[pix]);
        for (std::size_t b = 0; b < nb; ++b) {
          double& v = out.data()[b * h * w + pix];
          v += (estimate[(b * p + r) * p + c] - v) * inv;
        }
      }
    }
  }

  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  out.set_wavelengths_nm(target.wavelengths_nm());
  return out;
}

ExpandedDataset expand_dataset(std::span<const HyperCube> dataset, const SynthesisConfig& config,
                               bool include_symmetry, unsigned threads) {
  config.validate();
  ExpandedDataset out;
  out.cubes.assign(dataset.begin(), dataset.end());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.manifest.push_back({i, i, ProvenanceEntry::Kind::Original, 0.0});
  }

  if (!config.sigmas.empty()) {
    if (dataset.size() < 2) throw ArgumentError("self-representation needs at least two samples");
    const std::size_t n_sigma = config.sigmas.size();
    const std::size_t jobs = dataset.size() * n_sigma;
    std::vector<HyperCube> synthesized(jobs);

    auto run = [&](std::size_t job) {
      SynthesisConfig c = config;
      c.sigma = config.sigmas[job % n_sigma];
      synthesized[job] = synthesize_sample(job / n_sigma, dataset, c);
    };

    if (threads <= 1) {
      for (std::size_t job = 0; job < jobs; ++job) run(job);
    } else {
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t job = next++; job < jobs; job = next++) {
            try {
              run(job);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
    }

    for (std::size_t job = 0; job < jobs; ++job) {
      out.manifest.push_back({out.cubes.size(), job / n_sigma, ProvenanceEntry::Kind::Self,
                              config.sigmas[job % n_sigma]});
      out.cubes.push_back(std::move(synthesized[job]));
    }
  }

  if (include_symmetry) {
    const std::size_t n = out.cubes.size();
    for (std::size_t i = 0; i < n; ++i) {
      out.cubes.push_back(hflip(out.cubes[i]));
      out.manifest.push_back({n + i, i, ProvenanceEntry::Kind::Flip, 0.0});
    }
  }
  return out;
}

nlohmann::ordered_json manifest_to_json(const std::vector<ProvenanceEntry>& manifest) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : manifest) {
    nlohmann::ordered_json j;
    j["index"] = e.output_index;
    j["source"] = e.source_index;
    switch (e.kind) {
      case ProvenanceEntry::Kind::Original:
        j["kind"] = "original";
        break;
      case ProvenanceEntry::Kind::Self:
        j["kind"] = "self";
        j["sigma"] = e.sigma;
        break;
      case ProvenanceEntry::Kind::Flip:
        j["kind"] = "flip";
        break;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace specsplit::augment
