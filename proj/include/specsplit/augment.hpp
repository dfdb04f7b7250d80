#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "specsplit/hypercube.hpp"

namespace specsplit::augment {

/// Parameters of the patch-wise self-representation synthesis.
struct SynthesisConfig {
  double sigma = 1.0;          // used by synthesize_sample
  std::size_t patch_size = 8;
  std::size_t patch_overlap = 4;
  std::vector<double> sigmas{0.3, 1.0, 3.0};  // one synthetic sample per value in expand_dataset

  void validate() const;
};

/// Convex combination weights over the non-target samples.
struct WeightVector {
  std::vector<double> weights;
};

/// Mean squared Euclidean distance from target to each of the others.
double mean_sq_distance(std::span<const double> target,
                        std::span<const std::span<const double>> others);

/// Gaussian similarity weights exp(-d_j / (sigma^2 G)), normalised to sum 1.
/// G = 0 (all others coincide with the target) yields uniform weights.
WeightVector similarity_weights(std::span<const double> target,
                                std::span<const std::span<const double>> others, double sigma);

/// Synthesises a new version of dataset[index] as a similarity-weighted
/// combination of the co-located patches of every other cube, patch by patch.
/// Overlapping patch estimates are averaged; the result is clipped to [0,1].
HyperCube synthesize_sample(std::size_t index, std::span<const HyperCube> dataset,
                            const SynthesisConfig& config);

struct ProvenanceEntry {
  std::size_t output_index = 0;
  std::size_t source_index = 0;
  enum class Kind { Original, Self, Flip } kind = Kind::Original;
  double sigma = 0.0;  // only meaningful for Kind::Self
};

struct ExpandedDataset {
  std::vector<HyperCube> cubes;
  std::vector<ProvenanceEntry> manifest;
};

/// Originals, then one synthetic sample per (index, sigma) in index-major
/// order, then (optionally) the horizontal flip of everything before.
/// threads > 1 evaluates the synthesis jobs concurrently; output order does
/// not depend on it.
ExpandedDataset expand_dataset(std::span<const HyperCube> dataset, const SynthesisConfig& config,
                               bool include_symmetry, unsigned threads = 1);

nlohmann::ordered_json manifest_to_json(const std::vector<ProvenanceEntry>& manifest);

}  // namespace specsplit::augment
