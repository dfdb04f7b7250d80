#pragma once

#include <cstdint>
#include <vector>

#include "specsplit/hypercube.hpp"

namespace specsplit::synthetic {

/// Consecutive samples of make_dataset share a subject.
inline constexpr std::size_t kCapturesPerSubject = 2;

inline std::size_t subject_count(std::size_t count) {
  return (count + kCapturesPerSubject - 1) / kCapturesPerSubject;
}

/// Seeded stand-in for a small face-cube collection. Each subject has a
/// spectral ramp modulating a periodic spatial texture whose phase walks
/// around a circle; its captures differ by a small jitter, so every sample
/// has one close neighbour while the dataset mean is far from all of them.
/// Values stay inside [0.05, 0.95].
std::vector<HyperCube> make_dataset(std::size_t count, std::size_t height, std::size_t width,
                                    std::size_t bands, std::uint64_t seed);

/// Uniform random cube in [0,1).
HyperCube random_cube(std::size_t height, std::size_t width, std::size_t bands, std::uint64_t seed);

}  // namespace specsplit::synthetic
