#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "specsplit/hypercube.hpp"
#include "specsplit/tensor_ops.hpp"

namespace specsplit::ssanet {

/// One splitting/aggregation stage: bands are cut into overlapping groups of
/// group_size, each group runs through the same branch network.
struct StageConfig {
  std::size_t group_size = 1;
  std::size_t overlap = 0;
  std::size_t n_ssrb = 1;
  std::size_t channels = 64;
  int up_factor = 1;  // 1 = no upsampler in this stage

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

using Placement = std::array<int, 4>;

struct SSANetConfig {
  std::size_t bands = 33;
  std::vector<StageConfig> stages;
  int scale = 2;
  bool global_skip = true;  // add bicubic(lr) to the network output

  /// Throws ArgumentError when the stage list is malformed.
  void validate() const;
  Placement placement() const;

  friend bool operator==(const SSANetConfig&, const SSANetConfig&) = default;
};

/// Placement chosen for each scale: x2 (1,2,1,1), x4 (1,2,1,2), x8 (2,1,2,2).
Placement default_placement(int scale);

/// Group sizes (1, 4, 8, B), overlaps (0, 1, 2, 0), SSRBs (12, 8, 4, 2),
/// channels (64, 128, 128, 192).
SSANetConfig default_config(std::size_t bands, int scale);

/// Desk-scale variant: B = 4, group sizes (1, 2, 4, 4), one SSRB per stage,
/// four channels.
SSANetConfig miniature_config(int scale = 2);

SSANetConfig with_placement(SSANetConfig config, const Placement& up);

nlohmann::ordered_json config_to_json(const SSANetConfig& config);
SSANetConfig config_from_json(const nlohmann::json& j);

/// Inclusive-exclusive band interval [first, first + size).
struct BandRange {
  std::size_t first = 0;
  std::size_t size = 0;
  friend bool operator==(const BandRange&, const BandRange&) = default;
};

/// Starts 0, s, 2s, ... (s = group_size - overlap) while the group fits, then a
/// final group clamped to end at the last band if it is not already covered.
std::vector<BandRange> split_bands(std::size_t bands, std::size_t group_size, std::size_t overlap);

struct SsrbParams {
  nn::Conv2d spatial;   // 3x3, C -> C
  nn::Conv2d spectral;  // 1x1, C -> C
  friend bool operator==(const SsrbParams&, const SsrbParams&) = default;
};

struct StageParams {
  nn::Conv2d head;  // 3x3, g -> C
  std::vector<SsrbParams> blocks;
  std::optional<nn::Conv2d> upsampler;  // 3x3, C -> C*u*u
  nn::Conv2d tail;  // 1x1, C -> g
  friend bool operator==(const StageParams&, const StageParams&) = default;
};

/// Every learnable tensor of one network. Each stage holds a single copy
/// shared by all of its groups.
struct ParamSet {
  std::vector<StageParams> stages;
  nn::Conv2d output;  // 3x3, B -> B

  /// Visits every conv in a fixed order with a stable dotted name.
  void for_each_conv(const std::function<void(const std::string&, nn::Conv2d&)>& fn);
  void for_each_conv(const std::function<void(const std::string&, const nn::Conv2d&)>& fn) const;
  std::size_t scalar_count() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Correctly shaped, all zero.
ParamSet zero_params(const SSANetConfig& config);

/// Conv weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a seeded
/// mt19937_64; biases zero.
ParamSet init_params(const SSANetConfig& config, std::uint64_t seed);

nn::Tensor to_tensor(const HyperCube& cube);
HyperCube to_cube(const nn::Tensor& t);

/// y = x + conv1x1(relu(conv3x3(x))).
nn::Tensor ssrb_forward(const nn::Tensor& x, const SsrbParams& block);

/// conv3x3 to C*f*f channels, then sub-pixel rearrangement to C x fH x fW.
nn::Tensor upsample(const nn::Tensor& x, int factor, const nn::Conv2d& conv);

nn::Tensor branch_forward(const nn::Tensor& group_input, const StageConfig& stage,
                          const StageParams& params);

/// Per-band mean over the group outputs whose range covers the band. Groups
/// are combined in ascending range order whatever order they are passed in.
nn::Tensor aggregate(const std::vector<nn::Tensor>& group_outputs,
                     const std::vector<BandRange>& ranges, std::size_t bands);

/// Activations retained by forward_trace for the backward pass.
struct BlockTrace {
  nn::Tensor input;
  nn::Tensor pre_relu;
};

struct BranchTrace {
  nn::Tensor input;
  std::vector<BlockTrace> blocks;
  nn::Tensor upsampler_input;  // empty when the stage has no upsampler
  nn::Tensor tail_input;
};

struct StageTrace {
  std::vector<BandRange> ranges;
  std::vector<BranchTrace> branches;
  std::size_t out_height = 0;
  std::size_t out_width = 0;
};

struct ForwardTrace {
  std::vector<StageTrace> stages;
  nn::Tensor final_input;
};

struct ForwardOptions {
  unsigned threads = 1;  // branches of one stage evaluated concurrently
};

/// Unclipped network output for training. When trace is non-null it is
/// filled with what backward needs.
nn::Tensor forward_tensor(const nn::Tensor& lr, const SSANetConfig& config,
                          const ParamSet& params, ForwardTrace* trace = nullptr,
                          const ForwardOptions& options = {});

/// Inference: forward_tensor clipped to [0,1].
HyperCube forward(const HyperCube& lr, const SSANetConfig& config, const ParamSet& params,
                  const ForwardOptions& options = {});

/// Accumulates dL/dparams into grads given dL/doutput.
void backward(const ForwardTrace& trace, const nn::Tensor& grad_output,
              const SSANetConfig& config, const ParamSet& params, ParamSet& grads);

// Checkpoints (checkpoint.cpp). Layout: "SSAP" 0x0A, one JSON line with the
// config and the ordered tensor manifest, 0x0A, little-endian f32 payloads.
void save_checkpoint(const std::filesystem::path& path, const SSANetConfig& config,
                     const ParamSet& params);
std::pair<SSANetConfig, ParamSet> load_checkpoint(const std::filesystem::path& path);

}  // namespace specsplit::ssanet
