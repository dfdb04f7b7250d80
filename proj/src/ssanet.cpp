#include "specsplit/ssanet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "specsplit/error.hpp"

namespace specsplit::ssanet {
namespace {

bool is_upsampling_factor(int f) { return f == 1 || f == 2 || f == 4 || f == 8; }

std::string stage_name(std::size_t s) { return "stage" + std::to_string(s + 1); }

nn::Tensor slice_bands(const nn::Tensor& x, const BandRange& range) {
  nn::Tensor out(range.size, x.height, x.width);
  std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(range.first * x.plane_size()),
              range.size * x.plane_size(), out.data.begin());
  return out;
}

// Canonical (ascending first band) evaluation order of a stage's groups.
std::vector<std::size_t> canonical_order(const std::vector<BandRange>& ranges) {
  std::vector<std::size_t> order(ranges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranges[a].first < ranges[b].first;
  });
  return order;
}

std::vector<std::size_t> coverage_counts(const std::vector<BandRange>& ranges, std::size_t bands) {
  std::vector<std::size_t> count(bands, 0);
  for (const auto& r : ranges) {
    if (r.first + r.size > bands) throw ShapeError("band range exceeds band count");
    for (std::size_t b = r.first; b < r.first + r.size; ++b) ++count[b];
  }
  for (std::size_t b = 0; b < bands; ++b) {
    if (count[b] == 0) throw std::logic_error("band " + std::to_string(b) + " not covered by any group");
  }
  return count;
}

nn::Tensor branch_forward_traced(const nn::Tensor& group_input, const StageConfig& stage,
                                 const StageParams& params, BranchTrace* trace) {
  if (group_input.channels != stage.group_size) {
    throw ShapeError("branch expects " + std::to_string(stage.group_size) + " bands, got " +
                     std::to_string(group_input.channels));
  }
  if (trace) {
    trace->input = group_input;
    trace->blocks.resize(params.blocks.size());
  }
  nn::Tensor x = nn::conv2d(group_input, params.head);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const auto& block = params.blocks[i];
    nn::Tensor pre = nn::conv2d(x, block.spatial);
    nn::Tensor residual = nn::conv2d(nn::relu(pre), block.spectral);
    if (trace) {
      trace->blocks[i].input = x;
      trace->blocks[i].pre_relu = std::move(pre);
    }
    nn::add_inplace(x, residual);
  }
  if (stage.up_factor > 1) {
    if (!params.upsampler) throw ShapeError("stage has an up factor but no upsampler weights");
    if (trace) trace->upsampler_input = x;
    x = upsample(x, stage.up_factor, *params.upsampler);
  }
  if (trace) trace->tail_input = x;
  return nn::conv2d(x, params.tail);
}

nn::Tensor branch_backward(const BranchTrace& trace, const nn::Tensor& dy, const StageConfig& stage,
                           const StageParams& params, StageParams& grads) {
  nn::Tensor d = nn::conv2d_backward(trace.tail_input, dy, params.tail, grads.tail);
  if (stage.up_factor > 1) {
    const auto f = static_cast<std::size_t>(stage.up_factor);
    d = nn::conv2d_backward(trace.upsampler_input, nn::pixel_unshuffle(d, f), *params.upsampler,
                            *grads.upsampler);
  }
  for (std::size_t i = params.blocks.size(); i-- > 0;) {
    const auto& block = params.blocks[i];
    auto& gblock = grads.blocks[i];
    const auto& bt = trace.blocks[i];
    nn::Tensor d_act = nn::conv2d_backward(nn::relu(bt.pre_relu), d, block.spectral, gblock.spectral);
    nn::Tensor d_pre = nn::relu_backward(bt.pre_relu, d_act);
    nn::add_inplace(d, nn::conv2d_backward(bt.input, d_pre, block.spatial, gblock.spatial));
  }
  return nn::conv2d_backward(trace.input, d, params.head, grads.head);
}

template <typename Fn>
void run_indexed(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void SSANetConfig::validate() const {
  if (bands == 0) throw ArgumentError("bands must be positive");
  if (stages.size() != 4) throw ArgumentError("SSANet needs exactly four stages");
  if (scale != 2 && scale != 4 && scale != 8) throw ArgumentError("scale must be 2, 4 or 8");
  int product = 1;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    const auto where = stage_name(s) + ": ";
    if (st.group_size == 0 || st.group_size > bands) throw ArgumentError(where + "bad group size");
    if (st.overlap >= st.group_size) throw ArgumentError(where + "overlap must be < group size");
    if (st.n_ssrb == 0) throw ArgumentError(where + "needs at least one SSRB");
    if (st.channels == 0) throw ArgumentError(where + "channels must be positive");
    if (!is_upsampling_factor(st.up_factor)) throw ArgumentError(where + "up factor must be 1, 2, 4 or 8");
    product *= st.up_factor;
  }
  if (product != scale) {
    throw ArgumentError("product of stage up factors (" + std::to_string(product) +
                        ") != scale (" + std::to_string(scale) + ")");
  }
  if (stages.back().group_size != bands) {
    throw ArgumentError("the last stage must treat all bands as one group");
  }
}

Placement SSANetConfig::placement() const {
  Placement p{1, 1, 1, 1};
  for (std::size_t s = 0; s < std::min<std::size_t>(4, stages.size()); ++s) p[s] = stages[s].up_factor;
  return p;
}

Placement default_placement(int scale) {
  switch (scale) {
    case 2: return {1, 2, 1, 1};
    case 4: return {1, 2, 1, 2};
    case 8: return {2, 1, 2, 2};
    default: throw ArgumentError("scale must be 2, 4 or 8");
  }
}

SSANetConfig with_placement(SSANetConfig config, const Placement& up) {
  for (std::size_t s = 0; s < config.stages.size() && s < up.size(); ++s) {
    config.stages[s].up_factor = up[s];
  }
  return config;
}

SSANetConfig default_config(std::size_t bands, int scale) {
  SSANetConfig c;
  c.bands = bands;
  c.scale = scale;
  c.stages = {
      {std::min<std::size_t>(1, bands), 0, 12, 64, 1},
      {std::min<std::size_t>(4, bands), std::min<std::size_t>(4, bands) > 1 ? 1u : 0u, 8, 128, 1},
      {std::min<std::size_t>(8, bands), std::min<std::size_t>(8, bands) > 2 ? 2u : 0u, 4, 128, 1},
      {bands, 0, 2, 192, 1},
  };
  c = with_placement(std::move(c), default_placement(scale));
  c.validate();
  return c;
}

SSANetConfig miniature_config(int scale) {
  SSANetConfig c;
  c.bands = 4;
  c.scale = scale;
  c.stages = {{1, 0, 1, 4, 1}, {2, 1, 1, 4, 1}, {4, 0, 1, 4, 1}, {4, 0, 1, 4, 1}};
  c = with_placement(std::move(c), default_placement(scale));
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const SSANetConfig& config) {
  nlohmann::ordered_json j;
  j["bands"] = config.bands;
  j["scale"] = config.scale;
  j["global_skip"] = config.global_skip;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : config.stages) {
    nlohmann::ordered_json sj;
    sj["group_size"] = s.group_size;
    sj["overlap"] = s.overlap;
    sj["n_ssrb"] = s.n_ssrb;
    sj["channels"] = s.channels;
    sj["up_factor"] = s.up_factor;
    stages.push_back(std::move(sj));
  }
  j["stages"] = std::move(stages);
  return j;
}

SSANetConfig config_from_json(const nlohmann::json& j) {
  SSANetConfig c;
  try {
    c.bands = j.at("bands").get<std::size_t>();
    c.scale = j.at("scale").get<int>();
    c.global_skip = j.value("global_skip", true);
    for (const auto& sj : j.at("stages")) {
      StageConfig s;
      s.group_size = sj.at("group_size").get<std::size_t>();
      s.overlap = sj.at("overlap").get<std::size_t>();
      s.n_ssrb = sj.at("n_ssrb").get<std::size_t>();
      s.channels = sj.at("channels").get<std::size_t>();
      s.up_factor = sj.at("up_factor").get<int>();
      c.stages.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<BandRange> split_bands(std::size_t bands, std::size_t group_size, std::size_t overlap) {
  if (group_size == 0 || overlap >= group_size || group_size > bands) {
    throw ArgumentError("split_bands needs 0 <= overlap < group_size <= bands (got bands=" +
                        std::to_string(bands) + ", group_size=" + std::to_string(group_size) +
                        ", overlap=" + std::to_string(overlap) + ")");
  }
  const std::size_t stride = group_size - overlap;
  std::vector<BandRange> ranges;
  for (std::size_t start = 0; start + group_size <= bands; start += stride) {
    ranges.push_back({start, group_size});
  }
  if (ranges.back().first + group_size < bands) ranges.push_back({bands - group_size, group_size});
  return ranges;
}

void ParamSet::for_each_conv(const std::function<void(const std::string&, nn::Conv2d&)>& fn) {
  for (std::size_t s = 0; s < stages.size(); ++s) {
    auto& st = stages[s];
    const auto prefix = stage_name(s);
    fn(prefix + ".head", st.head);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      const auto bp = prefix + ".ssrb" + std::to_string(b + 1);
      fn(bp + ".conv3x3", st.blocks[b].spatial);
      fn(bp + ".conv1x1", st.blocks[b].spectral);
    }
    if (st.upsampler) fn(prefix + ".upsampler", *st.upsampler);
    fn(prefix + ".tail", st.tail);
  }
  fn("output", output);
}

void ParamSet::for_each_conv(
    const std::function<void(const std::string&, const nn::Conv2d&)>& fn) const {
  const_cast<ParamSet*>(this)->for_each_conv(
      [&](const std::string& name, nn::Conv2d& conv) { fn(name, conv); });
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for_each_conv([&](const std::string&, const nn::Conv2d& c) { n += c.param_count(); });
  return n;
}

ParamSet zero_params(const SSANetConfig& config) {
  config.validate();
  ParamSet p;
  for (const auto& st : config.stages) {
    StageParams sp;
    sp.head = nn::Conv2d(st.group_size, st.channels, 3);
    for (std::size_t b = 0; b < st.n_ssrb; ++b) {
      sp.blocks.push_back({nn::Conv2d(st.channels, st.channels, 3),
                           nn::Conv2d(st.channels, st.channels, 1)});
    }
    if (st.up_factor > 1) {
      const auto uu = static_cast<std::size_t>(st.up_factor * st.up_factor);
      sp.upsampler = nn::Conv2d(st.channels, st.channels * uu, 3);
    }
    sp.tail = nn::Conv2d(st.channels, st.group_size, 1);
    p.stages.push_back(std::move(sp));
  }
  p.output = nn::Conv2d(config.bands, config.bands, 3);
  return p;
}

ParamSet init_params(const SSANetConfig& config, std::uint64_t seed) {
  ParamSet p = zero_params(config);
  std::mt19937_64 rng(seed);
  p.for_each_conv([&](const std::string&, nn::Conv2d& conv) {
    const double fan_in = static_cast<double>(conv.in_channels * conv.kernel * conv.kernel);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& w : conv.weight) {
      // 53 random mantissa bits; avoids the implementation-defined
      // uniform_real_distribution so weights are identical across toolchains.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      w = (2.0 * u - 1.0) * bound;
    }
  });
  return p;
}

nn::Tensor to_tensor(const HyperCube& cube) {
  nn::Tensor t(cube.bands(), cube.height(), cube.width());
  t.data = cube.data();
  return t;
}

HyperCube to_cube(const nn::Tensor& t) { return HyperCube(t.height, t.width, t.channels, t.data); }

nn::Tensor ssrb_forward(const nn::Tensor& x, const SsrbParams& block) {
  if (x.channels != block.spatial.in_channels || block.spectral.out_channels != x.channels) {
    throw ShapeError("SSRB channel mismatch");
  }
  nn::Tensor y = nn::conv2d(nn::relu(nn::conv2d(x, block.spatial)), block.spectral);
  nn::add_inplace(y, x);
  return y;
}

nn::Tensor upsample(const nn::Tensor& x, int factor, const nn::Conv2d& conv) {
  if (factor != 2 && factor != 4 && factor != 8) {
    throw ArgumentError("upsampling factor must be 2, 4 or 8, got " + std::to_string(factor));
  }
  const auto f = static_cast<std::size_t>(factor);
  if (conv.out_channels != x.channels * f * f) {
    throw ShapeError("upsampler conv must produce channels * factor^2 maps");
  }
  return nn::pixel_shuffle(nn::conv2d(x, conv), f);
}

nn::Tensor branch_forward(const nn::Tensor& group_input, const StageConfig& stage,
                          const StageParams& params) {
  return branch_forward_traced(group_input, stage, params, nullptr);
}

nn::Tensor aggregate(const std::vector<nn::Tensor>& group_outputs,
                     const std::vector<BandRange>& ranges, std::size_t bands) {
  if (group_outputs.size() != ranges.size() || group_outputs.empty()) {
    throw ShapeError("aggregate needs one output per band range");
  }
  const auto& first = group_outputs.front();
  for (std::size_t g = 0; g < ranges.size(); ++g) {
    const auto& t = group_outputs[g];
    if (t.height != first.height || t.width != first.width || t.channels != ranges[g].size) {
      throw ShapeError("group output " + std::to_string(g) + " does not match its band range");
    }
  }
  const auto count = coverage_counts(ranges, bands);
  nn::Tensor out(bands, first.height, first.width);
  const std::size_t plane = out.plane_size();
  for (std::size_t g : canonical_order(ranges)) {
    const auto& r = ranges[g];
    for (std::size_t k = 0; k < r.size; ++k) {
      const auto src = group_outputs[g].plane(k);
      auto dst = out.plane(r.first + k);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
  for (std::size_t b = 0; b < bands; ++b) {
    if (count[b] == 1) continue;
    const auto n = static_cast<double>(count[b]);
    for (auto& v : out.plane(b)) v /= n;
  }
  return out;
}

nn::Tensor forward_tensor(const nn::Tensor& lr, const SSANetConfig& config,
                          const ParamSet& params, ForwardTrace* trace,
                          const ForwardOptions& options) {
  config.validate();
  if (lr.channels != config.bands) {
    throw ShapeError("input has " + std::to_string(lr.channels) + " bands, model expects " +
                     std::to_string(config.bands));
  }
  if (params.stages.size() != config.stages.size()) throw ShapeError("parameter/config stage mismatch");
  if (trace) trace->stages.assign(config.stages.size(), {});

  nn::Tensor x = lr;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& stage = config.stages[s];
    const auto ranges = split_bands(config.bands, stage.group_size, stage.overlap);
    std::vector<nn::Tensor> outputs(ranges.size());
    StageTrace* st = trace ? &trace->stages[s] : nullptr;
    if (st) {
      st->ranges = ranges;
      st->branches.assign(ranges.size(), {});
    }
    run_indexed(ranges.size(), options.threads, [&](std::size_t g) {
      outputs[g] = branch_forward_traced(slice_bands(x, ranges[g]), stage, params.stages[s],
                                         st ? &st->branches[g] : nullptr);
    });
    x = aggregate(outputs, ranges, config.bands);
    if (st) {
      st->out_height = x.height;
      st->out_width = x.width;
    }
  }
  if (trace) trace->final_input = x;
  nn::Tensor y = nn::conv2d(x, params.output);
  if (config.global_skip) {
    const auto skip = bicubic_resample(to_cube(lr), config.scale, ResampleDirection::Up);
    if (skip.height() != y.height || skip.width() != y.width) {
      throw ShapeError("network output and bicubic skip differ in size");
    }
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += skip.data()[i];
  }
  return y;
}

HyperCube forward(const HyperCube& lr, const SSANetConfig& config, const ParamSet& params,
                  const ForwardOptions& options) {
  nn::Tensor y = forward_tensor(to_tensor(lr), config, params, nullptr, options);
  for (auto& v : y.data) v = std::clamp(v, 0.0, 1.0);
  HyperCube out = to_cube(y);
  out.set_wavelengths_nm(lr.wavelengths_nm());
  return out;
}

void backward(const ForwardTrace& trace, const nn::Tensor& grad_output,
              const SSANetConfig& config, const ParamSet& params, ParamSet& grads) {
  nn::Tensor d = nn::conv2d_backward(trace.final_input, grad_output, params.output, grads.output);
  for (std::size_t s = config.stages.size(); s-- > 0;) {
    const auto& stage = config.stages[s];
    const auto& st = trace.stages[s];
    const auto count = coverage_counts(st.ranges, config.bands);
    const nn::Tensor& stage_input_shape = st.branches.front().input;
    nn::Tensor d_input(config.bands, stage_input_shape.height, stage_input_shape.width);
    const std::size_t out_plane = d.plane_size();
    const std::size_t in_plane = d_input.plane_size();
    for (std::size_t g : canonical_order(st.ranges)) {
      const auto& r = st.ranges[g];
      nn::Tensor dy(r.size, d.height, d.width);
      for (std::size_t k = 0; k < r.size; ++k) {
        const double inv = 1.0 / static_cast<double>(count[r.first + k]);
        const auto src = d.plane(r.first + k);
        auto dst = dy.plane(k);
        for (std::size_t i = 0; i < out_plane; ++i) dst[i] = src[i] * inv;
      }
      const nn::Tensor dx = branch_backward(st.branches[g], dy, stage, params.stages[s], grads.stages[s]);
      for (std::size_t k = 0; k < r.size; ++k) {
        const auto src = dx.plane(k);
        auto dst = d_input.plane(r.first + k);
        for (std::size_t i = 0; i < in_plane; ++i) dst[i] += src[i];
      }
    }
    d = std::move(d_input);
  }
}

}  // namespace specsplit::ssanet
