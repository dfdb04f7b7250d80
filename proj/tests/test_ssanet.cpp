#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "specsplit/error.hpp"
#include "specsplit/ssanet.hpp"
#include "test_util.hpp"

using namespace specsplit;
using specsplit::nn::Conv2d;
using specsplit::nn::Tensor;
namespace sn = specsplit::ssanet;

namespace {

Tensor random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Tensor t(c, h, w);
  for (auto& v : t.data) v = oracle::unit(rng) - 0.5;
  return t;
}

Conv2d random_conv(std::size_t in, std::size_t out, std::size_t k, std::mt19937_64& rng) {
  Conv2d c(in, out, k);
  for (auto& v : c.weight) v = oracle::unit(rng) - 0.5;
  for (auto& v : c.bias) v = oracle::unit(rng) - 0.5;
  return c;
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d matches direct convolution") {
  std::mt19937_64 rng(1);
  Tensor x(1, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) x.data[i] = static_cast<double>(i + 1);
  Conv2d k(1, 1, 3);
  k.weight = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  k.bias = {0.5};
  const auto y = nn::conv2d(x, k);
  CHECK(max_diff(y, oracle::conv(x, k)) < 1e-10);
  CHECK(y(0, 1, 1) == doctest::Approx(2 + 4 + 6 + 8 - 20 + 0.5));

  for (std::size_t kernel : {1u, 3u}) {
    const auto xr = random_tensor(3, 5, 7, rng);
    const auto kr = random_conv(3, 4, kernel, rng);
    CHECK(max_diff(nn::conv2d(xr, kr), oracle::conv(xr, kr)) < 1e-12);
  }
  CHECK_THROWS_AS(nn::conv2d(random_tensor(2, 3, 3, rng), random_conv(3, 1, 3, rng)), ShapeError);
}

TEST_CASE("conv2d backward is the adjoint of the forward") {
  std::mt19937_64 rng(2);
  for (std::size_t kernel : {1u, 3u}) {
    const auto x = random_tensor(2, 4, 5, rng);
    const auto k = random_conv(2, 3, kernel, rng);
    const auto dy = random_tensor(3, 4, 5, rng);
    Conv2d g(2, 3, kernel);
    const auto dx = nn::conv2d_backward(x, dy, k, g);
    // <dy, conv(x) - b> == <dx, x>   (linearity in x)
    Conv2d nob = k;
    std::fill(nob.bias.begin(), nob.bias.end(), 0.0);
    const auto y = nn::conv2d(x, nob);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) lhs += dy.data[i] * y.data[i];
    for (std::size_t i = 0; i < x.data.size(); ++i) rhs += dx.data[i] * x.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    // <dy, conv_w(x)> == <dW, W> for the weight gradient
    double wdot = 0;
    for (std::size_t i = 0; i < k.weight.size(); ++i) wdot += g.weight[i] * k.weight[i];
    CHECK(lhs == doctest::Approx(wdot).epsilon(1e-12));
    double bsum = 0;
    for (double v : dy.data) bsum += v;
    double gb = 0;
    for (double v : g.bias) gb += v;
    CHECK(gb == doctest::Approx(bsum).epsilon(1e-12));
  }
}

TEST_CASE("pixel shuffle") {
  std::mt19937_64 rng(3);
  const auto x = random_tensor(8, 3, 2, rng);
  const auto y = nn::pixel_shuffle(x, 2);
  CHECK(y.channels == 2);
  CHECK(y.height == 6);
  CHECK(y.width == 4);
  CHECK(y == oracle::shuffle(x, 2));
  CHECK(nn::pixel_unshuffle(y, 2) == x);
  const auto x4 = random_tensor(32, 2, 2, rng);
  CHECK(nn::pixel_shuffle(x4, 4) == oracle::shuffle(x4, 4));
  CHECK_THROWS_AS(nn::pixel_shuffle(random_tensor(6, 2, 2, rng), 2), ShapeError);
}

TEST_CASE("band splitting") {
  auto starts = [](const std::vector<sn::BandRange>& rs) {
    std::vector<std::size_t> s;
    for (const auto& r : rs) s.push_back(r.first);
    return s;
  };
  const auto singles = sn::split_bands(33, 1, 0);
  CHECK(singles.size() == 33);
  CHECK(singles[32] == sn::BandRange{32, 1});
  CHECK(sn::split_bands(33, 33, 0) == std::vector<sn::BandRange>{{0, 33}});
  CHECK(starts(sn::split_bands(33, 4, 1)) == std::vector<std::size_t>{0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 29});
  CHECK(starts(sn::split_bands(33, 8, 2)) == std::vector<std::size_t>{0, 6, 12, 18, 24, 25});
  for (const auto& r : sn::split_bands(33, 8, 2)) CHECK(r.size == 8);
  CHECK_THROWS_AS(sn::split_bands(4, 2, 2), ArgumentError);
  CHECK_THROWS_AS(sn::split_bands(4, 5, 0), ArgumentError);
}

TEST_CASE("SSRB") {
  std::mt19937_64 rng(4);
  const auto x = random_tensor(3, 5, 5, rng);
  sn::SsrbParams zero{Conv2d(3, 3, 3), Conv2d(3, 3, 1)};
  CHECK(sn::ssrb_forward(x, zero) == x);

  sn::SsrbParams p{random_conv(3, 3, 3, rng), random_conv(3, 3, 1, rng)};
  const auto y = sn::ssrb_forward(x, p);
  CHECK(y.same_shape(x));
  auto act = oracle::conv(x, p.spatial);
  for (auto& v : act.data) v = std::max(v, 0.0);
  auto expect = oracle::conv(act, p.spectral);
  for (std::size_t i = 0; i < expect.data.size(); ++i) expect.data[i] += x.data[i];
  CHECK(max_diff(y, expect) < 1e-12);
}

TEST_CASE("upsampler") {
  std::mt19937_64 rng(5);
  Tensor x(1, 2, 2);
  x.data = {1, 2, 3, 4};
  Conv2d k(1, 4, 3);
  // output channel q copies the input scaled by (q + 1)
  for (std::size_t q = 0; q < 4; ++q) k.weight[q * 9 + 4] = static_cast<double>(q + 1);
  const auto y = sn::upsample(x, 2, k);
  CHECK(y.height == 4);
  CHECK(y.width == 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const double src = x(0, r / 2, c / 2);
      const double q = static_cast<double>((r % 2) * 2 + (c % 2));
      CHECK(y(0, r, c) == src * (q + 1));
    }

  // channel c*f*f + k copies channel c: constant in, constant out
  Tensor cst(2, 3, 3, 0.7);
  Conv2d copy(2, 8, 1);
  for (std::size_t o = 0; o < 8; ++o) copy.weight[o * 2 + o / 4] = 1.0;
  const auto up = sn::upsample(cst, 2, copy);
  for (double v : up.data) CHECK(v == 0.7);
  CHECK_THROWS_AS(sn::upsample(cst, 3, copy), ArgumentError);
}

TEST_CASE("aggregation") {
  std::mt19937_64 rng(6);
  const auto x = random_tensor(33, 4, 4, rng);
  const auto ranges = sn::split_bands(33, 4, 1);
  std::vector<Tensor> parts;
  for (const auto& r : ranges) {
    Tensor t(r.size, 4, 4);
    std::copy_n(x.data.begin() + r.first * 16, r.size * 16, t.data.begin());
    parts.push_back(t);
  }
  CHECK(max_diff(sn::aggregate(parts, ranges, 33), x) < 1e-9);

  Tensor a(2, 1, 1), b(2, 1, 1);
  a.data = {0.2, 0.4};
  b.data = {0.8, 0.6};
  const auto avg = sn::aggregate({a, b}, {{0, 2}, {1, 2}}, 3);
  CHECK(avg.data[0] == 0.2);
  CHECK(avg.data[1] == doctest::Approx(0.6));
  CHECK(avg.data[2] == 0.6);

  // order in which groups are handed over does not matter
  std::vector<Tensor> rev(parts.rbegin(), parts.rend());
  std::vector<sn::BandRange> rev_ranges(ranges.rbegin(), ranges.rend());
  CHECK(sn::aggregate(rev, rev_ranges, 33) == sn::aggregate(parts, ranges, 33));
  CHECK_THROWS_AS(sn::aggregate({a}, {{0, 2}}, 3), std::logic_error);
}

TEST_CASE("config validation and presets") {
  const auto d = sn::default_config(33, 2);
  CHECK(d.placement() == sn::Placement{1, 2, 1, 1});
  CHECK(d.stages[0].n_ssrb == 12);
  CHECK(d.stages[3].channels == 192);
  CHECK(d.stages[2].group_size == 8);
  CHECK(sn::default_placement(4) == sn::Placement{1, 2, 1, 2});
  CHECK(sn::default_placement(8) == sn::Placement{2, 1, 2, 2});
  CHECK_THROWS_AS(sn::default_placement(3), ArgumentError);

  auto bad = d;
  bad.stages[1].up_factor = 4;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = d;
  bad.stages.pop_back();
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad = d;
  bad.stages[3].group_size = 8;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);

  const auto j = sn::config_to_json(sn::miniature_config(4));
  CHECK(sn::config_from_json(nlohmann::json::parse(j.dump())) == sn::miniature_config(4));
}

TEST_CASE("init is seeded and finite") {
  const auto cfg = sn::miniature_config(2);
  const auto a = sn::init_params(cfg, 5);
  CHECK(a == sn::init_params(cfg, 5));
  CHECK_FALSE(a == sn::init_params(cfg, 6));
  a.for_each_conv([](const std::string&, const Conv2d& c) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.in_channels * c.kernel * c.kernel));
    for (double w : c.weight) CHECK(std::abs(w) <= bound);
    for (double b : c.bias) CHECK(b == 0.0);
    CHECK(c.weight.size() == c.in_channels * c.out_channels * c.kernel * c.kernel);
  });
  std::vector<std::string> names;
  a.for_each_conv([&](const std::string& n, const Conv2d&) { names.push_back(n); });
  CHECK(names.front() == "stage1.head");
  CHECK(std::find(names.begin(), names.end(), "stage2.upsampler") != names.end());
  CHECK(names.back() == "output");
}

TEST_CASE("forward shapes and the global skip identity") {
  std::mt19937_64 rng(7);
  const auto lr = oracle::random_cube(8, 8, 33, rng);
  const auto cfg = sn::default_config(33, 2);
  // zero final conv and zero residual paths: output is bicubic(lr) exactly
  const auto zero = sn::zero_params(cfg);
  const auto out = sn::forward(lr, cfg, zero);
  CHECK(out.height() == 16);
  CHECK(out.width() == 16);
  CHECK(out.bands() == 33);
  CHECK(out == bicubic_resample(lr, 2, ResampleDirection::Up));

  const auto mini = sn::miniature_config(4);
  const auto lr4 = oracle::random_cube(6, 5, 4, rng);
  const auto y = sn::forward(lr4, mini, sn::init_params(mini, 1));
  CHECK(y.height() == 24);
  CHECK(y.width() == 20);
  for (double v : y.data()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK_THROWS_AS(sn::forward(oracle::random_cube(6, 5, 3, rng), mini, sn::init_params(mini, 1)), ShapeError);
}

TEST_CASE("shared branch weights give identical group outputs") {
  std::mt19937_64 rng(8);
  const auto cfg = sn::miniature_config(2);
  const auto params = sn::init_params(cfg, 2);
  const auto g = random_tensor(2, 4, 4, rng);
  const auto y1 = sn::branch_forward(g, cfg.stages[1], params.stages[1]);
  const auto y2 = sn::branch_forward(g, cfg.stages[1], params.stages[1]);
  CHECK(y1 == y2);
  CHECK(y1.height == 8);
  CHECK(y1.channels == 2);
}

TEST_CASE("threaded forward is bit identical") {
  std::mt19937_64 rng(9);
  auto cfg = sn::default_config(33, 2);
  for (auto& s : cfg.stages) {
    s.n_ssrb = 1;
    s.channels = 8;
  }
  const auto params = sn::init_params(cfg, 3);
  const auto lr = oracle::random_cube(6, 6, 33, rng);
  sn::ForwardOptions four;
  four.threads = 4;
  CHECK(sn::forward(lr, cfg, params) == sn::forward(lr, cfg, params, four));
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp;
  const auto cfg = sn::miniature_config(8);
  const auto params = sn::init_params(cfg, 4);
  sn::save_checkpoint(tmp.path / "m.ssap", cfg, params);
  const auto [cfg2, p2] = sn::load_checkpoint(tmp.path / "m.ssap");
  CHECK(cfg2 == cfg);
  // stored as f32
  auto a = params;
  a.for_each_conv([](const std::string&, Conv2d& c) {
    for (auto& w : c.weight) w = static_cast<double>(static_cast<float>(w));
  });
  CHECK(p2 == a);

  const std::string bytes = slurp(tmp.path / "m.ssap");
  CHECK(bytes.rfind("SSAP\n", 0) == 0);
  spit(tmp.path / "short.ssap", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(sn::load_checkpoint(tmp.path / "short.ssap"), TruncationError);
  spit(tmp.path / "bad.ssap", "SSAQ" + bytes.substr(4));
  CHECK_THROWS_AS(sn::load_checkpoint(tmp.path / "bad.ssap"), FormatError);
  CHECK_THROWS_AS(sn::load_checkpoint(tmp.path / "none.ssap"), IoError);
}
