// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "specsplit/archsearch.hpp"
#include "specsplit/augment.hpp"
#include "specsplit/cli.hpp"
#include "specsplit/metrics.hpp"
#include "specsplit/ssanet.hpp"
#include "specsplit/synthetic.hpp"
#include "specsplit/trainer.hpp"
#include "test_util.hpp"

using namespace specsplit;
namespace sn = specsplit::ssanet;
namespace as = specsplit::archsearch;
namespace au = specsplit::augment;
namespace tr = specsplit::trainer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

nn::Tensor slice(const nn::Tensor& x, const sn::BandRange& r) {
  nn::Tensor out(r.size, x.height, x.width);
  std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(r.first * x.plane_size()), out.data.size(),
              out.data.begin());
  return out;
}

Outcome aggregation_identity() {
  std::mt19937_64 rng(1);
  nn::Tensor x(33, 6, 5);
  for (auto& v : x.data) v = oracle::unit(rng);
  double worst = 0.0;
  for (auto [g, o] : {std::pair{1, 0}, {4, 1}, {8, 2}, {33, 0}}) {
    const auto ranges = sn::split_bands(33, g, o);
    std::vector<nn::Tensor> parts;
    for (const auto& r : ranges) parts.push_back(slice(x, r));
    const auto y = sn::aggregate(parts, ranges, 33);
    for (std::size_t i = 0; i < x.data.size(); ++i) worst = std::max(worst, std::abs(y.data[i] - x.data[i]));
  }
  return {worst < 1e-9, fmt("max_abs_err=%.3g (< 1e-9)", worst)};
}

Outcome placement_counts() {
  std::set<sn::Placement> brute;
  for (int a = 0; a <= 3; ++a)
    for (int b = 0; b <= 3; ++b)
      for (int c = 0; c <= 3; ++c)
        for (int d = 0; d <= 3; ++d)
          if (a + b + c + d == 3) brute.insert({1 << a, 1 << b, 1 << c, 1 << d});
  const auto n2 = as::enumerate_placements(2).size();
  const auto n4 = as::enumerate_placements(4).size();
  const auto p8 = as::enumerate_placements(8);
  const bool same8 = std::set<sn::Placement>(p8.begin(), p8.end()) == brute;
  return {n2 == 4 && n4 == 10 && p8.size() == 20 && same8,
          fmt("x2=%zu (4) x4=%zu (10) x8=%zu (20, oracle %s)", n2, n4, p8.size(), same8 ? "agrees" : "differs")};
}

Outcome cost_orderings() {
  const auto base = sn::default_config(33, 2);
  auto at = [&](sn::Placement up) { return sn::with_placement(base, up); };
  const auto p1 = at({2, 1, 1, 1}), p2 = at({1, 2, 1, 1}), p3 = at({1, 1, 2, 1}), p4 = at({1, 1, 1, 2});
  const double m1 = as::count_params(p1) / 1e6, m2 = as::count_params(p2) / 1e6, m3 = as::count_params(p3) / 1e6,
               m4 = as::count_params(p4) / 1e6;
  const auto f1 = as::count_flops(p1, 64, 64), f2 = as::count_flops(p2, 64, 64), f3 = as::count_flops(p3, 64, 64),
             f4 = as::count_flops(p4, 64, 64);
  const bool params_ok = m4 > m2 && m2 == m3 && m3 > m1;
  const bool flops_ok = f1 > f2 && f2 > f3 && f3 > f4;
  return {params_ok && flops_ok,
          fmt("params(M) %.3f > %.3f == %.3f > %.3f; GFLOPs@64x64 %.1f > %.1f > %.1f > %.1f", m4, m2, m3, m1, f1 / 1e9,
              f2 / 1e9, f3 / 1e9, f4 / 1e9)};
}

Outcome synthesis_oracle() {
  std::mt19937_64 rng(4);
  au::SynthesisConfig cfg;
  cfg.patch_size = 2;
  cfg.patch_overlap = 1;
  double worst = 0.0, worst_sum = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<HyperCube> data;
    for (int i = 0; i < 3; ++i) data.push_back(oracle::random_cube(4, 4, 2, rng));
    cfg.sigma = 0.2 + 3.0 * oracle::unit(rng);
    for (std::size_t i = 0; i < 3; ++i) {
      worst = std::max(worst, max_abs_diff(au::synthesize_sample(i, data, cfg),
                                           oracle::synthesize(i, data, cfg.sigma, 2, 1)));
      std::vector<std::span<const double>> others;
      for (std::size_t j = 0; j < 3; ++j)
        if (j != i) others.emplace_back(data[j].data());
      const auto w = au::similarity_weights(data[i].data(), others, cfg.sigma).weights;
      double s = 0.0;
      for (double v : w) s += v;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
  }
  const std::vector<HyperCube> two{oracle::random_cube(4, 4, 2, rng), oracle::random_cube(4, 4, 2, rng)};
  const bool pair_exact = au::synthesize_sample(0, two, cfg) == two[1] && au::synthesize_sample(1, two, cfg) == two[0];
  return {worst < 1e-9 && worst_sum < 1e-9 && pair_exact,
          fmt("max_abs_err=%.3g (< 1e-9), weight-sum err=%.3g (< 1e-9), N=2 exact=%s", worst, worst_sum,
              pair_exact ? "yes" : "no")};
}

Outcome sigma_limits() {
  std::mt19937_64 rng(5);
  std::vector<HyperCube> data;
  for (int i = 0; i < 5; ++i) data.push_back(oracle::random_cube(8, 8, 3, rng));
  au::SynthesisConfig cfg;
  cfg.patch_size = 4;
  cfg.patch_overlap = 2;
  cfg.sigma = 1e6;
  double dev = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    HyperCube mean(8, 8, 3);
    for (std::size_t j = 0; j < data.size(); ++j)
      if (j != i)
        for (std::size_t k = 0; k < mean.size(); ++k) mean.data()[k] += data[j].data()[k] / 4.0;
    dev = std::max(dev, max_abs_diff(au::synthesize_sample(i, data, cfg), mean));
  }

  // the demo collection at its default size and seed
  const auto demo = synthetic::make_dataset(8, 32, 32, 4, 0);
  au::SynthesisConfig dc;
  std::string curve;
  bool monotone = true;
  double prev = -1.0;
  for (double sigma : {0.1, 0.3, 1.0, 3.0, 10.0, 1e3}) {
    dc.sigma = sigma;
    double acc = 0.0;
    for (std::size_t i = 0; i < demo.size(); ++i) acc += metrics::rmse(au::synthesize_sample(i, demo, dc), demo[i]);
    acc /= static_cast<double>(demo.size());
    monotone = monotone && acc >= prev;
    prev = acc;
    curve += fmt(" %.5f", acc);
  }
  return {dev < 1e-3 && monotone,
          fmt("sigma=1e6 max dev from mean=%.3g (< 1e-3); rmse over sigma:%s (%s)", dev, curve.c_str(),
              monotone ? "nondecreasing" : "NOT monotone")};
}

Outcome symmetry() {
  std::mt19937_64 rng(6);
  std::vector<HyperCube> data;
  for (int i = 0; i < 5; ++i) data.push_back(oracle::random_cube(6, 7, 3, rng));
  au::SynthesisConfig cfg;
  cfg.sigmas.clear();
  const auto out = au::expand_dataset(data, cfg, true);
  bool ok = out.cubes.size() == 2 * data.size();
  for (std::size_t i = 0; ok && i < data.size(); ++i) {
    ok = out.cubes[i] == data[i] && hflip(out.cubes[data.size() + i]) == data[i] &&
         hflip(hflip(out.cubes[data.size() + i])) == out.cubes[data.size() + i];
  }
  return {ok, fmt("N=%zu -> %zu cubes, hflip involution %s", data.size(), out.cubes.size(), ok ? "holds" : "broken")};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> side(2, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = side(rng), w = side(rng), b = side(rng);
    const auto ref = oracle::random_cube(h, w, b, rng, 0.05, 1.0);
    const auto x = oracle::random_cube(h, w, b, rng, 0.05, 1.0);
    for (double d : {metrics::cc(x, ref) - oracle::cc(x, ref), metrics::sam(x, ref) - oracle::sam(x, ref),
                     metrics::rmse(x, ref) - oracle::rmse(x, ref), metrics::ergas(x, ref, 4) - oracle::ergas(x, ref, 4),
                     metrics::psnr(x, ref) - oracle::psnr(x, ref)}) {
      worst = std::max(worst, std::abs(d));
    }
  }
  double worst_ssim = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto ref = oracle::random_cube(16, 16, 2, rng);
    const auto x = oracle::random_cube(16, 16, 2, rng);
    worst_ssim = std::max(worst_ssim, std::abs(metrics::ssim(x, ref) - oracle::ssim(x, ref)));
  }
  const auto ref = oracle::random_cube(16, 16, 4, rng, 0.05, 1.0);
  const auto best = metrics::evaluate_all(ref, ref, 2);
  const bool best_ok = std::abs(best.cc - 1.0) < 1e-12 && best.sam_deg == 0.0 && best.rmse == 0.0 &&
                       best.ergas == 0.0 && std::isinf(best.psnr_db) && best.psnr_db > 0 && best.ssim == 1.0;
  return {worst < 1e-8 && worst_ssim < 1e-6 && best_ok,
          fmt("max err=%.3g (< 1e-8), ssim err=%.3g (< 1e-6), identity=(%.4f, %g, %g, %g, %g, %g)", worst, worst_ssim,
              best.cc, best.sam_deg, best.rmse, best.ergas, best.psnr_db, best.ssim)};
}

Outcome gradient_check() {
  // Sum-of-outputs loss, accumulated in long double so the difference
  // quotient is not swamped by rounding. The bicubic skip adds a
  // parameter-free term and is switched off.
  auto cfg = sn::miniature_config(2);
  cfg.global_skip = false;
  auto params = sn::init_params(cfg, 11);
  const auto hr = synthetic::random_cube(16, 16, 4, 12);
  const auto lr = sn::to_tensor(bicubic_resample(hr, 2, ResampleDirection::Down));
  auto sum = [](const nn::Tensor& y) {
    long double acc = 0.0L;
    for (double v : y.data) acc += v;
    return acc;
  };
  sn::ForwardTrace trace;
  const auto y = sn::forward_tensor(lr, cfg, params, &trace);
  auto grads = sn::zero_params(cfg);
  sn::backward(trace, nn::Tensor(y.channels, y.height, y.width, 1.0), cfg, params, grads);

  std::vector<double*> p, g;
  params.for_each_conv([&](const std::string&, nn::Conv2d& c) {
    for (auto& v : c.weight) p.push_back(&v);
    for (auto& v : c.bias) p.push_back(&v);
  });
  grads.for_each_conv([&](const std::string&, nn::Conv2d& c) {
    for (auto& v : c.weight) g.push_back(&v);
    for (auto& v : c.bias) g.push_back(&v);
  });

  // A probe whose +-h evaluations straddle a ReLU kink has no derivative
  // to check; it is replaced by another draw.
  auto crosses_kink = [](const sn::ForwardTrace& a, const sn::ForwardTrace& b) {
    for (std::size_t s = 0; s < a.stages.size(); ++s)
      for (std::size_t br = 0; br < a.stages[s].branches.size(); ++br)
        for (std::size_t k = 0; k < a.stages[s].branches[br].blocks.size(); ++k) {
          const auto& u = a.stages[s].branches[br].blocks[k].pre_relu.data;
          const auto& v = b.stages[s].branches[br].blocks[k].pre_relu.data;
          for (std::size_t i = 0; i < u.size(); ++i)
            if ((u[i] > 0) != (v[i] > 0)) return true;
        }
    return false;
  };

  std::mt19937_64 rng(13);
  const double h = 1e-6;
  double worst = 0.0;
  int checked = 0, skipped = 0;
  while (checked < 100) {
    const std::size_t k = rng() % p.size();
    const double orig = *p[k];
    sn::ForwardTrace ta, tb;
    *p[k] = orig + h;
    const long double up = sum(sn::forward_tensor(lr, cfg, params, &ta));
    *p[k] = orig - h;
    const long double down = sum(sn::forward_tensor(lr, cfg, params, &tb));
    *p[k] = orig;
    if (crosses_kink(ta, tb)) {
      ++skipped;
      continue;
    }
    const double fd = static_cast<double>((up - down) / (2.0L * h));
    const double den = std::max(std::abs(fd), std::abs(*g[k]));
    worst = std::max(worst, den == 0.0 ? 0.0 : std::abs(fd - *g[k]) / den);
    ++checked;
  }
  return {worst < 1e-5, fmt("max rel err=%.3g over %d params (< 1e-5), %d kink probes redrawn", worst, checked, skipped)};
}

Outcome overfit() {
  const auto cfg = sn::miniature_config(2);
  const auto pairs = tr::make_pairs(synthetic::make_dataset(1, 32, 32, 4, 1), 2);
  tr::TrainConfig tc;
  tc.epochs = 500;
  tc.decay_every = 500;
  tc.batch_size = 1;
  tc.lr0 = 1e-4;
  tc.seed = 1;
  const auto r = tr::train(cfg, tc, pairs, {});
  const double ratio = r.log.step_loss.back() / r.log.step_loss.front();
  const double psnr = tr::evaluate_model(r.last, cfg, pairs).mean.psnr_db;
  return {r.log.step_loss.size() == 500 && ratio < 0.02 && psnr > 40.0,
          fmt("steps=%zu, final/initial L1=%.4f (< 0.02), psnr=%.2f dB (> 40)", r.log.step_loss.size(), ratio, psnr)};
}

Outcome schedule() {
  const tr::TrainConfig tc;
  bool ok = true;
  for (int e = 0; e < 60; ++e) ok = ok && tr::lr_schedule(e, tc) == (e < 30 ? 1e-4 : 1e-5);

  // the trace a real 60-epoch run records
  const auto cfg = sn::miniature_config(2);
  const auto pairs = tr::make_pairs(synthetic::make_dataset(1, 8, 8, 4, 2), 2);
  const auto r = tr::train(cfg, tc, pairs, {});
  bool trace_ok = r.log.lr_trace.size() == 60;
  for (int e = 0; trace_ok && e < 60; ++e) trace_ok = r.log.lr_trace[e] == (e < 30 ? 1e-4 : 1e-5);
  return {ok && trace_ok, fmt("schedule %s, recorded trace %s (%zu epochs)", ok ? "exact" : "wrong",
                              trace_ok ? "exact" : "wrong", r.log.lr_trace.size())};
}

Outcome determinism() {
  TempDir a, b;
  std::ostringstream sink;
  const int ca = cli::dispatch({"--quiet", "--seed", "7", "demo", "--out", a.path.string()}, sink, sink);
  const int cb = cli::dispatch({"--quiet", "--seed", "7", "demo", "--out", b.path.string()}, sink, sink);
  if (ca != 0 || cb != 0) return {false, fmt("demo exit codes %d, %d", ca, cb)};
  int files = 0;
  std::string differing;
  for (const char* dir : {"reports", "plots"}) {
    for (const auto& e : fs::directory_iterator(a.path / dir)) {
      ++files;
      const auto rel = fs::relative(e.path(), a.path);
      if (!fs::exists(b.path / rel) || slurp(e.path()) != slurp(b.path / rel)) differing += " " + rel.string();
    }
  }
  return {differing.empty() && files > 0,
          fmt("%d report/plot files compared, differing:%s", files, differing.empty() ? " none" : differing.c_str())};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "aggregation identity", 1.0, aggregation_identity},
      {2, "placement enumeration counts", 1.0, placement_counts},
      {3, "cost-model orderings", 1.0, cost_orderings},
      {4, "self-representation oracle", 5.0, synthesis_oracle},
      {5, "sigma-limit behaviour", 10.0, sigma_limits},
      {6, "symmetry expansion", 1.0, symmetry},
      {7, "metric oracle equivalence", 30.0, metric_oracles},
      {8, "gradient check", 120.0, gradient_check},
      {9, "overfit smoke test", 600.0, overfit},
      {10, "schedule conformance", 0.0, schedule},
      {11, "demo determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0.0 || secs < c.budget_s;
    const bool ok = o.ok && in_time;
    failed += ok ? 0 : 1;
    std::string timing = fmt("%.2fs", secs);
    if (c.budget_s > 0.0) timing += fmt(" (< %gs)", c.budget_s);
    std::printf("[%s] %2d %s: %s; %s\n", ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", all.size() - failed, all.size());
  return failed == 0 ? 0 : 1;
}
