#include "specsplit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <numbers>

#include "specsplit/error.hpp"

namespace specsplit::metrics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_dims(const HyperCube& x, const HyperCube& ref) {
  if (!x.same_dims(ref)) {
    throw ShapeError("metric operands differ in shape: " + std::to_string(x.height()) + "x" +
                     std::to_string(x.width()) + "x" + std::to_string(x.bands()) + " vs " +
                     std::to_string(ref.height()) + "x" + std::to_string(ref.width()) + "x" +
                     std::to_string(ref.bands()));
  }
}

double band_mse(const HyperCube& x, const HyperCube& ref, std::size_t b) {
  const auto xb = x.band(b);
  const auto rb = ref.band(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < xb.size(); ++i) {
    const double d = xb[i] - rb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(xb.size());
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double e : v) acc += e;
  return acc / static_cast<double>(v.size());
}

// Normalised 11x11 Gaussian, sigma 1.5.
std::vector<double> gaussian_window() {
  constexpr int kRadius = 5;
  constexpr double kSigma = 1.5;
  std::vector<double> w;
  w.reserve(121);
  double total = 0.0;
  for (int dy = -kRadius; dy <= kRadius; ++dy) {
    for (int dx = -kRadius; dx <= kRadius; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      w.push_back(v);
      total += v;
    }
  }
  for (auto& v : w) v /= total;
  return w;
}

double ssim_band(std::span<const double> x, std::span<const double> y, std::size_t h,
                 std::size_t w, const std::vector<double>& win) {
  constexpr std::size_t kWin = 11;
  constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + kWin <= h; ++r) {
    for (std::size_t c = 0; c + kWin <= w; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < kWin; ++i) {
        for (std::size_t j = 0; j < kWin; ++j) {
          const double g = win[i * kWin + j];
          const double a = x[(r + i) * w + c + j];
          const double b = y[(r + i) * w + c + j];
          mx += g * a;
          my += g * b;
          sxx += g * a * a;
          syy += g * b * b;
          sxy += g * a * b;
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      acc += ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
             ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace

double rmse(const HyperCube& x, const HyperCube& ref) {
  require_same_dims(x, ref);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data()[i] - ref.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<double> band_psnr(const HyperCube& x, const HyperCube& ref) {
  require_same_dims(x, ref);
  std::vector<double> out(x.bands());
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const double mse = band_mse(x, ref, b);
    out[b] = mse == 0.0 ? kInf : 10.0 * std::log10(1.0 / mse);
  }
  return out;
}

double psnr(const HyperCube& x, const HyperCube& ref) {
  const auto per_band = band_psnr(x, ref);
  double acc = 0.0;
  for (double v : per_band) {
    if (std::isinf(v)) return kInf;
    acc += v;
  }
  return acc / static_cast<double>(per_band.size());
}

double cc(const HyperCube& x, const HyperCube& ref) {
  require_same_dims(x, ref);
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const auto xb = x.band(b);
    const auto rb = ref.band(b);
    const double mx = mean_of(xb);
    const double mr = mean_of(rb);
    double sxr = 0, sxx = 0, srr = 0;
    for (std::size_t i = 0; i < xb.size(); ++i) {
      const double dx = xb[i] - mx;
      const double dr = rb[i] - mr;
      sxr += dx * dr;
      sxx += dx * dx;
      srr += dr * dr;
    }
    if (srr == 0.0) {
      std::clog << "specsplit: cc skips band " << b << " (constant reference)\n";
      continue;
    }
    // A constant reconstruction against a varying reference carries no correlation.
    acc += sxx == 0.0 ? 0.0 : sxr / std::sqrt(sxx * srr);
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("cc undefined: every reference band is constant");
  return acc / static_cast<double>(used);
}

double sam(const HyperCube& x, const HyperCube& ref) {
  require_same_dims(x, ref);
  const std::size_t n = x.plane_size();
  const std::size_t nb = x.bands();
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t p = 0; p < n; ++p) {
    double nx = 0, nr = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      nx += x.data()[b * n + p] * x.data()[b * n + p];
      nr += ref.data()[b * n + p] * ref.data()[b * n + p];
    }
    if (nx == 0.0 || nr == 0.0) continue;
    nx = std::sqrt(nx);
    nr = std::sqrt(nr);
    // angle = 2 atan2(|a|b| - b|a||, |a|b| + b|a||): equal to arccos of the
    // cosine but well conditioned near 0 and 180 degrees.
    double diff = 0, sum = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const double u = x.data()[b * n + p] * nr;
      const double v = ref.data()[b * n + p] * nx;
      diff += (u - v) * (u - v);
      sum += (u + v) * (u + v);
    }
    acc += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * 180.0 / std::numbers::pi;
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("sam undefined: every pixel spectrum has zero norm");
  return acc / static_cast<double>(used);
}

double ergas(const HyperCube& x, const HyperCube& ref, int r) {
  require_same_dims(x, ref);
  if (r <= 0) throw ArgumentError("ergas scale factor must be positive");
  double acc = 0.0;
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const double mu = mean_of(ref.band(b));
    if (mu == 0.0) {
      throw UndefinedMetricError("ergas undefined: reference band " + std::to_string(b) +
                                 " has zero mean");
    }
    const double rel = std::sqrt(band_mse(x, ref, b)) / mu;
    acc += rel * rel;
  }
  return (100.0 / r) * std::sqrt(acc / static_cast<double>(x.bands()));
}

std::vector<double> band_ssim(const HyperCube& x, const HyperCube& ref) {
  require_same_dims(x, ref);
  if (x.height() < 11 || x.width() < 11) {
    throw ShapeError("ssim needs at least 11x11 pixels, got " + std::to_string(x.height()) + "x" +
                     std::to_string(x.width()));
  }
  static const auto win = gaussian_window();
  std::vector<double> out(x.bands());
  for (std::size_t b = 0; b < x.bands(); ++b) {
    out[b] = ssim_band(x.band(b), ref.band(b), x.height(), x.width(), win);
  }
  return out;
}

double ssim(const HyperCube& x, const HyperCube& ref) {
  const auto per_band = band_ssim(x, ref);
  return mean_of(per_band);
}

MetricReport evaluate_all(const HyperCube& x, const HyperCube& ref, int r) {
  require_same_dims(x, ref);
  MetricReport rep;
  rep.cc = cc(x, ref);
  rep.sam_deg = sam(x, ref);
  rep.rmse = rmse(x, ref);
  rep.ergas = ergas(x, ref, r);
  rep.band_psnr = band_psnr(x, ref);
  rep.psnr_db = psnr(x, ref);
  rep.band_ssim = band_ssim(x, ref);
  rep.ssim = mean_of(rep.band_ssim);
  return rep;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ArgumentError("mean of zero reports");
  MetricReport m;
  const double n = static_cast<double>(reports.size());
  const std::size_t nb = reports.front().band_psnr.size();
  bool bands_ok = true;
  for (const auto& r : reports) {
    m.cc += r.cc / n;
    m.sam_deg += r.sam_deg / n;
    m.rmse += r.rmse / n;
    m.ergas += r.ergas / n;
    m.psnr_db += r.psnr_db / n;
    m.ssim += r.ssim / n;
    bands_ok = bands_ok && r.band_psnr.size() == nb && r.band_ssim.size() == nb;
  }
  if (bands_ok && nb > 0) {
    m.band_psnr.assign(nb, 0.0);
    m.band_ssim.assign(nb, 0.0);
    for (const auto& r : reports) {
      for (std::size_t b = 0; b < nb; ++b) {
        m.band_psnr[b] += r.band_psnr[b] / n;
        m.band_ssim[b] += r.band_ssim[b] / n;
      }
    }
  }
  return m;
}

namespace {

nlohmann::ordered_json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number_or_inf(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw FormatError("unexpected metric string '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

nlohmann::ordered_json to_json(const MetricReport& report, bool include_bands) {
  nlohmann::ordered_json j;
  j["cc"] = report.cc;
  j["sam_deg"] = report.sam_deg;
  j["rmse"] = report.rmse;
  j["ergas"] = report.ergas;
  j["psnr_db"] = number_or_inf(report.psnr_db);
  j["ssim"] = report.ssim;
  if (include_bands && !report.band_psnr.empty()) {
    auto psnrs = nlohmann::ordered_json::array();
    for (double v : report.band_psnr) psnrs.push_back(number_or_inf(v));
    j["per_band"]["psnr_db"] = psnrs;
    j["per_band"]["ssim"] = report.band_ssim;
  }
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.cc = j.at("cc").get<double>();
    r.sam_deg = j.at("sam_deg").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.ergas = j.at("ergas").get<double>();
    r.psnr_db = read_number_or_inf(j.at("psnr_db"));
    r.ssim = j.at("ssim").get<double>();
    if (j.contains("per_band")) {
      for (const auto& v : j["per_band"].at("psnr_db")) r.band_psnr.push_back(read_number_or_inf(v));
      r.band_ssim = j["per_band"].at("ssim").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::string out = "| Image | CC | SAM | RMSE | ERGAS | PSNR | SSIM |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& [label, r] : rows) {
    out += "| " + label + " | " + format_value(r.cc) + " | " + format_value(r.sam_deg) + " | " +
           format_value(r.rmse) + " | " + format_value(r.ergas) + " | " +
           format_value(r.psnr_db) + " | " + format_value(r.ssim) + " |\n";
  }
  return out;
}

}  // namespace specsplit::metrics
