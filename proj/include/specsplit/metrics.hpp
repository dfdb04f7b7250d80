#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "specsplit/hypercube.hpp"

namespace specsplit::metrics {

/// The six picture-quality indices for one (reconstruction, reference) pair.
/// psnr_db may be +infinity (any band reconstructed exactly).
struct MetricReport {
  double cc = 0.0;
  double sam_deg = 0.0;
  double rmse = 0.0;
  double ergas = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::vector<double> band_psnr;
  std::vector<double> band_ssim;
};

double rmse(const HyperCube& x, const HyperCube& ref);

/// Mean over bands of 10 log10(1 / MSE_b), peak 1. Returns +infinity when any
/// band matches exactly.
double psnr(const HyperCube& x, const HyperCube& ref);
std::vector<double> band_psnr(const HyperCube& x, const HyperCube& ref);

/// Mean per-band Pearson correlation. Bands whose reference is constant are
/// skipped; if every band is constant, throws UndefinedMetricError.
double cc(const HyperCube& x, const HyperCube& ref);

/// Mean per-pixel spectral angle in degrees. Zero-norm pixels are skipped.
double sam(const HyperCube& x, const HyperCube& ref);

/// (100 / r) * sqrt(mean_b (RMSE_b / mean(ref_b))^2).
double ergas(const HyperCube& x, const HyperCube& ref, int r);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, evaluated on fully interior windows.
double ssim(const HyperCube& x, const HyperCube& ref);
std::vector<double> band_ssim(const HyperCube& x, const HyperCube& ref);

MetricReport evaluate_all(const HyperCube& x, const HyperCube& ref, int r);

/// Arithmetic mean of the scalar fields. Per-band lists are averaged
/// elementwise when every report carries them with the same length.
MetricReport mean_report(const std::vector<MetricReport>& reports);

/// One JSON object; +infinity is written as the string "inf".
nlohmann::ordered_json to_json(const MetricReport& report, bool include_bands = true);
MetricReport report_from_json(const nlohmann::json& j);

/// Fixed-point 4-decimal formatting; +infinity renders as "inf".
std::string format_value(double v);

/// Markdown table with one row per (label, report).
std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace specsplit::metrics
