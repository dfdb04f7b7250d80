#include "specsplit/archsearch.hpp"

#include <cstdio>

#include "specsplit/error.hpp"

namespace specsplit::archsearch {
namespace {

std::uint64_t conv_params(std::uint64_t in, std::uint64_t out, std::uint64_t k) {
  return k * k * in * out + out;
}

// 2 * MACs of a stride-1 same-padded conv evaluated at h x w output pixels.
std::uint64_t conv_flops(std::uint64_t in, std::uint64_t out, std::uint64_t k, std::uint64_t h,
                         std::uint64_t w) {
  return 2 * h * w * in * out * k * k;
}

}  // namespace

std::vector<Placement> enumerate_placements(int scale) {
  if (scale != 2 && scale != 4 && scale != 8) {
    throw ArgumentError("placement search supports scale 2, 4 or 8, got " + std::to_string(scale));
  }
  std::vector<Placement> out;
  constexpr int kFactors[] = {1, 2, 4, 8};
  for (int a : kFactors) {
    for (int b : kFactors) {
      for (int c : kFactors) {
        for (int d : kFactors) {
          if (a * b * c * d == scale) out.push_back({a, b, c, d});
        }
      }
    }
  }
  return out;
}

CostReport cost_report(const ssanet::SSANetConfig& config, std::size_t lr_h, std::size_t lr_w) {
  config.validate();
  CostReport report;
  std::uint64_t h = lr_h;
  std::uint64_t w = lr_w;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& st = config.stages[s];
    const std::uint64_t g = st.group_size;
    const std::uint64_t c = st.channels;
    const std::uint64_t groups = ssanet::split_bands(config.bands, st.group_size, st.overlap).size();
    const std::uint64_t u = static_cast<std::uint64_t>(st.up_factor);

    StageCost cost{"stage" + std::to_string(s + 1)};
    cost.params += conv_params(g, c, 3);
    std::uint64_t branch_flops = conv_flops(g, c, 3, h, w);
    cost.params += st.n_ssrb * (conv_params(c, c, 3) + conv_params(c, c, 1));
    branch_flops += st.n_ssrb * (conv_flops(c, c, 3, h, w) + conv_flops(c, c, 1, h, w));
    if (u > 1) {
      cost.params += conv_params(c, c * u * u, 3);
      branch_flops += conv_flops(c, c * u * u, 3, h, w);
      h *= u;
      w *= u;
    }
    cost.params += conv_params(c, g, 1);
    branch_flops += conv_flops(c, g, 1, h, w);
    cost.flops = groups * branch_flops;
    report.params += cost.params;
    report.flops += cost.flops;
    report.per_stage.push_back(std::move(cost));
  }
  const std::uint64_t nb = config.bands;
  StageCost out{"output", conv_params(nb, nb, 3), conv_flops(nb, nb, 3, h, w)};
  report.params += out.params;
  report.flops += out.flops;
  report.per_stage.push_back(std::move(out));
  return report;
}

std::uint64_t count_params(const ssanet::SSANetConfig& config) {
  return cost_report(config, 1, 1).params;
}

std::uint64_t count_flops(const ssanet::SSANetConfig& config, std::size_t lr_h, std::size_t lr_w) {
  return cost_report(config, lr_h, lr_w).flops;
}

std::vector<SearchRow> search_report(int scale, const ssanet::SSANetConfig& base, std::size_t lr_h,
                                     std::size_t lr_w, const PlacementEvaluator& evaluator) {
  std::vector<SearchRow> rows;
  for (const auto& up : enumerate_placements(scale)) {
    auto config = ssanet::with_placement(base, up);
    config.scale = scale;
    const auto cost = cost_report(config, lr_h, lr_w);
    SearchRow row{up, cost.params, cost.flops, std::nullopt};
    if (evaluator) row.psnr_db = evaluator(config);
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<SearchRow>& rows) {
  const bool with_psnr = !rows.empty() && rows.front().psnr_db.has_value();
  std::string out = with_psnr ? "up1,up2,up3,up4,params,flops,psnr_db\n" : "up1,up2,up3,up4,params,flops\n";
  for (const auto& r : rows) {
    out += std::to_string(r.up[0]) + "," + std::to_string(r.up[1]) + "," + std::to_string(r.up[2]) +
           "," + std::to_string(r.up[3]) + "," + std::to_string(r.params) + "," +
           std::to_string(r.flops);
    if (with_psnr) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.4f", r.psnr_db.value_or(0.0));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string to_markdown(const std::vector<SearchRow>& rows) {
  const bool with_psnr = !rows.empty() && rows.front().psnr_db.has_value();
  std::string out = with_psnr ? "| up1 | up2 | up3 | up4 | Paras (M) | FLOPs (G) | PSNR |\n|---|---|---|---|---|---|---|\n"
                              : "| up1 | up2 | up3 | up4 | Paras (M) | FLOPs (G) |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "| %d | %d | %d | %d | %.3f | %.3f |", r.up[0], r.up[1], r.up[2],
                  r.up[3], static_cast<double>(r.params) / 1e6, static_cast<double>(r.flops) / 1e9);
    out += buf;
    if (with_psnr) {
      std::snprintf(buf, sizeof buf, " %.4f |", r.psnr_db.value_or(0.0));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace specsplit::archsearch
