#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specsplit/ssanet.hpp"

namespace specsplit::archsearch {

using ssanet::Placement;

struct StageCost {
  std::string name;  // "stage1".."stage4" or "output"
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

/// Learnable scalar count and forward FLOPs (2 x multiply-adds over convs).
struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::vector<StageCost> per_stage;
};

/// Every 4-tuple of powers of two whose product is scale, lexicographic.
std::vector<Placement> enumerate_placements(int scale);

std::uint64_t count_params(const ssanet::SSANetConfig& config);
std::uint64_t count_flops(const ssanet::SSANetConfig& config, std::size_t lr_h, std::size_t lr_w);

/// Both counts with the per-stage ledger.
CostReport cost_report(const ssanet::SSANetConfig& config, std::size_t lr_h, std::size_t lr_w);

struct SearchRow {
  Placement up{};
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::optional<double> psnr_db;  // filled by an evaluator hook when given
};

/// Optional hook: short-train a candidate and return its validation PSNR.
using PlacementEvaluator = std::function<double(const ssanet::SSANetConfig&)>;

/// One row per enumerated placement of base, in enumeration order.
std::vector<SearchRow> search_report(int scale, const ssanet::SSANetConfig& base, std::size_t lr_h,
                                     std::size_t lr_w, const PlacementEvaluator& evaluator = {});

std::string to_csv(const std::vector<SearchRow>& rows);

/// Paras in millions, FLOPs in G, three decimals.
std::string to_markdown(const std::vector<SearchRow>& rows);

}  // namespace specsplit::archsearch
