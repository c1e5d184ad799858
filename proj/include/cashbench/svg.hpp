#pragma once

#include <map>
#include <string>
#include <vector>

namespace cashbench {

// Deterministic text-only SVG output: fixed precision, no timestamps, so
// identical inputs give identical bytes.

struct BoxStats {
  std::string label;
  double assigned = 0.0;  // village-assigned mean transfer
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;
};

// Assigned-vs-actual transfer amounts, one box per GD arm.
std::string svg_box_whisker(const std::vector<BoxStats>& boxes,
                            const std::string& title);

struct ArmPoint {
  std::string label;
  double cost = 0.0;
  double outcome = 0.0;
  bool cash = false;  // cash arms anchor the fitted line
};

// Two panels: left interpolates cash impacts at the in-kind cost
// (cost-equivalence), right draws benefit/cost rays from the control point
// (cost-effectiveness).
std::string svg_cost_equivalence(const std::vector<ArmPoint>& points,
                                 double benchmark_cost,
                                 double predicted_at_benchmark,
                                 const std::string& outcome_label);

// Share of households consuming each food group, grouped bars per arm.
std::string svg_bar_chart(const std::vector<std::string>& groups,
                          const std::vector<std::string>& arm_labels,
                          const std::vector<std::vector<double>>& shares,
                          const std::string& title);

// Empirical CDFs of CATE predictions, one curve per outcome.
std::string svg_cdf_curves(
    const std::map<std::string, std::vector<std::pair<double, double>>>& curves,
    const std::string& title);

}  // namespace cashbench
