#include "cashbench/tables.hpp"

#include <stdexcept>

#include "cashbench/errors.hpp"

namespace cashbench {

namespace {

std::string paren(double v) { return "(" + format_double(v) + ")"; }
std::string bracket(double v) { return "[" + format_double(v) + "]"; }

}  // namespace

double parse_table_cell(const std::string& cell) {
  std::string s = cell;
  if (s.size() >= 2 && (s.front() == '(' || s.front() == '[')) {
    s = s.substr(1, s.size() - 2);
  }
  double out = 0.0;
  if (!parse_double_field(s, out)) {
    throw ValidationError("empty table cell");
  }
  return out;
}

CsvTable estimate_table(const std::vector<std::string>& treatment_labels,
                        const std::vector<std::string>& extra_labels,
                        const std::vector<EstimateTableRow>& rows) {
  CsvTable t;
  t.columns.push_back("outcome");
  for (const auto& label : treatment_labels) {
    t.columns.push_back("coef_" + label);
    t.columns.push_back("se_" + label);
    t.columns.push_back("q_" + label);
  }
  t.columns.push_back("control_mean");
  t.columns.push_back("control_sd");
  t.columns.push_back("n");
  t.columns.push_back("r2");
  for (const auto& label : extra_labels) t.columns.push_back(label);

  for (const auto& row : rows) {
    std::vector<std::string> cells;
    cells.push_back(row.outcome);
    for (std::size_t j = 0; j < treatment_labels.size(); ++j) {
      cells.push_back(format_double(row.coefficients[j]));
      cells.push_back(paren(row.ses[j]));
      cells.push_back(j < row.qvalues.size() ? bracket(row.qvalues[j]) : "");
    }
    cells.push_back(format_double(row.control_mean));
    cells.push_back(paren(row.control_sd));
    cells.push_back(std::to_string(row.n));
    cells.push_back(format_double(row.r2));
    for (double e : row.extra) cells.push_back(format_double(e));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable fit_result_table(const FitResult& fit,
                          const std::vector<double>& qvalues) {
  CsvTable t;
  t.columns = {"term", "coefficient", "se", "p", "q"};
  for (int i = 0; i < fit.k; ++i) {
    std::vector<std::string> row;
    row.push_back(fit.names[i]);
    row.push_back(format_double(fit.beta[i]));
    row.push_back(paren(fit.se(i)));
    row.push_back(format_double(fit.pvalue(i)));
    row.push_back(i < static_cast<int>(qvalues.size()) ? bracket(qvalues[i])
                                                       : "");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable bcr_csv(const std::vector<BcrRow>& rows) {
  CsvTable t;
  t.columns = {"outcome",      "bcr_gikuriro", "se_gikuriro", "bcr_gd_main",
               "se_gd_main",   "bcr_gd_large", "se_gd_large", "p_gk_vs_main",
               "p_main_vs_large", "p_gk_vs_large"};
  for (const auto& r : rows) {
    t.rows.push_back({r.outcome, format_double(r.bcr_gikuriro),
                      paren(r.se_gikuriro), format_double(r.bcr_gd_main),
                      paren(r.se_gd_main), format_double(r.bcr_gd_large),
                      paren(r.se_gd_large), format_double(r.p_gk_vs_main),
                      format_double(r.p_main_vs_large),
                      format_double(r.p_gk_vs_large)});
  }
  return t;
}

CsvTable ce_table(const std::vector<CeTableRow>& rows) {
  CsvTable t;
  t.columns = {"outcome",
               "gikuriro_differential",
               "se_gikuriro_differential",
               "q_gikuriro_differential",
               "cash_at_benchmark",
               "se_cash_at_benchmark",
               "q_cash_at_benchmark",
               "cost_slope_per_100",
               "se_cost_slope",
               "q_cost_slope",
               "control_mean",
               "n",
               "r2"};
  for (const auto& row : rows) {
    const auto& r = row.result;
    auto q = [&](std::size_t i) {
      return i < row.qvalues.size() ? bracket(row.qvalues[i]) : "";
    };
    t.rows.push_back(
        {row.outcome, format_double(r.gikuriro_differential),
         paren(r.gikuriro_differential_se), q(0),
         format_double(r.cash_at_benchmark), paren(r.cash_at_benchmark_se),
         q(1),
         r.slope_dropped ? "" : format_double(r.cost_slope_per_100),
         r.slope_dropped ? "" : paren(r.cost_slope_se),
         r.slope_dropped ? "" : q(2), format_double(row.control_mean),
         std::to_string(row.n), format_double(row.r2)});
  }
  return t;
}

CsvTable ce_robustness_table(
    const std::vector<std::string>& outcomes,
    const std::map<std::string, std::vector<CostEquivalentResult>>& by_outcome) {
  CsvTable t;
  t.columns = {"outcome"};
  bool labeled = false;
  for (const auto& outcome : outcomes) {
    const auto& results = by_outcome.at(outcome);
    if (!labeled) {
      for (const auto& r : results) {
        t.columns.push_back(std::string("gk_diff_") + ce_variant_name(r.variant));
        t.columns.push_back(std::string("se_") + ce_variant_name(r.variant));
      }
      labeled = true;
    }
    std::vector<std::string> row{outcome};
    for (const auto& r : results) {
      row.push_back(format_double(r.gikuriro_differential));
      row.push_back(paren(r.gikuriro_differential_se));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable correlation_csv(const std::vector<std::string>& labels,
                         const Eigen::MatrixXd& corr) {
  CsvTable t;
  t.columns.push_back("outcome");
  for (const auto& l : labels) t.columns.push_back(l);
  for (long i = 0; i < corr.rows(); ++i) {
    std::vector<std::string> row{labels[i]};
    for (long j = 0; j < corr.cols(); ++j) {
      row.push_back(format_double(corr(i, j)));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable targeting_csv(const std::vector<std::string>& outcome_labels,
                       const TargetingReport& report) {
  CsvTable t;
  t.columns = {"target", "gain_sd"};
  for (std::size_t i = 0; i < outcome_labels.size(); ++i) {
    t.rows.push_back({outcome_labels[i], format_double(report.outcome_gains[i])});
  }
  t.rows.push_back({"composite", format_double(report.composite_gain)});
  return t;
}

CsvTable cdf_csv(
    const std::map<std::string, std::vector<std::pair<double, double>>>& curves) {
  CsvTable t;
  t.columns = {"outcome", "cate", "cdf"};
  for (const auto& [name, points] : curves) {
    for (const auto& [x, p] : points) {
      t.rows.push_back({name, format_double(x), format_double(p)});
    }
  }
  return t;
}

CsvTable selection_manifest_csv(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& sets) {
  CsvTable t;
  t.columns = {"outcome", "selected_controls"};
  for (const auto& [outcome, controls] : sets) {
    std::string joined;
    for (const auto& c : controls) {
      if (!joined.empty()) joined += ";";
      joined += c;
    }
    t.rows.push_back({outcome, joined});
  }
  return t;
}

CsvTable mc_report_csv(const std::string& label, const McReport& report) {
  CsvTable t;
  t.columns = {"estimator",       "reps",        "failures",
               "mean_estimate",   "bias",        "sd_estimate",
               "mean_reported_se", "coverage95", "reject_at_true",
               "reject_at_zero"};
  t.rows.push_back({label, std::to_string(report.completed_reps),
                    std::to_string(report.failures),
                    format_double(report.mean_estimate),
                    format_double(report.bias), format_double(report.sd_estimate),
                    format_double(report.mean_reported_se),
                    format_double(report.coverage95),
                    format_double(report.reject_rate_at_true),
                    format_double(report.reject_rate_at_zero)});
  return t;
}

CsvTable power_study_csv(const PowerStudyResult& result) {
  CsvTable t;
  t.columns = {"variant", "analytic_variance", "mc_variance",
               "analytic_ratio_vs_linear", "mc_ratio_vs_linear"};
  for (std::size_t i = 0; i < result.variants.size(); ++i) {
    t.rows.push_back({ce_variant_name(result.variants[i]),
                      format_double(result.analytic_variance[i]),
                      format_double(result.mc_variance[i]),
                      format_double(result.analytic_ratio_vs_linear[i]),
                      format_double(result.mc_ratio_vs_linear[i])});
  }
  return t;
}

std::map<std::string, std::string> table_command_manifest() {
  return {
      {"itt_primary", "itt"},
      {"itt_secondary", "itt"},
      {"itt_granular", "itt"},
      {"itt_ipw", "itt"},
      {"selected_controls", "itt"},
      {"ce_primary", "ce"},
      {"ce_secondary", "ce"},
      {"ce_robustness_primary", "ce"},
      {"ce_robustness_secondary", "ce"},
      {"tce_primary", "tce"},
      {"tce_secondary", "tce"},
      {"ce_tce_primary", "tce"},
      {"ce_tce_secondary", "tce"},
      {"bcr_primary", "bcr"},
      {"bcr_secondary", "bcr"},
      {"spillovers_primary", "spillover"},
      {"spillovers_secondary", "spillover"},
      {"lumpsum_flow_primary", "modality"},
      {"lumpsum_flow_secondary", "modality"},
      {"choice_primary", "choice"},
      {"choice_secondary", "choice"},
      {"het_by_moderator", "hetero"},
      {"cate_predictions", "forest"},
      {"cate_correlations", "forest"},
      {"targeting_gains", "forest"},
      {"cate_cdf", "forest"},
      {"attrition", "attrition"},
      {"mc_report", "simulate"},
      {"power_study", "power"},
      {"figures", "report"},
  };
}

}  // namespace cashbench
