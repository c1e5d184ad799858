#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cashbench/csv.hpp"
#include "cashbench/estimators.hpp"
#include "cashbench/forest.hpp"
#include "cashbench/simlab.hpp"

namespace cashbench {

// One outcome row of an ITT/TCE-shaped table: coefficient, clustered SE in
// parentheses, sharpened q in brackets, per treatment column.
struct EstimateTableRow {
  std::string outcome;
  std::vector<double> coefficients;
  std::vector<double> ses;
  std::vector<double> qvalues;  // empty until q-values attached
  std::vector<double> pvalues;
  double control_mean = 0.0;
  double control_sd = 0.0;
  long n = 0;
  double r2 = 0.0;
  // Trailing ratio-test p-values (layout-specific).
  std::vector<double> extra;
};

CsvTable estimate_table(const std::vector<std::string>& treatment_labels,
                        const std::vector<std::string>& extra_labels,
                        const std::vector<EstimateTableRow>& rows);

// Parses a cell written as "(x)" or "[x]" or plain; full precision survives
// the round trip.
double parse_table_cell(const std::string& cell);

CsvTable fit_result_table(const FitResult& fit,
                          const std::vector<double>& qvalues = {});

CsvTable bcr_csv(const std::vector<BcrRow>& rows);

struct CeTableRow {
  std::string outcome;
  CostEquivalentResult result;
  std::vector<double> qvalues;  // gk differential, cash at C, slope
  double control_mean = 0.0;
  long n = 0;
  double r2 = 0.0;
};

CsvTable ce_table(const std::vector<CeTableRow>& rows);

// Robustness layout: one row per outcome, the Gikuriro differential and SE
// across the seven interpolation variants.
CsvTable ce_robustness_table(
    const std::vector<std::string>& outcomes,
    const std::map<std::string, std::vector<CostEquivalentResult>>& by_outcome);

CsvTable correlation_csv(const std::vector<std::string>& labels,
                         const Eigen::MatrixXd& corr);

CsvTable targeting_csv(const std::vector<std::string>& outcome_labels,
                       const TargetingReport& report);

CsvTable cdf_csv(const std::map<std::string, std::vector<std::pair<double, double>>>& curves);

CsvTable selection_manifest_csv(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& sets);

CsvTable mc_report_csv(const std::string& label, const McReport& report);

CsvTable power_study_csv(const PowerStudyResult& result);

// Which CLI command owns each published-table layout; checked in tests so
// every layout in scope has exactly one emitter.
std::map<std::string, std::string> table_command_manifest();

}  // namespace cashbench
