#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cashbench/costing.hpp"
#include "cashbench/data_model.hpp"
#include "cashbench/estimators.hpp"
#include "cashbench/forest.hpp"
#include "cashbench/simlab.hpp"

namespace cashbench {

struct DataFilesConfig {
  std::string villages;
  std::string households;
  std::string individuals;  // optional file
  // Explicit covariate columns; empty = every unmapped household column.
  std::vector<std::string> covariates;
  // Canonical column name -> actual column name in the files.
  std::map<std::string, std::string> columns;

  const std::string& resolve(const std::string& canonical) const;
};

struct McJobConfig {
  EstimatorDescriptor descriptor;
  int reps = 200;
};

struct ReportConfig {
  std::vector<std::string> diet_outcomes;  // binary food-group outcomes
  std::string ce_outcome;                  // outcome for the two-panel figure
};

// Declarative run configuration: versioned schema, unknown keys rejected.
struct RunConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int threads = 0;

  std::optional<DgpSpec> dgp;
  std::optional<DataFilesConfig> data;

  CostLedgerSet ledger = CostLedgerSet::reference();
  bool ledger_provided = false;
  std::optional<double> benchmark_override;

  std::vector<OutcomeSpec> outcomes;
  bool lasso_controls = true;
  SelectionOptions lasso;
  std::vector<std::string> always_keep = {"l_wealth_ihs"};
  ClusterLevel cluster_level = ClusterLevel::Village;
  double propensity_floor = kDefaultPropensityFloor;

  bool itt_granular = false;
  std::optional<std::vector<std::string>> itt_ipw_covariates;
  std::vector<CeVariant> ce_variants = {
      CeVariant::Linear,    CeVariant::Quadratic,  CeVariant::Cubic,
      CeVariant::DropLower, CeVariant::DropMiddle, CeVariant::DropUpper,
      CeVariant::DropLarge};
  std::vector<Moderator> hetero_moderators;
  std::string hetero_outcome;

  ForestConfig forest;
  std::vector<std::string> forest_outcomes;
  std::vector<std::string> child_growth_components;
  // 0 = per-row CATEs in the correlation table; N groups the sample into
  // prediction quantiles first.
  int forest_subgroup_quantiles = 0;

  AttritionOptions attrition_options;
  std::optional<McJobConfig> mc;
  int power_reps = 1000;
  ReportConfig report;
};

// Parses and validates a config document; throws ValidationError with the
// offending key path on any unknown or malformed entry.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Materializes the dataset: from CSV files or from the DGP (exactly one of
// the two must be configured).
Dataset load_dataset(const RunConfig& config);

// Canonical-schema CSV writers used by `simulate` (and readable back by the
// data path).
void write_dataset_csv(const Dataset& data, const std::string& dir);

}  // namespace cashbench
