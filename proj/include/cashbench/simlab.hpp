#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cashbench/costing.hpp"
#include "cashbench/data_model.hpp"
#include "cashbench/estimators.hpp"
#include "cashbench/parallel.hpp"

namespace cashbench {

// True treatment-effect function for one synthetic outcome.
struct EffectSpec {
  enum class Kind { Constant, LinearInCost, ModeratorStep };
  Kind kind = Kind::Constant;

  // Constant: per-arm effect levels.
  std::array<double, kNumArms> arm_effect{};

  // LinearInCost: cash effect = cash_at_benchmark + slope_per_100 * tau/100
  // with tau from the ledger; Gikuriro effect = cash_at_benchmark + offset.
  double cash_at_benchmark = 0.0;
  double slope_per_100 = 0.0;
  double gikuriro_offset = 0.0;

  // ModeratorStep: cash-vs-in-kind relative effect jumps by step_size where
  // the named covariate exceeds the threshold.
  std::string moderator = "x1";
  double step_base = 0.0;
  double step_size = 0.0;
  double step_threshold = 0.0;

  double lumpsum_bonus = 0.0;         // added when assigned lump sum
  double matched_choice_bonus = 0.0;  // added when assignment matches choice
  bool compliers_only = false;
  // Effect on untreated ineligible households in GD villages.
  double gd_ineligible_spillover = 0.0;

  double evaluate(Arm arm, double tau_per_100, double moderator_value,
                  bool assigned_lumpsum, bool got_choice, bool complied,
                  bool eligible) const;
};

struct OutcomeDgp {
  std::string name;
  OutcomeLevel level = OutcomeLevel::Household;
  OutcomeFamily family = OutcomeFamily::Primary;
  bool binary = false;  // latent-threshold at zero
  double baseline_mean = 0.0;
  double endline_mean = 0.0;
  double rho = 0.3;  // persistence of the baseline value
  // Direct covariate effects on the endline only (confounders the lagged
  // outcome cannot absorb).
  std::map<std::string, double> endline_covariate_effects;
  EffectSpec effect;
};

struct AttritionDgp {
  double control_remain = 0.967;  // Table A.1 magnitude
  std::array<double, kNumArms> arm_logit_shift{0, 0.1, 0.1, 0.1, 0.1, 0.15};
  std::map<std::string, double> covariate_logit;          // main effects
  std::map<std::string, double> covariate_treated_logit;  // x (any treatment)
  double anthro_extra_attrition_logit = -0.8;  // children are harder to find
};

struct DgpSpec {
  StudyDesign design = StudyDesign::reference();
  CostLedgerSet ledger = CostLedgerSet::reference();
  // Sampled household totals per arm (defaults follow the reference design's
  // published row counts).
  std::array<int, kNumArms> eligible_per_arm = {521, 541, 165, 154, 167, 246};
  std::array<int, kNumArms> ineligible_per_arm = {298, 297, 88, 87, 88, 137};
  // Sampling weights: eligibles around 2, ineligibles around 24.
  double eligible_weight_lo = 1.6, eligible_weight_hi = 2.4;
  double ineligible_weight_lo = 19.8, ineligible_weight_hi = 29.0;
  int n_covariates = 4;  // x1..xk ~ N(0,1), household level
  double icc = 0.1;      // village share of residual variance
  double noise_sd = 1.0;
  std::vector<OutcomeDgp> outcomes;
  AttritionDgp attrition;
  bool attrition_enabled = true;
  double choice_lumpsum_rate = 0.65;
  // Flow / lump-sum / choice assignment shares in the cash arm.
  std::array<double, 3> modality_split = {0.625, 0.25, 0.125};
  double impatient_rate = 0.25;
  double inconsistent_rate = 0.67;
  double lack_other_control_rate = 0.27;
  // Children under six per eligible household (for individual outcomes).
  int min_children = 1, max_children = 2;
  bool generate_individuals = false;
  bool constant_weights = false;  // fixes weights at the midpoint

  void validate() const;

  // A compact spec (fewer, smaller villages) for fast unit-level checks.
  static DgpSpec small(int villages_per_arm, int eligible_per_village,
                       int ineligible_per_village);
};

struct GroundTruth {
  std::map<std::string, EffectSpec> effects;
  double benchmark = 0.0;
  std::map<Arm, double> tau_per_100;
};

struct SimData {
  Dataset data;
  GroundTruth truth;
};

// Deterministic under (spec, seed); villages own independent RNG streams.
SimData generate(const DgpSpec& spec, std::uint64_t seed);

// What to run on each replication and which coefficient to grade.
struct EstimatorDescriptor {
  enum class Kind {
    Itt,
    CostEquivalent,
    Tce,
    BenchmarkedTce,
    Spillover,
    AttritionReg,
    LumpsumFlow,
    Choice,
    IttIpw,
    BcrEqualityTest
  };
  Kind kind = Kind::Itt;
  OutcomeSpec outcome;
  std::string target_coefficient = kGdLarge;
  double true_value = 0.0;
  CeVariant variant = CeVariant::Linear;
  bool lasso_controls = false;
  AttritionLevel attrition_level = AttritionLevel::Household;
  std::vector<std::string> ipw_covariates;
  // BcrEqualityTest grades the (i=gikuriro, j=gd_large) ratio-equality Wald
  // test's rejection instead of a coefficient.
};

struct McReport {
  int requested_reps = 0;
  int completed_reps = 0;
  int failures = 0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double sd_estimate = 0.0;
  double mean_reported_se = 0.0;
  double coverage95 = 0.0;      // CI around the true value
  double reject_rate_at_true = 0.0;  // size when the null is true
  double reject_rate_at_zero = 0.0;  // power against zero
  double wallclock_seconds = 0.0;
};

struct McOptions {
  ExecMode mode = ExecMode::Parallel;
  int threads = 0;
  double max_failure_rate = 0.05;
};

McReport monte_carlo(const DgpSpec& spec, const EstimatorDescriptor& estimator,
                     int reps, std::uint64_t seed, const McOptions& options = {});

// Variance of the Gikuriro differential across interpolation variants, from
// the exact design-matrix formula and from Monte Carlo on the same design.
struct PowerStudyResult {
  std::vector<CeVariant> variants;
  std::vector<double> analytic_variance;
  std::vector<double> mc_variance;
  std::vector<double> analytic_ratio_vs_linear;
  std::vector<double> mc_ratio_vs_linear;
  // Benchmark ratio for comparison: equivalent to growing the sample 158%.
  double benchmark_cubic_ratio = 2.58;
};

PowerStudyResult interpolation_power_study(const DgpSpec& spec, int reps,
                                           std::uint64_t seed,
                                           const McOptions& options = {});

}  // namespace cashbench
