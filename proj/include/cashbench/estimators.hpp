#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cashbench/costing.hpp"
#include "cashbench/data_model.hpp"
#include "cashbench/inference.hpp"
#include "cashbench/lasso.hpp"
#include "cashbench/wls.hpp"

namespace cashbench {

// Canonical coefficient names used across the analyses.
inline constexpr const char* kGikuriro = "t_gikuriro";
inline constexpr const char* kGdMain = "t_gd_main";
inline constexpr const char* kGdLarge = "t_gd_large";
inline constexpr const char* kAnyTreatment = "t_any";
inline constexpr const char* kTauPer100 = "tau_per_100";

enum class ClusterLevel { Village, Household };

struct EstimatorContext {
  const Dataset* data = nullptr;
  CostLedgerSet ledger;
  std::optional<double> benchmark_override;
  // The design effect sits at the village level; household clustering is
  // the published tables' footnote convention.
  ClusterLevel cluster_level = ClusterLevel::Village;
  // Pre-analysis always-keep controls (besides block FEs and the lagged
  // outcome): lagged household wealth by default.
  std::vector<std::string> always_keep_covariates = {"l_wealth_ihs"};
  bool lasso_controls = true;
  SelectionOptions selection;
  double propensity_floor = kDefaultPropensityFloor;

  const Dataset& dataset() const;
};

struct IttOptions {
  bool granular = false;  // break the three small GD cells out separately
  // Multiply weights by inverse remain-propensity (keyed by unit id).
  const std::map<int, double>* ipw_multiplier = nullptr;
};

struct IttResult {
  FitResult fit;
  std::vector<std::string> treatment_names;
  std::vector<std::string> selected_controls;
  double control_mean = 0.0;
  double control_sd = 0.0;
};

// ANCOVA of the endline outcome on treatment dummies, block fixed effects,
// the lagged outcome and post-double-lasso controls, weighted to represent
// eligible households, clustered by village.
IttResult itt(const EstimatorContext& ctx, const OutcomeSpec& outcome,
              const IttOptions& options = {});

enum class CeVariant {
  Linear,
  Quadratic,
  Cubic,
  DropLower,
  DropMiddle,
  DropUpper,
  DropLarge
};
const char* ce_variant_name(CeVariant v);
CeVariant ce_variant_from_name(const std::string& name);

struct CostEquivalentResult {
  FitResult fit;
  CeVariant variant = CeVariant::Linear;
  double benchmark = 0.0;
  // delta_gk: Gikuriro differential vs cost-equivalent cash.
  double gikuriro_differential = 0.0;
  double gikuriro_differential_se = 0.0;
  double gikuriro_differential_p = 1.0;
  // delta_t: cash impact at the benchmark cost.
  double cash_at_benchmark = 0.0;
  double cash_at_benchmark_se = 0.0;
  // gamma_1: effect of an additional $100 of donor cost.
  double cost_slope_per_100 = 0.0;
  double cost_slope_se = 0.0;
  bool slope_dropped = false;  // tau identically zero across arms
  // H0: delta_t = gamma_1 * C / 100 (benefit proportional to cost through
  // the origin).
  std::optional<WaldResult> proportional_scaling;

  // Interpolated cash impact at absolute cost t (Linear variant).
  double predicted_cash_impact(double cost) const;
};

struct CeOptions {
  bool population_weights = false;  // benchmarked TCE uses the village cost
  const std::map<int, double>* ipw_multiplier = nullptr;
};

CostEquivalentResult cost_equivalent(const EstimatorContext& ctx,
                                     const OutcomeSpec& outcome,
                                     CeVariant variant = CeVariant::Linear,
                                     const CeOptions& options = {});

// Pooled-strata analysis with population weights; same regressor structure
// as itt.
IttResult tce(const EstimatorContext& ctx, const OutcomeSpec& outcome);

// Cost-equivalent comparison of total causal effects, with tau built from
// cost per village household.
CostEquivalentResult benchmarked_tce(const EstimatorContext& ctx,
                                     const OutcomeSpec& outcome);

// GD-Main / GD-Large village contrasts on the never-treated ineligible
// subsample.
IttResult spillover(const EstimatorContext& ctx, const OutcomeSpec& outcome);

enum class AttritionLevel { Household, Roster, Anthro, Anemia, NewMember };
const char* attrition_level_name(AttritionLevel level);

struct AttritionOptions {
  bool with_covariates = false;
  // Outcome anchoring the anthro/anemia panels.
  std::string anthro_outcome = "haz";
  std::string anemia_outcome = "anemia";
};

IttResult attrition_regression(const EstimatorContext& ctx,
                               AttritionLevel level,
                               const AttritionOptions& options = {});

struct BcrRow {
  std::string outcome;
  double bcr_gikuriro = 0.0;
  double bcr_gd_main = 0.0;
  double bcr_gd_large = 0.0;
  double se_gikuriro = 0.0;
  double se_gd_main = 0.0;
  double se_gd_large = 0.0;
  double p_gk_vs_main = 1.0;   // (a)
  double p_main_vs_large = 1.0;  // (b)
  double p_gk_vs_large = 1.0;  // (c)
};

// ITT coefficients divided by cost per eligible household in $100, with
// pairwise ratio-equality tests.
std::vector<BcrRow> bcr_table(const EstimatorContext& ctx,
                              const std::vector<OutcomeSpec>& outcomes);

struct LumpsumFlowResult {
  FitResult fit;
  WaldResult total_main_lumpsum;   // main cell + main x lumpsum = 0
  WaldResult total_large_lumpsum;  // large cell + large x lumpsum = 0
};

// Four-dummy modality experiment on Control + GD arms, choice-arm
// households dropped.
LumpsumFlowResult lumpsum_flow(const EstimatorContext& ctx,
                               const OutcomeSpec& outcome);

// Chose-lump-sum / assigned-lump-sum / got-what-I-wanted regression on the
// GD arm; the last dummy is the essential-heterogeneity test.
IttResult choice_effect(const EstimatorContext& ctx, const OutcomeSpec& outcome);

enum class Moderator {
  BaselineAnthro,
  FirstThousandDays,
  Newborn,
  Impatient,
  Inconsistent,
  LackOtherControl
};
const char* moderator_name(Moderator m);

struct HeterogeneityResult {
  FitResult fit;
  std::vector<std::string> interaction_names;
  WaldResult interactions_equal;  // moderator x GD = moderator x GK
};

// Treatment-by-moderator interactions; continuous moderators are demeaned so
// main effects read at the moderator mean.  Behavioral moderators drop the
// GD-Large arm for comparability.
HeterogeneityResult prespecified_heterogeneity(const EstimatorContext& ctx,
                                               const OutcomeSpec& outcome,
                                               Moderator moderator);

struct CtbTraits {
  std::optional<bool> impatient;
  std::optional<bool> inconsistent;
  std::optional<bool> lacks_other_control;
};

// Impatient: took the money today at a doubled return for waiting.
// Inconsistent: allocated strictly more to the sooner date in the near frame
// than in the far frame at matched rates.  Other-control: any of the survey
// flags.  Incomplete records leave the trait missing, never false.
CtbTraits ctb_classify(const ChoiceRecord& record);

// Per-arm-group weighted control means, N, and helpers shared by emitters.
double weighted_control_mean(const AnalysisFrame& frame);
double weighted_control_sd(const AnalysisFrame& frame);

// Row-subsetting and arm-indicator helpers shared with the pipeline runner.
AnalysisFrame subset_frame(const AnalysisFrame& frame,
                           const std::vector<long>& keep);
Eigen::VectorXd arm_indicator(const AnalysisFrame& frame,
                              std::initializer_list<Arm> arms);

// Remain-propensity inputs assembled from a dataset for the IPW correction;
// returns unit-id keyed multipliers for the units that remained.
std::map<int, double> remain_ipw_multipliers(
    const EstimatorContext& ctx, const OutcomeSpec& outcome,
    const std::vector<std::string>& covariates);

}  // namespace cashbench
