#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cashbench {

enum class Arm { Control, Gikuriro, GdLower, GdMiddle, GdUpper, GdLarge };
enum class Stratum { Eligible, Ineligible };
enum class Round { Baseline, Endline };
enum class Role { ChildU6, WomanChildbearing, OtherMember };
enum class Modality { Flow, LumpSum, Choice };

constexpr int kNumArms = 6;
const char* arm_name(Arm arm);
Arm arm_from_name(const std::string& name);
bool is_gd_arm(Arm arm);
bool is_treated_arm(Arm arm);

struct Village {
  int id = 0;
  int block = 0;
  Arm arm = Arm::Control;
  // Village-level randomized mean household transfer; present iff GD arm.
  std::optional<double> assigned_transfer;
};

struct StudyDesign {
  std::vector<int> blocks;
  std::vector<Village> villages;

  // The trial's village allocation: 74/74/22/22/22/34 across
  // Control/Gikuriro/Lower/Middle/Upper/Large, dealt into 22 blocks.
  static StudyDesign reference();

  void validate() const;
  const Village& village(int id) const;
  std::array<int, kNumArms> arm_counts() const;
};

// One menu row of the convex time budget: allocate between a sooner payment
// (at start_days) and a later one (30 days after), at the given gross return.
struct CtbAllocation {
  int start_days = 0;  // 0 = today, 90 = far frame
  double rate = 1.0;   // payout multiple for waiting
  double to_sooner = 0.0;
  double to_later = 0.0;
};

struct ChoiceRecord {
  bool chose_lump_sum = false;
  Modality assigned = Modality::Flow;   // realized arm (choice arm: what they picked)
  bool in_choice_arm = false;
  std::vector<CtbAllocation> ctb;
  // Baseline survey flags feeding the other-control classification.
  bool distrusts_keeping_cash = false;
  bool money_conflict_with_spouse = false;
  bool spouse_wasteful = false;
};

using OutcomeKey = std::pair<std::string, Round>;

struct HouseholdRow {
  int household_id = 0;
  int village_id = 0;
  Stratum stratum = Stratum::Eligible;
  double sampling_weight = 1.0;
  double tracking_weight = 1.0;
  bool complied = false;
  int ubudehe = 1;   // government poverty category, 1 = poorest
  int members = 0;
  std::optional<ChoiceRecord> choice;
  std::map<std::string, double> covariates;
  std::map<OutcomeKey, double> outcomes;  // absent key = missing value

  std::optional<double> outcome(const std::string& name, Round round) const;
  bool attrited(const std::string& endline_outcome) const;
};

struct IndividualRow {
  int individual_id = 0;
  int household_id = 0;
  Role role = Role::OtherMember;
  bool female = false;
  double age_months = 0.0;  // at baseline
  std::map<OutcomeKey, double> outcomes;

  std::optional<double> outcome(const std::string& name, Round round) const;
};

struct Dataset {
  StudyDesign design;
  std::vector<HouseholdRow> households;
  std::vector<IndividualRow> individuals;
};

enum class OutcomeLevel { Household, Individual };
enum class OutcomeFamily { Primary, Secondary };

struct Transform {
  enum class Kind { None, Ihs, Winsorize, WinsorizeThenIhs };
  Kind kind = Kind::None;
  double lo = 0.01;
  double hi = 0.99;
};

// Subpopulation restriction for individual-level outcomes.
struct SubpopFilter {
  std::optional<Role> role;
  std::optional<double> max_age_months;  // at baseline
  std::optional<double> min_age_months;

  bool admits(const IndividualRow& row) const;
};

struct OutcomeSpec {
  std::string name;
  OutcomeLevel level = OutcomeLevel::Household;
  Transform transform;
  OutcomeFamily family = OutcomeFamily::Primary;
  SubpopFilter subpop;
};

// ln(x + sqrt(x^2+1)); odd and monotone, log-like but defined at zero.
double ihs(double x);

// Caps values at the lo/hi type-7 quantiles of the input.
std::vector<double> winsorize(std::span<const double> values, double lo,
                              double hi);

enum class WeightMode { EligibleITT, PopulationTCE, SpilloverNeverTreat };

// Regression-ready rows for one outcome.  Immutable after construction;
// estimators fit against it concurrently.
struct AnalysisFrame {
  std::string outcome_name;
  WeightMode mode = WeightMode::EligibleITT;

  Eigen::VectorXd outcome;         // transformed endline value
  Eigen::VectorXd lagged;          // transformed baseline value (imputed)
  Eigen::VectorXd lagged_missing;  // 1 where the baseline was imputed
  bool has_lagged = false;
  bool any_lagged_missing = false;

  Eigen::MatrixXd covariates;  // candidate controls, n x p
  std::vector<std::string> covariate_names;

  Eigen::VectorXd weight;
  std::vector<int> village;
  std::vector<int> block;
  std::vector<Arm> arm;
  std::vector<int> household_id;
  std::vector<int> unit_id;  // individual id for individual-level outcomes

  // Cash-modality bookkeeping (per row; -1 where not applicable).
  std::vector<int> assigned_lumpsum;
  std::vector<int> chose_lumpsum;
  std::vector<int> in_choice_arm;

  Eigen::VectorXd eligible_indicator;

  long n() const { return outcome.size(); }
  int covariate_index(const std::string& name) const;
};

struct FrameOptions {
  // Extra per-household weight multipliers (e.g. inverse remain-propensity).
  const std::map<int, double>* weight_multiplier = nullptr;
  // Candidate control columns to expose; defaults to all covariates present
  // on every selected household.
  std::vector<std::string> covariate_names;
};

AnalysisFrame build_analysis_frame(const Dataset& data,
                                   const OutcomeSpec& outcome,
                                   WeightMode mode,
                                   const FrameOptions& options = {});

}  // namespace cashbench
