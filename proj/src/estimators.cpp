#include "cashbench/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cashbench/errors.hpp"
#include "cashbench/stats.hpp"

namespace cashbench {

const Dataset& EstimatorContext::dataset() const {
  if (!data) throw ValidationError("estimator context has no dataset");
  return *data;
}

const char* ce_variant_name(CeVariant v) {
  switch (v) {
    case CeVariant::Linear: return "linear";
    case CeVariant::Quadratic: return "quadratic";
    case CeVariant::Cubic: return "cubic";
    case CeVariant::DropLower: return "drop_lower";
    case CeVariant::DropMiddle: return "drop_middle";
    case CeVariant::DropUpper: return "drop_upper";
    case CeVariant::DropLarge: return "drop_large";
  }
  return "?";
}

CeVariant ce_variant_from_name(const std::string& name) {
  for (int v = 0; v <= static_cast<int>(CeVariant::DropLarge); ++v) {
    if (name == ce_variant_name(static_cast<CeVariant>(v))) {
      return static_cast<CeVariant>(v);
    }
  }
  throw ValidationError("unknown cost-equivalent variant '" + name + "'");
}

const char* attrition_level_name(AttritionLevel level) {
  switch (level) {
    case AttritionLevel::Household: return "household";
    case AttritionLevel::Roster: return "roster";
    case AttritionLevel::Anthro: return "anthro";
    case AttritionLevel::Anemia: return "anemia";
    case AttritionLevel::NewMember: return "new_member";
  }
  return "?";
}

const char* moderator_name(Moderator m) {
  switch (m) {
    case Moderator::BaselineAnthro: return "baseline_anthro";
    case Moderator::FirstThousandDays: return "first_thousand_days";
    case Moderator::Newborn: return "newborn";
    case Moderator::Impatient: return "impatient";
    case Moderator::Inconsistent: return "inconsistent";
    case Moderator::LackOtherControl: return "lack_other_control";
  }
  return "?";
}

AnalysisFrame subset_frame(const AnalysisFrame& frame,
                           const std::vector<long>& keep) {
  AnalysisFrame out;
  out.outcome_name = frame.outcome_name;
  out.mode = frame.mode;
  out.has_lagged = frame.has_lagged;
  out.covariate_names = frame.covariate_names;
  const long n = static_cast<long>(keep.size());
  out.outcome.resize(n);
  out.lagged.resize(n);
  out.lagged_missing.resize(n);
  out.weight.resize(n);
  out.eligible_indicator.resize(n);
  out.covariates.resize(n, frame.covariates.cols());
  out.village.resize(n);
  out.block.resize(n);
  out.arm.resize(n);
  out.household_id.resize(n);
  out.unit_id.resize(n);
  out.assigned_lumpsum.resize(n);
  out.chose_lumpsum.resize(n);
  out.in_choice_arm.resize(n);
  for (long i = 0; i < n; ++i) {
    long s = keep[i];
    out.outcome[i] = frame.outcome[s];
    out.lagged[i] = frame.lagged[s];
    out.lagged_missing[i] = frame.lagged_missing[s];
    out.weight[i] = frame.weight[s];
    out.eligible_indicator[i] = frame.eligible_indicator[s];
    out.covariates.row(i) = frame.covariates.row(s);
    out.village[i] = frame.village[s];
    out.block[i] = frame.block[s];
    out.arm[i] = frame.arm[s];
    out.household_id[i] = frame.household_id[s];
    out.unit_id[i] = frame.unit_id[s];
    out.assigned_lumpsum[i] = frame.assigned_lumpsum[s];
    out.chose_lumpsum[i] = frame.chose_lumpsum[s];
    out.in_choice_arm[i] = frame.in_choice_arm[s];
    if (frame.lagged_missing[s] > 0.5) out.any_lagged_missing = true;
  }
  return out;
}

Eigen::VectorXd arm_indicator(const AnalysisFrame& frame,
                              std::initializer_list<Arm> arms) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(frame.n());
  for (long i = 0; i < frame.n(); ++i) {
    for (Arm a : arms) {
      if (frame.arm[i] == a) {
        d[i] = 1.0;
        break;
      }
    }
  }
  return d;
}

namespace {

struct TreatmentBlock {
  std::vector<std::string> names;
  Eigen::MatrixXd columns;
};

TreatmentBlock itt_treatments(const AnalysisFrame& frame, bool granular) {
  TreatmentBlock block;
  if (granular) {
    block.names = {kGikuriro, "t_gd_lower", "t_gd_middle", "t_gd_upper",
                   kGdLarge};
    block.columns.resize(frame.n(), 5);
    block.columns.col(0) = arm_indicator(frame, {Arm::Gikuriro});
    block.columns.col(1) = arm_indicator(frame, {Arm::GdLower});
    block.columns.col(2) = arm_indicator(frame, {Arm::GdMiddle});
    block.columns.col(3) = arm_indicator(frame, {Arm::GdUpper});
    block.columns.col(4) = arm_indicator(frame, {Arm::GdLarge});
  } else {
    block.names = {kGikuriro, kGdMain, kGdLarge};
    block.columns.resize(frame.n(), 3);
    block.columns.col(0) = arm_indicator(frame, {Arm::Gikuriro});
    block.columns.col(1) =
        arm_indicator(frame, {Arm::GdLower, Arm::GdMiddle, Arm::GdUpper});
    block.columns.col(2) = arm_indicator(frame, {Arm::GdLarge});
  }
  return block;
}

// Always-keep design for the selection step: intercept, block dummies,
// lagged outcome (plus its missingness indicator), the pre-analysis
// covariates, and the eligibility indicator on pooled-strata frames.
struct KeepBlock {
  Eigen::MatrixXd columns;
  std::vector<std::string> names;
};

KeepBlock always_keep_block(const AnalysisFrame& frame,
                            const EstimatorContext& ctx) {
  DesignBuilder builder(frame.n());
  builder.add_intercept();
  builder.add_block_effects(frame.block);
  if (frame.has_lagged) {
    builder.add("lagged_outcome", frame.lagged);
    if (frame.any_lagged_missing) {
      builder.add("lagged_missing", frame.lagged_missing);
    }
  }
  for (const auto& name : ctx.always_keep_covariates) {
    int idx = frame.covariate_index(name);
    if (idx >= 0) builder.add(name, frame.covariates.col(idx));
  }
  if (frame.mode == WeightMode::PopulationTCE) {
    builder.add("eligible", frame.eligible_indicator);
  }
  KeepBlock keep;
  keep.columns = builder.matrix();
  keep.names = builder.names();
  return keep;
}

// Runs post-double selection and returns names of selected candidates.
std::vector<std::string> select_controls(const AnalysisFrame& frame,
                                         const EstimatorContext& ctx,
                                         const TreatmentBlock& treatments,
                                         const KeepBlock& keep,
                                         const std::vector<std::string>& exclude = {}) {
  if (!ctx.lasso_controls) return {};
  std::vector<int> candidate_idx;
  for (std::size_t j = 0; j < frame.covariate_names.size(); ++j) {
    bool kept = false;
    for (const auto& name : ctx.always_keep_covariates) {
      kept = kept || frame.covariate_names[j] == name;
    }
    for (const auto& name : exclude) {
      kept = kept || frame.covariate_names[j] == name;
    }
    if (!kept) candidate_idx.push_back(static_cast<int>(j));
  }
  if (candidate_idx.empty()) return {};
  Eigen::MatrixXd candidates(frame.n(), candidate_idx.size());
  for (std::size_t j = 0; j < candidate_idx.size(); ++j) {
    candidates.col(j) = frame.covariates.col(candidate_idx[j]);
  }
  SelectionResult sel =
      post_double_select(frame.outcome, treatments.columns, candidates,
                         keep.columns, frame.weight, ctx.selection);
  std::vector<std::string> names;
  for (int j : sel.selected) {
    names.push_back(frame.covariate_names[candidate_idx[j]]);
  }
  return names;
}

const std::vector<int>& cluster_ids(const AnalysisFrame& frame,
                                    const EstimatorContext& ctx) {
  return ctx.cluster_level == ClusterLevel::Household ? frame.household_id
                                                      : frame.village;
}

FitResult fit_with_controls(const AnalysisFrame& frame,
                            const EstimatorContext& ctx,
                            const TreatmentBlock& treatments,
                            const KeepBlock& keep,
                            const std::vector<std::string>& controls) {
  DesignBuilder builder(frame.n());
  for (std::size_t j = 0; j < treatments.names.size(); ++j) {
    builder.add(treatments.names[j], treatments.columns.col(j));
  }
  for (std::size_t j = 0; j < keep.names.size(); ++j) {
    builder.add(keep.names[j], keep.columns.col(j));
  }
  for (const auto& name : controls) {
    int idx = frame.covariate_index(name);
    if (idx < 0) throw ValidationError("selected control '" + name + "' missing");
    builder.add(name, frame.covariates.col(idx));
  }
  return fit_wls(builder.matrix(), builder.names(), frame.outcome, frame.weight,
                 cluster_ids(frame, ctx));
}

std::map<int, double> unit_keyed(const std::map<int, double>* m) {
  return m ? *m : std::map<int, double>{};
}

}  // namespace

double weighted_control_mean(const AnalysisFrame& frame) {
  KahanSum num, den;
  for (long i = 0; i < frame.n(); ++i) {
    if (frame.arm[i] != Arm::Control) continue;
    num.add(frame.weight[i] * frame.outcome[i]);
    den.add(frame.weight[i]);
  }
  return den.value() > 0.0 ? num.value() / den.value() : 0.0;
}

double weighted_control_sd(const AnalysisFrame& frame) {
  double mean = weighted_control_mean(frame);
  KahanSum num, den;
  for (long i = 0; i < frame.n(); ++i) {
    if (frame.arm[i] != Arm::Control) continue;
    double d = frame.outcome[i] - mean;
    num.add(frame.weight[i] * d * d);
    den.add(frame.weight[i]);
  }
  return den.value() > 0.0 ? std::sqrt(num.value() / den.value()) : 0.0;
}

IttResult itt(const EstimatorContext& ctx, const OutcomeSpec& outcome,
              const IttOptions& options) {
  FrameOptions fopt;
  std::map<int, double> mult = unit_keyed(options.ipw_multiplier);
  if (options.ipw_multiplier) fopt.weight_multiplier = &mult;
  AnalysisFrame frame = build_analysis_frame(ctx.dataset(), outcome,
                                             WeightMode::EligibleITT, fopt);
  TreatmentBlock treatments = itt_treatments(frame, options.granular);
  KeepBlock keep = always_keep_block(frame, ctx);
  IttResult result;
  result.selected_controls = select_controls(frame, ctx, treatments, keep);
  result.fit = fit_with_controls(frame, ctx, treatments, keep, result.selected_controls);
  result.treatment_names = treatments.names;
  result.control_mean = weighted_control_mean(frame);
  result.control_sd = weighted_control_sd(frame);
  return result;
}

double CostEquivalentResult::predicted_cash_impact(double cost) const {
  return cash_at_benchmark + cost_slope_per_100 * (cost - benchmark) / 100.0;
}

CostEquivalentResult cost_equivalent(const EstimatorContext& ctx,
                                     const OutcomeSpec& outcome,
                                     CeVariant variant,
                                     const CeOptions& options) {
  const Dataset& data = ctx.dataset();
  FrameOptions fopt;
  std::map<int, double> mult = unit_keyed(options.ipw_multiplier);
  if (options.ipw_multiplier) fopt.weight_multiplier = &mult;
  AnalysisFrame frame = build_analysis_frame(
      data, outcome,
      options.population_weights ? WeightMode::PopulationTCE
                                 : WeightMode::EligibleITT,
      fopt);

  TauAssignment tau_assignment =
      options.population_weights
          ? TauAssignment::from_cost_per_village_household(
                data.design, ctx.ledger, ctx.benchmark_override)
          : TauAssignment::from_cost_per_eligible(data.design, ctx.ledger,
                                                  ctx.benchmark_override);
  std::map<int, double> tau_by_village;
  for (std::size_t i = 0; i < data.design.villages.size(); ++i) {
    tau_by_village[data.design.villages[i].id] = tau_assignment.tau[i];
  }

  std::optional<Arm> dropped;
  switch (variant) {
    case CeVariant::DropLower: dropped = Arm::GdLower; break;
    case CeVariant::DropMiddle: dropped = Arm::GdMiddle; break;
    case CeVariant::DropUpper: dropped = Arm::GdUpper; break;
    case CeVariant::DropLarge: dropped = Arm::GdLarge; break;
    default: break;
  }
  if (dropped) {
    std::vector<long> keep_rows;
    for (long i = 0; i < frame.n(); ++i) {
      if (frame.arm[i] != *dropped) keep_rows.push_back(i);
    }
    frame = subset_frame(frame, keep_rows);
  }

  Eigen::VectorXd tau(frame.n());
  for (long i = 0; i < frame.n(); ++i) {
    tau[i] = tau_by_village.at(frame.village[i]) / 100.0;
  }
  bool tau_all_zero = tau.cwiseAbs().maxCoeff() < 1e-12;

  int poly_order = variant == CeVariant::Quadratic  ? 2
                   : variant == CeVariant::Cubic    ? 3
                                                    : 1;
  std::set<double> distinct;
  for (long i = 0; i < frame.n(); ++i) {
    if (is_gd_arm(frame.arm[i])) distinct.insert(tau[i]);
  }
  if (!tau_all_zero && static_cast<int>(distinct.size()) <= poly_order) {
    throw EstimationError(
        std::string("cost_equivalent: ") + ce_variant_name(variant) +
        " needs more distinct tau values than the polynomial order (" +
        std::to_string(distinct.size()) + " available)");
  }

  TreatmentBlock treatments;
  treatments.names = {kAnyTreatment, kGikuriro};
  treatments.columns.resize(frame.n(), 2);
  treatments.columns.col(0) = arm_indicator(
      frame, {Arm::Gikuriro, Arm::GdLower, Arm::GdMiddle, Arm::GdUpper, Arm::GdLarge});
  treatments.columns.col(1) = arm_indicator(frame, {Arm::Gikuriro});

  KeepBlock keep = always_keep_block(frame, ctx);
  std::vector<std::string> controls = select_controls(frame, ctx, treatments, keep);

  DesignBuilder builder(frame.n());
  builder.add(kAnyTreatment, treatments.columns.col(0));
  builder.add(kGikuriro, treatments.columns.col(1));
  CostEquivalentResult result;
  result.variant = variant;
  result.benchmark = tau_assignment.benchmark;
  result.slope_dropped = tau_all_zero;
  if (!tau_all_zero) {
    builder.add(kTauPer100, tau);
    if (poly_order >= 2) builder.add("tau_per_100_sq", tau.cwiseProduct(tau));
    if (poly_order >= 3) {
      builder.add("tau_per_100_cu", tau.cwiseProduct(tau).cwiseProduct(tau));
    }
  }
  for (std::size_t j = 0; j < keep.names.size(); ++j) {
    builder.add(keep.names[j], keep.columns.col(j));
  }
  for (const auto& name : controls) {
    builder.add(name, frame.covariates.col(frame.covariate_index(name)));
  }
  result.fit = fit_wls(builder.matrix(), builder.names(), frame.outcome,
                       frame.weight, cluster_ids(frame, ctx));

  int i_gk = result.fit.index_of(kGikuriro);
  int i_any = result.fit.index_of(kAnyTreatment);
  result.gikuriro_differential = result.fit.beta[i_gk];
  result.gikuriro_differential_se = result.fit.se(i_gk);
  result.gikuriro_differential_p = result.fit.pvalue(i_gk);
  result.cash_at_benchmark = result.fit.beta[i_any];
  result.cash_at_benchmark_se = result.fit.se(i_any);
  if (!tau_all_zero) {
    int i_tau = result.fit.index_of(kTauPer100);
    result.cost_slope_per_100 = result.fit.beta[i_tau];
    result.cost_slope_se = result.fit.se(i_tau);
    // Scaling null: cash at the benchmark equals the linear extrapolation
    // through the origin, delta_t - gamma_1 * C/100 = 0.
    LinearHypothesis h;
    h.restriction = Eigen::MatrixXd::Zero(1, result.fit.k);
    h.restriction(0, i_any) = 1.0;
    h.restriction(0, i_tau) = -result.benchmark / 100.0;
    h.target = Eigen::VectorXd::Zero(1);
    result.proportional_scaling = wald(result.fit, h);
  }
  return result;
}

IttResult tce(const EstimatorContext& ctx, const OutcomeSpec& outcome) {
  AnalysisFrame frame =
      build_analysis_frame(ctx.dataset(), outcome, WeightMode::PopulationTCE);
  TreatmentBlock treatments = itt_treatments(frame, false);
  KeepBlock keep = always_keep_block(frame, ctx);
  IttResult result;
  result.selected_controls = select_controls(frame, ctx, treatments, keep);
  result.fit = fit_with_controls(frame, ctx, treatments, keep, result.selected_controls);
  result.treatment_names = treatments.names;
  result.control_mean = weighted_control_mean(frame);
  result.control_sd = weighted_control_sd(frame);
  return result;
}

CostEquivalentResult benchmarked_tce(const EstimatorContext& ctx,
                                     const OutcomeSpec& outcome) {
  CeOptions options;
  options.population_weights = true;
  return cost_equivalent(ctx, outcome, CeVariant::Linear, options);
}

IttResult spillover(const EstimatorContext& ctx, const OutcomeSpec& outcome) {
  AnalysisFrame frame = build_analysis_frame(ctx.dataset(), outcome,
                                             WeightMode::SpilloverNeverTreat);
  TreatmentBlock treatments;
  treatments.names = {"t_gd_main_village", "t_gd_large_village"};
  treatments.columns.resize(frame.n(), 2);
  treatments.columns.col(0) =
      arm_indicator(frame, {Arm::GdLower, Arm::GdMiddle, Arm::GdUpper});
  treatments.columns.col(1) = arm_indicator(frame, {Arm::GdLarge});
  KeepBlock keep = always_keep_block(frame, ctx);
  IttResult result;
  result.selected_controls = select_controls(frame, ctx, treatments, keep);
  result.fit = fit_with_controls(frame, ctx, treatments, keep, result.selected_controls);
  result.treatment_names = treatments.names;
  result.control_mean = weighted_control_mean(frame);
  result.control_sd = weighted_control_sd(frame);
  return result;
}

namespace {

bool household_attrited(const HouseholdRow& h) {
  for (const auto& [key, _] : h.outcomes) {
    if (key.second == Round::Endline) return false;
  }
  return true;
}

}  // namespace

IttResult attrition_regression(const EstimatorContext& ctx,
                               AttritionLevel level,
                               const AttritionOptions& options) {
  const Dataset& data = ctx.dataset();

  struct Unit {
    const HouseholdRow* household;
    double outcome;
  };
  std::vector<Unit> units;

  std::map<int, const HouseholdRow*> by_id;
  for (const auto& h : data.households) by_id[h.household_id] = &h;

  auto add_household_units = [&](auto&& predicate, auto&& value) {
    for (const auto& h : data.households) {
      if (h.stratum != Stratum::Eligible) continue;
      if (!predicate(h)) continue;
      units.push_back({&h, value(h)});
    }
  };

  switch (level) {
    case AttritionLevel::Household:
      add_household_units([](const HouseholdRow&) { return true; },
                          [](const HouseholdRow& h) {
                            return household_attrited(h) ? 1.0 : 0.0;
                          });
      break;
    case AttritionLevel::NewMember: {
      std::set<int> has_new_member;
      for (const auto& ind : data.individuals) {
        bool base = std::any_of(ind.outcomes.begin(), ind.outcomes.end(),
                                [](const auto& kv) {
                                  return kv.first.second == Round::Baseline;
                                });
        if (!base) has_new_member.insert(ind.household_id);
      }
      add_household_units([](const HouseholdRow&) { return true; },
                          [&](const HouseholdRow& h) {
                            return has_new_member.count(h.household_id) ? 1.0
                                                                        : 0.0;
                          });
      break;
    }
    case AttritionLevel::Roster:
    case AttritionLevel::Anthro:
    case AttritionLevel::Anemia: {
      for (const auto& ind : data.individuals) {
        auto it = by_id.find(ind.household_id);
        if (it == by_id.end() || it->second->stratum != Stratum::Eligible) continue;
        const std::string& anchor = level == AttritionLevel::Anthro
                                        ? options.anthro_outcome
                                        : options.anemia_outcome;
        if (level == AttritionLevel::Roster) {
          // Any baseline presence, missing everything at endline.
          bool base = std::any_of(ind.outcomes.begin(), ind.outcomes.end(),
                                  [](const auto& kv) {
                                    return kv.first.second == Round::Baseline;
                                  });
          if (!base) continue;
          bool end = std::any_of(ind.outcomes.begin(), ind.outcomes.end(),
                                 [](const auto& kv) {
                                   return kv.first.second == Round::Endline;
                                 });
          units.push_back({it->second, end ? 0.0 : 1.0});
        } else if (level == AttritionLevel::Anthro) {
          if (!ind.outcome(anchor, Round::Baseline)) continue;
          units.push_back(
              {it->second, ind.outcome(anchor, Round::Endline) ? 0.0 : 1.0});
        } else {
          if (ind.role == Role::OtherMember) continue;  // not anemia-eligible
          units.push_back(
              {it->second, ind.outcome(anchor, Round::Endline) ? 0.0 : 1.0});
        }
      }
      break;
    }
  }

  if (units.empty()) {
    throw EstimationError("attrition_regression: no units at level " +
                          std::string(attrition_level_name(level)));
  }
  const long n = static_cast<long>(units.size());
  Eigen::VectorXd y(n), w(n);
  std::vector<int> village(n), block(n);
  double y0 = units[0].outcome;
  bool varies = false;
  for (long i = 0; i < n; ++i) {
    y[i] = units[i].outcome;
    varies = varies || y[i] != y0;
    const HouseholdRow& h = *units[i].household;
    w[i] = h.sampling_weight * h.tracking_weight;
    const Village& v = data.design.village(h.village_id);
    village[i] = v.id;
    block[i] = v.block;
  }
  if (!varies) {
    throw EstimationError(
        "attrition_regression: outcome is degenerate (no attrition variation)");
  }

  DesignBuilder builder(n);
  Eigen::VectorXd gk(n), gdm(n), gdl(n);
  for (long i = 0; i < n; ++i) {
    Arm a = data.design.village(units[i].household->village_id).arm;
    gk[i] = a == Arm::Gikuriro;
    gdm[i] = a == Arm::GdLower || a == Arm::GdMiddle || a == Arm::GdUpper;
    gdl[i] = a == Arm::GdLarge;
  }
  builder.add(kGikuriro, gk).add(kGdMain, gdm).add(kGdLarge, gdl);
  builder.add_intercept();
  builder.add_block_effects(block);
  std::vector<std::string> covariates_used;
  if (options.with_covariates) {
    // Column (2) style: add every covariate shared by all units.
    std::map<std::string, long> seen;
    for (long i = 0; i < n; ++i) {
      for (const auto& [k, _] : units[i].household->covariates) seen[k]++;
    }
    for (const auto& [name, count] : seen) {
      if (count != n) continue;
      Eigen::VectorXd col(n);
      for (long i = 0; i < n; ++i) {
        col[i] = units[i].household->covariates.at(name);
      }
      builder.add(name, col);
      covariates_used.push_back(name);
    }
  }

  IttResult result;
  result.fit = fit_wls(builder.matrix(), builder.names(), y, w, village);
  result.treatment_names = {kGikuriro, kGdMain, kGdLarge};
  result.selected_controls = covariates_used;
  KahanSum cm, cw;
  for (long i = 0; i < n; ++i) {
    if (data.design.village(units[i].household->village_id).arm != Arm::Control)
      continue;
    cm.add(w[i] * y[i]);
    cw.add(w[i]);
  }
  result.control_mean = cw.value() > 0 ? cm.value() / cw.value() : 0.0;
  return result;
}

std::vector<BcrRow> bcr_table(const EstimatorContext& ctx,
                              const std::vector<OutcomeSpec>& outcomes) {
  double cpe_gk = cost_per_eligible(ctx.ledger.require(Arm::Gikuriro));
  double cpe_main = (cost_per_eligible(ctx.ledger.require(Arm::GdLower)) +
                     cost_per_eligible(ctx.ledger.require(Arm::GdMiddle)) +
                     cost_per_eligible(ctx.ledger.require(Arm::GdUpper))) /
                    3.0;
  double cpe_large = cost_per_eligible(ctx.ledger.require(Arm::GdLarge));
  if (cpe_gk <= 0.0 || cpe_main <= 0.0 || cpe_large <= 0.0) {
    throw ValidationError("bcr_table: zero cost arm");
  }

  std::vector<BcrRow> rows;
  for (const auto& outcome : outcomes) {
    IttResult fit = itt(ctx, outcome);
    int i_gk = fit.fit.index_of(kGikuriro);
    int i_main = fit.fit.index_of(kGdMain);
    int i_large = fit.fit.index_of(kGdLarge);

    BcrRow row;
    row.outcome = outcome.name;
    // Benefit per $100 of cost per eligible household.
    row.bcr_gikuriro = fit.fit.beta[i_gk] / (cpe_gk / 100.0);
    row.bcr_gd_main = fit.fit.beta[i_main] / (cpe_main / 100.0);
    row.bcr_gd_large = fit.fit.beta[i_large] / (cpe_large / 100.0);
    row.se_gikuriro = fit.fit.se(i_gk) / (cpe_gk / 100.0);
    row.se_gd_main = fit.fit.se(i_main) / (cpe_main / 100.0);
    row.se_gd_large = fit.fit.se(i_large) / (cpe_large / 100.0);
    row.p_gk_vs_main =
        wald(fit.fit, bcr_equality_hypothesis(i_gk, i_main, cpe_gk, cpe_main,
                                              fit.fit.k))
            .p;
    row.p_main_vs_large =
        wald(fit.fit, bcr_equality_hypothesis(i_main, i_large, cpe_main,
                                              cpe_large, fit.fit.k))
            .p;
    row.p_gk_vs_large =
        wald(fit.fit, bcr_equality_hypothesis(i_gk, i_large, cpe_gk, cpe_large,
                                              fit.fit.k))
            .p;
    rows.push_back(row);
  }
  return rows;
}

LumpsumFlowResult lumpsum_flow(const EstimatorContext& ctx,
                               const OutcomeSpec& outcome) {
  AnalysisFrame full =
      build_analysis_frame(ctx.dataset(), outcome, WeightMode::EligibleITT);
  std::vector<long> keep_rows;
  for (long i = 0; i < full.n(); ++i) {
    if (full.arm[i] == Arm::Gikuriro) continue;   // control + GD arms only
    if (full.in_choice_arm[i] == 1) continue;     // choice arm dropped
    if (is_gd_arm(full.arm[i]) && full.assigned_lumpsum[i] < 0) {
      throw ValidationError("lumpsum_flow: GD household " +
                            std::to_string(full.household_id[i]) +
                            " lacks a modality label");
    }
    keep_rows.push_back(i);
  }
  AnalysisFrame frame = subset_frame(full, keep_rows);

  Eigen::VectorXd main_cell =
      arm_indicator(frame, {Arm::GdLower, Arm::GdMiddle, Arm::GdUpper});
  Eigen::VectorXd large_cell = arm_indicator(frame, {Arm::GdLarge});
  Eigen::VectorXd ls(frame.n());
  for (long i = 0; i < frame.n(); ++i) {
    ls[i] = frame.assigned_lumpsum[i] == 1 ? 1.0 : 0.0;
  }

  TreatmentBlock treatments;
  treatments.names = {"t_main_cell", "t_main_x_lumpsum", "t_large",
                      "t_large_x_lumpsum"};
  treatments.columns.resize(frame.n(), 4);
  treatments.columns.col(0) = main_cell;
  treatments.columns.col(1) = main_cell.cwiseProduct(ls);
  treatments.columns.col(2) = large_cell;
  treatments.columns.col(3) = large_cell.cwiseProduct(ls);

  KeepBlock keep = always_keep_block(frame, ctx);
  std::vector<std::string> controls = select_controls(frame, ctx, treatments, keep);
  LumpsumFlowResult result;
  result.fit = fit_with_controls(frame, ctx, treatments, keep, controls);

  auto total = [&](const char* cell, const char* interaction) {
    LinearHypothesis h;
    h.restriction = Eigen::MatrixXd::Zero(1, result.fit.k);
    h.restriction(0, result.fit.index_of(cell)) = 1.0;
    h.restriction(0, result.fit.index_of(interaction)) = 1.0;
    h.target = Eigen::VectorXd::Zero(1);
    return wald(result.fit, h);
  };
  result.total_main_lumpsum = total("t_main_cell", "t_main_x_lumpsum");
  result.total_large_lumpsum = total("t_large", "t_large_x_lumpsum");
  return result;
}

IttResult choice_effect(const EstimatorContext& ctx,
                        const OutcomeSpec& outcome) {
  AnalysisFrame full =
      build_analysis_frame(ctx.dataset(), outcome, WeightMode::EligibleITT);
  std::vector<long> keep_rows;
  for (long i = 0; i < full.n(); ++i) {
    if (!is_gd_arm(full.arm[i])) continue;
    if (full.chose_lumpsum[i] < 0 || full.assigned_lumpsum[i] < 0) {
      throw ValidationError("choice_effect: GD household " +
                            std::to_string(full.household_id[i]) +
                            " lacks a choice record");
    }
    keep_rows.push_back(i);
  }
  if (keep_rows.empty()) {
    throw ValidationError("choice_effect: no GD households with choices");
  }
  AnalysisFrame frame = subset_frame(full, keep_rows);

  TreatmentBlock treatments;
  treatments.names = {"chose_lumpsum", "assigned_lumpsum", "got_what_wanted"};
  treatments.columns.resize(frame.n(), 3);
  for (long i = 0; i < frame.n(); ++i) {
    treatments.columns(i, 0) = frame.chose_lumpsum[i];
    treatments.columns(i, 1) = frame.assigned_lumpsum[i];
    treatments.columns(i, 2) =
        frame.chose_lumpsum[i] == frame.assigned_lumpsum[i] ? 1.0 : 0.0;
  }
  KeepBlock keep = always_keep_block(frame, ctx);
  IttResult result;
  result.selected_controls = select_controls(frame, ctx, treatments, keep);
  result.fit = fit_with_controls(frame, ctx, treatments, keep, result.selected_controls);
  result.treatment_names = treatments.names;
  result.control_mean = weighted_control_mean(frame);
  result.control_sd = weighted_control_sd(frame);
  return result;
}

HeterogeneityResult prespecified_heterogeneity(const EstimatorContext& ctx,
                                               const OutcomeSpec& outcome,
                                               Moderator moderator) {
  AnalysisFrame full =
      build_analysis_frame(ctx.dataset(), outcome, WeightMode::EligibleITT);

  bool behavioral = moderator == Moderator::Impatient ||
                    moderator == Moderator::Inconsistent ||
                    moderator == Moderator::LackOtherControl;

  // Resolve the moderator column before any row filtering.
  auto moderator_value = [&](long i) -> std::optional<double> {
    switch (moderator) {
      case Moderator::BaselineAnthro:
        if (full.lagged_missing[i] > 0.5) return std::nullopt;
        return full.lagged[i];
      case Moderator::FirstThousandDays: {
        int idx = full.covariate_index("age_months");
        if (idx < 0) return std::nullopt;
        return full.covariates(i, idx) < 24.0 ? 1.0 : 0.0;
      }
      case Moderator::Newborn: {
        int idx = full.covariate_index("age_months");
        if (idx < 0) return std::nullopt;
        return full.covariates(i, idx) < 12.0 ? 1.0 : 0.0;
      }
      case Moderator::Impatient:
      case Moderator::Inconsistent:
      case Moderator::LackOtherControl: {
        int idx = full.covariate_index(moderator_name(moderator));
        if (idx < 0) return std::nullopt;
        double v = full.covariates(i, idx);
        if (v < 0.0) return std::nullopt;  // missing trait
        return v;
      }
    }
    return std::nullopt;
  };

  std::vector<long> keep_rows;
  std::vector<double> mod_values;
  for (long i = 0; i < full.n(); ++i) {
    if (behavioral && full.arm[i] == Arm::GdLarge) continue;
    auto v = moderator_value(i);
    if (!v) continue;
    keep_rows.push_back(i);
    mod_values.push_back(*v);
  }
  if (keep_rows.empty()) {
    throw ValidationError("prespecified_heterogeneity: moderator '" +
                          std::string(moderator_name(moderator)) +
                          "' is unavailable");
  }
  AnalysisFrame frame = subset_frame(full, keep_rows);
  Eigen::VectorXd mod =
      Eigen::Map<Eigen::VectorXd>(mod_values.data(), mod_values.size());
  double wmean = frame.weight.dot(mod) / frame.weight.sum();
  double wvar = 0.0;
  for (long i = 0; i < frame.n(); ++i) {
    wvar += frame.weight[i] * (mod[i] - wmean) * (mod[i] - wmean);
  }
  if (wvar / frame.weight.sum() < 1e-12) {
    throw EstimationError("prespecified_heterogeneity: moderator is constant");
  }
  bool continuous = moderator == Moderator::BaselineAnthro;
  if (continuous) mod.array() -= wmean;  // main effects read at the mean

  Eigen::VectorXd gk = arm_indicator(frame, {Arm::Gikuriro});
  Eigen::VectorXd gd_main =
      arm_indicator(frame, {Arm::GdLower, Arm::GdMiddle, Arm::GdUpper});
  Eigen::VectorXd gd_large = arm_indicator(frame, {Arm::GdLarge});

  TreatmentBlock treatments;
  treatments.names = {kGikuriro, kGdMain};
  std::vector<Eigen::VectorXd> cols = {gk, gd_main};
  if (!behavioral) {
    treatments.names.push_back(kGdLarge);
    cols.push_back(gd_large);
  }
  std::string mname = moderator_name(moderator);
  std::vector<std::string> inter_names;
  std::size_t base_count = cols.size();
  for (std::size_t j = 0; j < base_count; ++j) {
    inter_names.push_back(mname + "_x_" + treatments.names[j]);
    cols.push_back(cols[j].cwiseProduct(mod));
  }
  treatments.names.insert(treatments.names.end(), inter_names.begin(),
                          inter_names.end());
  // The baseline-anthro moderator is the lagged outcome, whose main effect
  // the ANCOVA term already carries.
  if (moderator != Moderator::BaselineAnthro) {
    treatments.names.push_back(mname);
    cols.push_back(mod);
  }
  treatments.columns.resize(frame.n(), static_cast<long>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    treatments.columns.col(static_cast<long>(j)) = cols[j];
  }

  KeepBlock keep = always_keep_block(frame, ctx);
  // The moderator already sits in the treatment block; keep the lasso from
  // re-selecting it as a control.
  std::vector<std::string> controls =
      select_controls(frame, ctx, treatments, keep, {mname});
  HeterogeneityResult result;
  result.fit = fit_with_controls(frame, ctx, treatments, keep, controls);
  result.interaction_names = inter_names;

  // Differential moderation across programs: moderator x GD = moderator x GK.
  LinearHypothesis h;
  h.restriction = Eigen::MatrixXd::Zero(1, result.fit.k);
  h.restriction(0, result.fit.index_of(mname + "_x_" + kGdMain)) = 1.0;
  h.restriction(0, result.fit.index_of(mname + "_x_" + kGikuriro)) = -1.0;
  h.target = Eigen::VectorXd::Zero(1);
  result.interactions_equal = wald(result.fit, h);
  return result;
}

CtbTraits ctb_classify(const ChoiceRecord& record) {
  CtbTraits traits;

  // Impatient: in the today-start menu paying double to wait, the money was
  // taken sooner.
  for (const auto& a : record.ctb) {
    if (a.start_days == 0 && a.rate == 2.0) {
      traits.impatient = a.to_sooner > a.to_later;
      break;
    }
  }

  // Inconsistent: strictly more allocated to the sooner date on the near
  // frame than on the far frame at a matched rate.
  double near_total = 0.0, far_total = 0.0;
  int matched = 0;
  for (const auto& near : record.ctb) {
    if (near.start_days != 0) continue;
    for (const auto& far : record.ctb) {
      if (far.start_days == 0 || far.rate != near.rate) continue;
      near_total += near.to_sooner;
      far_total += far.to_sooner;
      ++matched;
    }
  }
  if (matched > 0) traits.inconsistent = near_total > far_total;

  traits.lacks_other_control = record.distrusts_keeping_cash ||
                               record.money_conflict_with_spouse ||
                               record.spouse_wasteful;
  return traits;
}

std::map<int, double> remain_ipw_multipliers(
    const EstimatorContext& ctx, const OutcomeSpec& outcome,
    const std::vector<std::string>& covariates) {
  const Dataset& data = ctx.dataset();

  struct Unit {
    int unit_id;
    const HouseholdRow* household;
    const IndividualRow* individual;
    bool remained;
  };
  std::vector<Unit> units;
  std::map<int, const HouseholdRow*> by_id;
  for (const auto& h : data.households) by_id[h.household_id] = &h;

  if (outcome.level == OutcomeLevel::Household) {
    for (const auto& h : data.households) {
      if (h.stratum != Stratum::Eligible) continue;
      if (!h.outcome(outcome.name, Round::Baseline) &&
          !h.outcome(outcome.name, Round::Endline)) {
        continue;
      }
      units.push_back({h.household_id, &h, nullptr,
                       h.outcome(outcome.name, Round::Endline).has_value()});
    }
  } else {
    for (const auto& ind : data.individuals) {
      auto it = by_id.find(ind.household_id);
      if (it == by_id.end() || it->second->stratum != Stratum::Eligible) continue;
      if (!outcome.subpop.admits(ind)) continue;
      if (!ind.outcome(outcome.name, Round::Baseline)) continue;
      units.push_back({ind.individual_id, it->second, &ind,
                       ind.outcome(outcome.name, Round::Endline).has_value()});
    }
  }
  if (units.empty()) {
    throw EstimationError("remain_ipw_multipliers: no at-risk units");
  }

  const long n = static_cast<long>(units.size());
  Eigen::MatrixXd x(n, covariates.size() +
                           (outcome.level == OutcomeLevel::Individual ? 2 : 0));
  std::vector<std::string> xnames = covariates;
  Eigen::MatrixXd t(n, 3);
  Eigen::VectorXd remained(n), w(n);
  std::vector<int> ids(n);
  for (long i = 0; i < n; ++i) {
    const Unit& u = units[i];
    for (std::size_t j = 0; j < covariates.size(); ++j) {
      auto it = u.household->covariates.find(covariates[j]);
      if (it == u.household->covariates.end()) {
        throw ValidationError("remain propensity covariate '" + covariates[j] +
                              "' missing");
      }
      x(i, static_cast<long>(j)) = it->second;
    }
    if (outcome.level == OutcomeLevel::Individual) {
      x(i, static_cast<long>(covariates.size())) = u.individual->female;
      x(i, static_cast<long>(covariates.size()) + 1) = u.individual->age_months;
    }
    Arm a = data.design.village(u.household->village_id).arm;
    t(i, 0) = a == Arm::Gikuriro;
    t(i, 1) = a == Arm::GdLower || a == Arm::GdMiddle || a == Arm::GdUpper;
    t(i, 2) = a == Arm::GdLarge;
    remained[i] = u.remained ? 1.0 : 0.0;
    w[i] = u.household->sampling_weight * u.household->tracking_weight;
    ids[i] = u.unit_id;
  }
  if (outcome.level == OutcomeLevel::Individual) {
    xnames.push_back("female");
    xnames.push_back("age_months");
  }

  PropensityModel model = fit_remain_propensity(
      x, xnames, t, {kGikuriro, kGdMain, kGdLarge}, remained, w);
  return ipw_multipliers(model, x, t, remained, ids, ctx.propensity_floor);
}

}  // namespace cashbench
