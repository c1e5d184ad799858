#include "cashbench/simlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cashbench/errors.hpp"
#include "cashbench/rng.hpp"
#include "cashbench/stats.hpp"
#include "cashbench/wls.hpp"

namespace cashbench {

double EffectSpec::evaluate(Arm arm, double tau_per_100, double moderator_value,
                            bool assigned_lumpsum, bool got_choice,
                            bool complied, bool eligible) const {
  if (arm == Arm::Control) return 0.0;
  if (!eligible) {
    // Treated ineligibles receive the arm effect; untreated ones only the
    // spillover term.
    if (!is_gd_arm(arm)) return 0.0;
    if (!complied) return gd_ineligible_spillover;
  } else if (compliers_only && !complied) {
    return 0.0;
  }
  double base = 0.0;
  switch (kind) {
    case Kind::Constant:
      base = arm_effect[static_cast<int>(arm)];
      break;
    case Kind::LinearInCost:
      base = arm == Arm::Gikuriro
                 ? cash_at_benchmark + gikuriro_offset
                 : cash_at_benchmark + slope_per_100 * tau_per_100;
      break;
    case Kind::ModeratorStep:
      if (arm == Arm::Gikuriro) {
        base = 0.0;
      } else {
        base = step_base +
               (moderator_value > step_threshold ? step_size : 0.0);
      }
      break;
  }
  if (is_gd_arm(arm)) {
    if (assigned_lumpsum) base += lumpsum_bonus;
    if (got_choice) base += matched_choice_bonus;
  }
  return base;
}

void DgpSpec::validate() const {
  design.validate();
  if (!(icc >= 0.0 && icc < 1.0)) {
    throw ValidationError("dgp: ICC must lie in [0,1)");
  }
  if (noise_sd <= 0.0 && icc > 0.0) {
    throw ValidationError("dgp: ICC requires positive noise");
  }
  if (outcomes.empty()) throw ValidationError("dgp: no outcomes specified");
  double split = modality_split[0] + modality_split[1] + modality_split[2];
  if (std::fabs(split - 1.0) > 1e-9) {
    throw ValidationError("dgp: modality split must sum to one");
  }
  for (double p : {choice_lumpsum_rate, impatient_rate, inconsistent_rate,
                   lack_other_control_rate}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("dgp: probabilities must lie in [0,1]");
    }
  }
}

DgpSpec DgpSpec::small(int villages_per_arm, int eligible_per_village,
                       int ineligible_per_village) {
  DgpSpec spec;
  StudyDesign d;
  int n_blocks = std::max(2, villages_per_arm / 2);
  d.blocks.resize(n_blocks);
  std::iota(d.blocks.begin(), d.blocks.end(), 0);
  int id = 1;
  for (int a = 0; a < kNumArms; ++a) {
    for (int v = 0; v < villages_per_arm; ++v) {
      Village vil;
      vil.id = id;
      vil.block = (id - 1) % n_blocks;
      vil.arm = static_cast<Arm>(a);
      if (is_gd_arm(vil.arm)) {
        vil.assigned_transfer = 40.0 + 120.0 * (a - 2);
      }
      d.villages.push_back(vil);
      ++id;
    }
  }
  spec.design = d;
  for (int a = 0; a < kNumArms; ++a) {
    spec.eligible_per_arm[a] = villages_per_arm * eligible_per_village;
    spec.ineligible_per_arm[a] = villages_per_arm * ineligible_per_village;
  }
  return spec;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct VillagePlan {
  const Village* village;
  int eligible = 0;
  int ineligible = 0;
  double tau_per_100 = 0.0;
};

}  // namespace

SimData generate(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate();
  SimData sim;
  sim.data.design = spec.design;
  sim.truth.benchmark = default_benchmark(spec.ledger);
  for (const auto& o : spec.outcomes) sim.truth.effects[o.name] = o.effect;

  // Deal the per-arm household totals round-robin across the arm's villages.
  std::vector<VillagePlan> plans;
  std::array<std::vector<int>, kNumArms> villages_by_arm;
  for (std::size_t i = 0; i < spec.design.villages.size(); ++i) {
    villages_by_arm[static_cast<int>(spec.design.villages[i].arm)].push_back(
        static_cast<int>(i));
  }
  plans.resize(spec.design.villages.size());
  for (std::size_t i = 0; i < spec.design.villages.size(); ++i) {
    plans[i].village = &spec.design.villages[i];
    plans[i].tau_per_100 =
        tau_for_village(spec.design.villages[i].arm, spec.ledger,
                        sim.truth.benchmark) /
        100.0;
  }
  for (int a = 0; a < kNumArms; ++a) {
    const auto& vs = villages_by_arm[a];
    if (vs.empty()) continue;
    for (int h = 0; h < spec.eligible_per_arm[a]; ++h) {
      plans[vs[h % vs.size()]].eligible++;
    }
    for (int h = 0; h < spec.ineligible_per_arm[a]; ++h) {
      plans[vs[h % vs.size()]].ineligible++;
    }
  }
  for (int a = 0; a < kNumArms; ++a) {
    sim.truth.tau_per_100[static_cast<Arm>(a)] =
        is_gd_arm(static_cast<Arm>(a))
            ? tau_for_village(static_cast<Arm>(a), spec.ledger,
                              sim.truth.benchmark) /
                  100.0
            : 0.0;
  }

  const double sd_village = spec.noise_sd * std::sqrt(spec.icc);
  const double sd_noise = spec.noise_sd * std::sqrt(1.0 - spec.icc);
  const int n_outcomes = static_cast<int>(spec.outcomes.size());

  int next_household = 1;
  int next_individual = 1;
  for (auto& plan : plans) {
    const Village& village = *plan.village;
    // Per-village stream: replications and villages never share draws.
    Philox rng(seed, static_cast<std::uint64_t>(village.id));

    // Village random effects, one pair per outcome (baseline, endline).
    std::vector<double> u1(n_outcomes), u2(n_outcomes);
    for (int o = 0; o < n_outcomes; ++o) {
      u1[o] = rng.normal(0.0, sd_village);
      u2[o] = rng.normal(0.0, sd_village);
    }

    const int total = plan.eligible + plan.ineligible;
    std::vector<int> sizes(total);
    for (int h = 0; h < total; ++h) {
      sizes[h] = 2 + static_cast<int>(rng.uniform_int(8));  // 2..9 members
    }
    TransferSchedule transfers;
    if (village.assigned_transfer) {
      transfers = scale_transfers(*village.assigned_transfer, sizes);
    }

    for (int h = 0; h < total; ++h) {
      HouseholdRow row;
      row.household_id = next_household++;
      row.village_id = village.id;
      bool eligible = h < plan.eligible;
      row.stratum = eligible ? Stratum::Eligible : Stratum::Ineligible;
      row.members = sizes[h];
      row.ubudehe = eligible ? (rng.bernoulli(0.7) ? 1 : 2)
                             : 1 + static_cast<int>(rng.uniform_int(4));
      if (spec.constant_weights) {
        row.sampling_weight =
            eligible ? 0.5 * (spec.eligible_weight_lo + spec.eligible_weight_hi)
                     : 0.5 * (spec.ineligible_weight_lo + spec.ineligible_weight_hi);
      } else {
        row.sampling_weight =
            eligible
                ? rng.uniform(spec.eligible_weight_lo, spec.eligible_weight_hi)
                : rng.uniform(spec.ineligible_weight_lo,
                              spec.ineligible_weight_hi);
      }
      row.tracking_weight = 1.0;

      for (int c = 0; c < spec.n_covariates; ++c) {
        row.covariates["x" + std::to_string(c + 1)] = rng.normal();
      }
      row.covariates["l_wealth_ihs"] = rng.normal(7.0, 1.0);

      // Compliance per the ledger; the never-treated ineligible stratum is
      // excluded from cash targeting by design.
      const ArmCostLedger* ledger = spec.ledger.find(village.arm);
      if (village.arm == Arm::Gikuriro) {
        row.complied = eligible && rng.bernoulli(ledger->compliance_eligible);
      } else if (is_gd_arm(village.arm)) {
        if (eligible) {
          row.complied = rng.bernoulli(ledger->compliance_eligible);
        } else {
          bool targetable = row.ubudehe <= 2 && row.members >= 3;
          row.complied =
              targetable && rng.bernoulli(ledger->compliance_population);
        }
      }

      // Cash modality, the incentivized choice, and the CTB block.
      ChoiceRecord choice;
      choice.chose_lump_sum = rng.bernoulli(spec.choice_lumpsum_rate);
      bool impatient = rng.bernoulli(spec.impatient_rate);
      bool inconsistent = rng.bernoulli(spec.inconsistent_rate);
      choice.distrusts_keeping_cash = rng.bernoulli(spec.lack_other_control_rate);
      choice.money_conflict_with_spouse = false;
      choice.spouse_wasteful = false;
      double far_soon = rng.uniform(0.0, 0.4);
      choice.ctb = {
          {0, 2.0, impatient ? 1.0 : 0.0, impatient ? 0.0 : 1.0},
          {0, 1.2, std::min(1.0, far_soon + (inconsistent ? 0.4 : 0.0)),
           1.0 - std::min(1.0, far_soon + (inconsistent ? 0.4 : 0.0))},
          {90, 1.2, far_soon, 1.0 - far_soon},
          {90, 2.0, 0.0, 1.0},
      };
      row.covariates["impatient"] = impatient ? 1.0 : 0.0;
      row.covariates["inconsistent"] = inconsistent ? 1.0 : 0.0;
      row.covariates["lack_other_control"] =
          choice.distrusts_keeping_cash ? 1.0 : 0.0;
      bool assigned_ls = false, got_choice = false;
      if (is_gd_arm(village.arm) && eligible) {
        double m = rng.uniform();
        if (m < spec.modality_split[2]) {
          choice.in_choice_arm = true;
          choice.assigned =
              choice.chose_lump_sum ? Modality::LumpSum : Modality::Flow;
        } else {
          choice.assigned = m < spec.modality_split[2] + spec.modality_split[1]
                                ? Modality::LumpSum
                                : Modality::Flow;
        }
        assigned_ls = choice.assigned == Modality::LumpSum;
        got_choice = assigned_ls == choice.chose_lump_sum;
        row.covariates["transfer_usd"] = transfers.usd[h];
      }
      row.choice = choice;

      // Attrition: logistic in covariates, arms, and their interactions.
      bool remains = true;
      if (spec.attrition_enabled) {
        double eta = logit(spec.attrition.control_remain) +
                     spec.attrition.arm_logit_shift[static_cast<int>(village.arm)];
        for (const auto& [name, coef] : spec.attrition.covariate_logit) {
          eta += coef * row.covariates.at(name);
        }
        if (is_treated_arm(village.arm)) {
          for (const auto& [name, coef] :
               spec.attrition.covariate_treated_logit) {
            eta += coef * row.covariates.at(name);
          }
        }
        remains = rng.bernoulli(sigmoid(eta));
      }

      for (int o = 0; o < n_outcomes; ++o) {
        const OutcomeDgp& dgp = spec.outcomes[o];
        if (dgp.level != OutcomeLevel::Household) continue;
        double mod = 0.0;
        if (dgp.effect.kind == EffectSpec::Kind::ModeratorStep) {
          mod = row.covariates.at(dgp.effect.moderator);
        }
        double y1 = dgp.baseline_mean + u1[o] + rng.normal(0.0, sd_noise);
        double effect = dgp.effect.evaluate(village.arm, plan.tau_per_100, mod,
                                            assigned_ls, got_choice,
                                            row.complied, eligible);
        double y2 = dgp.endline_mean + effect +
                    dgp.rho * (y1 - dgp.baseline_mean) + u2[o] +
                    rng.normal(0.0, sd_noise);
        for (const auto& [name, coef] : dgp.endline_covariate_effects) {
          y2 += coef * row.covariates.at(name);
        }
        if (dgp.binary) {
          y1 = y1 > 0.0 ? 1.0 : 0.0;
          y2 = y2 > 0.0 ? 1.0 : 0.0;
        }
        row.outcomes[{dgp.name, Round::Baseline}] = y1;
        if (remains) row.outcomes[{dgp.name, Round::Endline}] = y2;
      }

      // Individual rows: children under six plus one woman per household.
      // Baseline measurement covered the eligible stratum; ineligible
      // members enter with endline values only.
      if (spec.generate_individuals && (eligible || row.members >= 3)) {
        int n_children =
            spec.min_children +
            static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(spec.max_children - spec.min_children + 1)));
        for (int c = 0; c < n_children + 1; ++c) {
          IndividualRow ind;
          ind.individual_id = next_individual++;
          ind.household_id = row.household_id;
          bool is_child = c < n_children;
          ind.role = is_child ? Role::ChildU6 : Role::WomanChildbearing;
          ind.female = is_child ? rng.bernoulli(0.5) : true;
          ind.age_months = is_child ? rng.uniform(0.0, 71.0)
                                    : rng.uniform(18.0 * 12, 45.0 * 12);
          bool newborn = is_child && rng.bernoulli(0.05);
          bool measured_at_baseline = eligible && !newborn;
          bool ind_remains = remains;
          if (spec.attrition_enabled && is_child) {
            double eta = logit(spec.attrition.control_remain) +
                         spec.attrition
                             .arm_logit_shift[static_cast<int>(village.arm)] +
                         spec.attrition.anthro_extra_attrition_logit;
            ind_remains = remains && rng.bernoulli(sigmoid(eta));
          }
          for (int o = 0; o < n_outcomes; ++o) {
            const OutcomeDgp& dgp = spec.outcomes[o];
            if (dgp.level != OutcomeLevel::Individual) continue;
            double mod = 0.0;
            if (dgp.effect.kind == EffectSpec::Kind::ModeratorStep) {
              mod = row.covariates.at(dgp.effect.moderator);
            }
            double y1 = dgp.baseline_mean + u1[o] + rng.normal(0.0, sd_noise);
            double effect = dgp.effect.evaluate(
                village.arm, plan.tau_per_100, mod, assigned_ls, got_choice,
                row.complied, eligible);
            double y2 = dgp.endline_mean + effect +
                        dgp.rho * (y1 - dgp.baseline_mean) + u2[o] +
                        rng.normal(0.0, sd_noise);
            for (const auto& [name, coef] : dgp.endline_covariate_effects) {
              y2 += coef * row.covariates.at(name);
            }
            if (dgp.binary) {
              y1 = y1 > 0.0 ? 1.0 : 0.0;
              y2 = y2 > 0.0 ? 1.0 : 0.0;
            }
            if (measured_at_baseline) {
              ind.outcomes[{dgp.name, Round::Baseline}] = y1;
            }
            if (ind_remains) ind.outcomes[{dgp.name, Round::Endline}] = y2;
          }
          sim.data.individuals.push_back(std::move(ind));
        }
      }
      sim.data.households.push_back(std::move(row));
    }
  }
  return sim;
}

namespace {

struct RepOutcome {
  bool failed = false;
  double estimate = 0.0;
  double se = 0.0;
  double p_at_true = 1.0;
  double p_at_zero = 1.0;
  int df = 0;
};

RepOutcome run_one(const DgpSpec& spec, const EstimatorDescriptor& est,
                   std::uint64_t seed) {
  RepOutcome out;
  SimData sim = generate(spec, seed);
  EstimatorContext ctx;
  ctx.data = &sim.data;
  ctx.ledger = spec.ledger;
  ctx.lasso_controls = est.lasso_controls;

  auto grade_fit = [&](const FitResult& fit) {
    int idx = fit.index_of(est.target_coefficient);
    out.estimate = fit.beta[idx];
    out.se = fit.se(idx);
    out.df = fit.n_clusters - 1;
    double t_true = (out.estimate - est.true_value) / out.se;
    out.p_at_true = student_t_sf_two_sided(t_true, out.df);
    out.p_at_zero = student_t_sf_two_sided(out.estimate / out.se, out.df);
  };

  switch (est.kind) {
    case EstimatorDescriptor::Kind::Itt:
      grade_fit(itt(ctx, est.outcome).fit);
      break;
    case EstimatorDescriptor::Kind::Tce:
      grade_fit(tce(ctx, est.outcome).fit);
      break;
    case EstimatorDescriptor::Kind::CostEquivalent:
      grade_fit(cost_equivalent(ctx, est.outcome, est.variant).fit);
      break;
    case EstimatorDescriptor::Kind::BenchmarkedTce:
      grade_fit(benchmarked_tce(ctx, est.outcome).fit);
      break;
    case EstimatorDescriptor::Kind::Spillover:
      grade_fit(spillover(ctx, est.outcome).fit);
      break;
    case EstimatorDescriptor::Kind::AttritionReg:
      grade_fit(attrition_regression(ctx, est.attrition_level).fit);
      break;
    case EstimatorDescriptor::Kind::LumpsumFlow:
      grade_fit(lumpsum_flow(ctx, est.outcome).fit);
      break;
    case EstimatorDescriptor::Kind::Choice:
      grade_fit(choice_effect(ctx, est.outcome).fit);
      break;
    case EstimatorDescriptor::Kind::IttIpw: {
      IttOptions opts;
      auto mult = remain_ipw_multipliers(ctx, est.outcome, est.ipw_covariates);
      opts.ipw_multiplier = &mult;
      grade_fit(itt(ctx, est.outcome, opts).fit);
      break;
    }
    case EstimatorDescriptor::Kind::BcrEqualityTest: {
      IttResult fit = itt(ctx, est.outcome);
      double c_gk = cost_per_eligible(spec.ledger.require(Arm::Gikuriro));
      double c_large = cost_per_eligible(spec.ledger.require(Arm::GdLarge));
      WaldResult w = wald(
          fit.fit, bcr_equality_hypothesis(fit.fit.index_of(kGikuriro),
                                           fit.fit.index_of(kGdLarge), c_gk,
                                           c_large, fit.fit.k));
      out.estimate = w.f;
      out.se = 1.0;
      out.p_at_true = w.p;
      out.p_at_zero = w.p;
      out.df = fit.fit.n_clusters - 1;
      break;
    }
  }
  return out;
}

}  // namespace

McReport monte_carlo(const DgpSpec& spec, const EstimatorDescriptor& estimator,
                     int reps, std::uint64_t seed, const McOptions& options) {
  if (reps < 1) throw ValidationError("monte_carlo: need at least one rep");
  auto start = std::chrono::steady_clock::now();

  std::vector<RepOutcome> results(reps);
  for_each_index(static_cast<std::size_t>(reps), options.mode, options.threads,
                 [&](std::size_t r) {
                   try {
                     // Distinct replication seeds give disjoint Philox keys.
                     results[r] = run_one(spec, estimator,
                                          seed + 0x10000ull * (r + 1));
                   } catch (const std::exception&) {
                     results[r].failed = true;
                   }
                 });

  McReport report;
  report.requested_reps = reps;
  KahanSum sum_est, sum_se;
  std::vector<double> estimates;
  int covered = 0, reject_true = 0, reject_zero = 0;
  for (const auto& r : results) {
    if (r.failed) {
      report.failures++;
      continue;
    }
    estimates.push_back(r.estimate);
    sum_est.add(r.estimate);
    sum_se.add(r.se);
    if (r.p_at_true >= 0.05) ++covered;  // t-based CI inverts the same test
    if (r.p_at_true < 0.05) ++reject_true;
    if (r.p_at_zero < 0.05) ++reject_zero;
  }
  report.completed_reps = static_cast<int>(estimates.size());
  if (report.failures >
      options.max_failure_rate * static_cast<double>(reps)) {
    throw EstimationError("monte_carlo: estimator failed on " +
                          std::to_string(report.failures) + "/" +
                          std::to_string(reps) + " replications");
  }
  if (report.completed_reps == 0) {
    throw EstimationError("monte_carlo: no successful replications");
  }
  double n = static_cast<double>(report.completed_reps);
  report.mean_estimate = sum_est.value() / n;
  report.bias = report.mean_estimate - estimator.true_value;
  double ss = 0.0;
  for (double e : estimates) {
    ss += (e - report.mean_estimate) * (e - report.mean_estimate);
  }
  report.sd_estimate = std::sqrt(ss / std::max(1.0, n - 1.0));
  report.mean_reported_se = sum_se.value() / n;
  report.coverage95 = covered / n;
  report.reject_rate_at_true = reject_true / n;
  report.reject_rate_at_zero = reject_zero / n;
  report.wallclock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

namespace {

// The exact sandwich for the no-covariate CE regression with fixed design:
// Var(beta) = A^-1 X'W Omega W X A^-1 with Omega = sde^2 I + sdv^2 ZZ'.
Eigen::MatrixXd analytic_variance(const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd& weights,
                                  std::span<const int> villages,
                                  double village_var, double noise_var) {
  Eigen::VectorXd sw = weights.cwiseSqrt();
  Eigen::MatrixXd xw = sw.asDiagonal() * design;
  Eigen::MatrixXd a = xw.transpose() * xw;
  Eigen::MatrixXd a_inv =
      a.ldlt().solve(Eigen::MatrixXd::Identity(design.cols(), design.cols()));

  Eigen::MatrixXd wx = weights.asDiagonal() * design;  // W X
  Eigen::MatrixXd meat = noise_var * (wx.transpose() * (weights.asDiagonal() * design));
  std::map<int, Eigen::VectorXd> village_sums;
  for (long i = 0; i < design.rows(); ++i) {
    auto [it, _] = village_sums.try_emplace(villages[i],
                                            Eigen::VectorXd::Zero(design.cols()));
    it->second += wx.row(i).transpose();
  }
  for (const auto& [v, s] : village_sums) {
    meat += village_var * s * s.transpose();
  }
  return a_inv * meat * a_inv;
}

}  // namespace

PowerStudyResult interpolation_power_study(const DgpSpec& user_spec, int reps,
                                           std::uint64_t seed,
                                           const McOptions& options) {
  // Fixed design: constant weights, no attrition, no lasso, no covariates in
  // the regression, so the analytic formula is exact for the same X.
  DgpSpec spec = user_spec;
  spec.constant_weights = true;
  spec.attrition_enabled = false;
  if (spec.outcomes.empty()) {
    throw ValidationError("power study: spec needs one outcome");
  }
  OutcomeSpec outcome;
  outcome.name = spec.outcomes[0].name;
  outcome.transform.kind = Transform::Kind::None;

  const std::vector<CeVariant> variants = {
      CeVariant::Linear,    CeVariant::Quadratic, CeVariant::Cubic,
      CeVariant::DropLower, CeVariant::DropMiddle, CeVariant::DropUpper,
      CeVariant::DropLarge};

  PowerStudyResult result;
  result.variants = variants;

  // One frozen dataset fixes the design matrix shared by both paths.
  SimData frozen = generate(spec, seed);
  EstimatorContext ctx;
  ctx.data = &frozen.data;
  ctx.ledger = spec.ledger;
  ctx.lasso_controls = false;

  AnalysisFrame base_frame =
      build_analysis_frame(frozen.data, outcome, WeightMode::EligibleITT);
  TauAssignment tau =
      TauAssignment::from_cost_per_eligible(frozen.data.design, spec.ledger);
  std::map<int, double> tau_by_village;
  for (std::size_t i = 0; i < frozen.data.design.villages.size(); ++i) {
    tau_by_village[frozen.data.design.villages[i].id] = tau.tau[i];
  }

  double village_var = spec.noise_sd * spec.noise_sd * spec.icc;
  double noise_var = spec.noise_sd * spec.noise_sd * (1.0 - spec.icc);

  for (CeVariant variant : variants) {
    std::vector<long> keep;
    std::optional<Arm> dropped;
    switch (variant) {
      case CeVariant::DropLower: dropped = Arm::GdLower; break;
      case CeVariant::DropMiddle: dropped = Arm::GdMiddle; break;
      case CeVariant::DropUpper: dropped = Arm::GdUpper; break;
      case CeVariant::DropLarge: dropped = Arm::GdLarge; break;
      default: break;
    }
    for (long i = 0; i < base_frame.n(); ++i) {
      if (!dropped || base_frame.arm[i] != *dropped) keep.push_back(i);
    }
    const long n = static_cast<long>(keep.size());
    int order = variant == CeVariant::Quadratic  ? 2
                : variant == CeVariant::Cubic    ? 3
                                                 : 1;
    DesignBuilder builder(n);
    builder.add_intercept();
    std::vector<int> blocks(n), villages(n);
    Eigen::VectorXd w(n), t_any(n), t_gk(n), tau_col(n);
    for (long i = 0; i < n; ++i) {
      long s = keep[i];
      blocks[i] = base_frame.block[s];
      villages[i] = base_frame.village[s];
      w[i] = base_frame.weight[s];
      t_any[i] = is_treated_arm(base_frame.arm[s]) ? 1.0 : 0.0;
      t_gk[i] = base_frame.arm[s] == Arm::Gikuriro ? 1.0 : 0.0;
      tau_col[i] = tau_by_village.at(base_frame.village[s]) / 100.0;
    }
    builder.add_block_effects(blocks);
    builder.add(kAnyTreatment, t_any);
    builder.add(kGikuriro, t_gk);
    builder.add(kTauPer100, tau_col);
    if (order >= 2) builder.add("tau_sq", tau_col.cwiseProduct(tau_col));
    if (order >= 3) {
      builder.add("tau_cu", tau_col.cwiseProduct(tau_col).cwiseProduct(tau_col));
    }
    const Eigen::MatrixXd& design = builder.matrix();

    int gk_index = -1;
    for (std::size_t j = 0; j < builder.names().size(); ++j) {
      if (builder.names()[j] == kGikuriro) gk_index = static_cast<int>(j);
    }
    Eigen::MatrixXd avar =
        analytic_variance(design, w, villages, village_var, noise_var);
    result.analytic_variance.push_back(avar(gk_index, gk_index));

    // Monte Carlo on the same design; replication r redraws outcomes only.
    std::vector<double> estimates(reps);
    for_each_index(static_cast<std::size_t>(reps), options.mode,
                   options.threads, [&](std::size_t r) {
      Philox rng(seed ^ 0x9e3779b97f4a7c15ull, 1000000ull + r);
      std::map<int, double> u_village;
      for (int v : villages) {
        if (!u_village.count(v)) {
          u_village[v] = rng.normal(0.0, std::sqrt(village_var));
        }
      }
      Eigen::VectorXd y(n);
      for (long i = 0; i < n; ++i) {
        y[i] = u_village[villages[i]] + rng.normal(0.0, std::sqrt(noise_var));
      }
      FitResult fit = fit_wls(design, builder.names(), y, w, villages);
      estimates[r] = fit.beta[gk_index];
    });
    double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) /
                  static_cast<double>(reps);
    double ss = 0.0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    result.mc_variance.push_back(ss / (reps - 1.0));
  }

  for (std::size_t v = 0; v < variants.size(); ++v) {
    result.analytic_ratio_vs_linear.push_back(result.analytic_variance[v] /
                                              result.analytic_variance[0]);
    result.mc_ratio_vs_linear.push_back(result.mc_variance[v] /
                                        result.mc_variance[0]);
  }
  return result;
}

}  // namespace cashbench
