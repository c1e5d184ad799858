#include <cmath>
#include <map>
#include <sstream>

#include "cashbench/config.hpp"
#include "cashbench/errors.hpp"
#include "cashbench/simlab.hpp"
#include "doctest.h"

using namespace cashbench;

namespace {

DgpSpec constant_effect_spec(double gd_large_effect = 0.4) {
  DgpSpec spec = DgpSpec::small(6, 8, 4);
  OutcomeDgp outcome;
  outcome.name = "y";
  outcome.effect.kind = EffectSpec::Kind::Constant;
  outcome.effect.arm_effect = {0.0, 0.2, 0.1, 0.1, 0.1, gd_large_effect};
  spec.outcomes.push_back(outcome);
  spec.attrition_enabled = false;
  return spec;
}

std::string dataset_fingerprint(const Dataset& data) {
  std::ostringstream ss;
  ss.precision(17);
  for (const auto& h : data.households) {
    ss << h.household_id << "," << h.village_id << ","
       << (h.stratum == Stratum::Eligible) << "," << h.sampling_weight << ","
       << h.complied << "," << h.ubudehe << "," << h.members;
    for (const auto& [k, v] : h.covariates) ss << "," << k << "=" << v;
    for (const auto& [k, v] : h.outcomes) {
      ss << "," << k.first << (k.second == Round::Baseline ? "@b" : "@e") << "="
         << v;
    }
    ss << "\n";
  }
  for (const auto& ind : data.individuals) {
    ss << ind.individual_id << "," << ind.household_id << "," << ind.age_months;
    for (const auto& [k, v] : ind.outcomes) ss << "," << k.first << "=" << v;
    ss << "\n";
  }
  return ss.str();
}

}  // namespace

TEST_SUITE("simlab") {
  TEST_CASE("identical spec and seed give byte-identical datasets") {
    DgpSpec spec = constant_effect_spec();
    spec.generate_individuals = true;
    OutcomeDgp haz;
    haz.name = "haz";
    haz.level = OutcomeLevel::Individual;
    spec.outcomes.push_back(haz);
    SimData a = generate(spec, 99);
    SimData b = generate(spec, 99);
    CHECK(dataset_fingerprint(a.data) == dataset_fingerprint(b.data));
    SimData c = generate(spec, 100);
    CHECK(dataset_fingerprint(a.data) != dataset_fingerprint(c.data));
  }

  TEST_CASE("zero effect and zero ICC leave pure noise variance") {
    DgpSpec spec = DgpSpec::small(8, 10, 0);
    OutcomeDgp outcome;
    outcome.name = "y";
    outcome.rho = 0.0;  // endline variance is exactly the noise variance
    spec.outcomes.push_back(outcome);
    spec.icc = 0.0;
    spec.noise_sd = 1.3;
    spec.attrition_enabled = false;
    SimData sim = generate(spec, 5);
    double sum = 0, sum2 = 0;
    long n = 0;
    for (const auto& h : sim.data.households) {
      double y = *h.outcome("y", Round::Endline);
      sum += y;
      sum2 += y * y;
      ++n;
    }
    double var = sum2 / n - (sum / n) * (sum / n);
    CHECK(var == doctest::Approx(1.3 * 1.3).epsilon(0.1));
  }

  TEST_CASE("village effects hit the target ICC") {
    // One-way ANOVA estimator of the intraclass correlation over the
    // control villages.
    DgpSpec spec;
    {
      StudyDesign d;
      d.blocks = {0, 1};
      for (int v = 1; v <= 200; ++v) {
        d.villages.push_back({v, (v - 1) % 2, Arm::Control, std::nullopt});
      }
      spec.design = d;
      spec.eligible_per_arm = {200 * 10, 0, 0, 0, 0, 0};
      spec.ineligible_per_arm = {0, 0, 0, 0, 0, 0};
    }
    OutcomeDgp outcome;
    outcome.name = "y";
    outcome.rho = 0.0;
    spec.outcomes.push_back(outcome);
    spec.icc = 0.3;
    spec.attrition_enabled = false;
    SimData sim = generate(spec, 21);

    std::map<int, std::vector<double>> by_village;
    for (const auto& h : sim.data.households) {
      by_village[h.village_id].push_back(*h.outcome("y", Round::Endline));
    }
    double grand = 0;
    long n = 0;
    for (auto& [v, ys] : by_village) {
      for (double y : ys) {
        grand += y;
        ++n;
      }
    }
    grand /= n;
    double ssb = 0, ssw = 0;
    long g = static_cast<long>(by_village.size());
    double npg = static_cast<double>(n) / g;
    for (auto& [v, ys] : by_village) {
      double mean = 0;
      for (double y : ys) mean += y;
      mean /= ys.size();
      ssb += ys.size() * (mean - grand) * (mean - grand);
      for (double y : ys) ssw += (y - mean) * (y - mean);
    }
    double msb = ssb / (g - 1);
    double msw = ssw / (n - g);
    double icc_hat = (msb - msw) / (msb + (npg - 1) * msw);
    CHECK(std::fabs(icc_hat - 0.3) < 0.05);
  }

  TEST_CASE("generated compliance is consistent with the cost ledger") {
    DgpSpec spec = constant_effect_spec();
    SimData sim = generate(spec, 33);
    std::map<Arm, std::pair<long, long>> eligible_counts;
    for (const auto& h : sim.data.households) {
      if (h.stratum != Stratum::Eligible) continue;
      Arm arm = sim.data.design.village(h.village_id).arm;
      if (!is_treated_arm(arm)) continue;
      eligible_counts[arm].first += h.complied;
      eligible_counts[arm].second += 1;
    }
    for (const auto& [arm, counts] : eligible_counts) {
      const ArmCostLedger& ledger = spec.ledger.require(arm);
      double rate = static_cast<double>(counts.first) / counts.second;
      double se = std::sqrt(ledger.compliance_eligible *
                            (1 - ledger.compliance_eligible) / counts.second);
      CHECK(std::fabs(rate - ledger.compliance_eligible) < 4.0 * se + 0.01);
      // Recomputed cost per eligible tracks the ledger target.
      ArmCostLedger realized = ledger;
      realized.compliance_eligible = rate;
      CHECK(cost_per_eligible(realized) ==
            doctest::Approx(cost_per_eligible(ledger))
                .epsilon(4.0 * se / ledger.compliance_eligible + 0.02));
    }
  }

  TEST_CASE("infeasible specs are rejected") {
    DgpSpec spec = constant_effect_spec();
    spec.icc = 0.4;
    spec.noise_sd = 0.0;
    CHECK_THROWS_AS(generate(spec, 1), ValidationError);
    DgpSpec no_outcomes = DgpSpec::small(2, 4, 2);
    CHECK_THROWS_AS(generate(no_outcomes, 1), ValidationError);
  }

  TEST_CASE("monte carlo grades an unbiased estimator as unbiased") {
    // 72 clusters: enough for CR1 coverage to sit near nominal.
    DgpSpec spec = DgpSpec::small(12, 8, 4);
    OutcomeDgp outcome;
    outcome.name = "y";
    outcome.effect.kind = EffectSpec::Kind::Constant;
    outcome.effect.arm_effect = {0.0, 0.2, 0.1, 0.1, 0.1, 0.4};
    spec.outcomes.push_back(outcome);
    spec.attrition_enabled = false;
    EstimatorDescriptor est;
    est.kind = EstimatorDescriptor::Kind::Itt;
    est.outcome.name = "y";
    est.target_coefficient = kGdLarge;
    est.true_value = 0.4;
    McReport report = monte_carlo(spec, est, 300, 7);
    CHECK(report.completed_reps == 300);
    double mc_se = report.sd_estimate / std::sqrt(300.0);
    CHECK(std::fabs(report.bias) < 2.5 * mc_se + 0.005);
    CHECK(report.coverage95 > 0.905);
    CHECK(report.coverage95 <= 1.0);
    CHECK(report.mean_reported_se ==
          doctest::Approx(report.sd_estimate).epsilon(0.2));
  }

  TEST_CASE("monte carlo is deterministic and schedule independent") {
    DgpSpec spec = constant_effect_spec();
    EstimatorDescriptor est;
    est.kind = EstimatorDescriptor::Kind::Itt;
    est.outcome.name = "y";
    est.target_coefficient = kGdLarge;
    est.true_value = 0.4;
    McOptions serial;
    serial.mode = ExecMode::Serial;
    McOptions parallel;
    parallel.mode = ExecMode::Parallel;
    parallel.threads = 2;
    McReport a = monte_carlo(spec, est, 60, 11, serial);
    McReport b = monte_carlo(spec, est, 60, 11, parallel);
    CHECK(a.mean_estimate == b.mean_estimate);
    CHECK(a.sd_estimate == b.sd_estimate);
    CHECK(a.coverage95 == b.coverage95);
  }

  TEST_CASE("excessive estimator failures abort with diagnostics") {
    DgpSpec spec = constant_effect_spec();
    EstimatorDescriptor est;
    est.kind = EstimatorDescriptor::Kind::Itt;
    est.outcome.name = "no_such_outcome";
    CHECK_THROWS_AS(monte_carlo(spec, est, 50, 3), EstimationError);
  }

  TEST_CASE("analytic variance ordering across interpolation variants") {
    DgpSpec spec;
    OutcomeDgp outcome;
    outcome.name = "y";
    spec.outcomes.push_back(outcome);
    PowerStudyResult result = interpolation_power_study(spec, 60, 13);

    // Gauss-Markov nesting: richer tau polynomials never reduce the
    // analytic variance of the Gikuriro differential.
    double lin = result.analytic_variance[0];
    double quad = result.analytic_variance[1];
    double cubic = result.analytic_variance[2];
    CHECK(quad >= lin - 1e-12);
    CHECK(cubic >= quad - 1e-12);
    CHECK(result.analytic_ratio_vs_linear[2] > 1.0);
    // The quadratic ratio sits between the linear and cubic ones.
    CHECK(result.analytic_ratio_vs_linear[1] >= 1.0);
    CHECK(result.analytic_ratio_vs_linear[1] <=
          result.analytic_ratio_vs_linear[2]);
  }

  TEST_CASE("small designs deal households evenly") {
    DgpSpec spec = constant_effect_spec();
    SimData sim = generate(spec, 44);
    std::map<int, int> per_village;
    for (const auto& h : sim.data.households) per_village[h.village_id]++;
    for (const auto& [v, count] : per_village) CHECK(count == 12);
  }

  TEST_CASE("reference dgp reproduces the design row counts") {
    DgpSpec spec;
    OutcomeDgp outcome;
    outcome.name = "y";
    spec.outcomes.push_back(outcome);
    SimData sim = generate(spec, 55);
    std::array<long, kNumArms> eligible{}, ineligible{};
    for (const auto& h : sim.data.households) {
      int a = static_cast<int>(sim.data.design.village(h.village_id).arm);
      (h.stratum == Stratum::Eligible ? eligible : ineligible)[a]++;
    }
    CHECK(eligible == std::array<long, kNumArms>{521, 541, 165, 154, 167, 246});
    CHECK(ineligible == std::array<long, kNumArms>{298, 297, 88, 87, 88, 137});
  }

  TEST_CASE("modality assignment follows the configured split") {
    // GD eligible count ~3k keeps every share within 4 sigma of the bound.
    DgpSpec spec = DgpSpec::small(40, 20, 0);
    OutcomeDgp outcome;
    outcome.name = "y";
    spec.outcomes.push_back(outcome);
    spec.attrition_enabled = false;
    SimData sim = generate(spec, 66);
    long flow = 0, lump = 0, choice = 0, chose_ls = 0, gd_total = 0;
    for (const auto& h : sim.data.households) {
      if (h.stratum != Stratum::Eligible) continue;
      if (!is_gd_arm(sim.data.design.village(h.village_id).arm)) continue;
      ++gd_total;
      REQUIRE(h.choice.has_value());
      chose_ls += h.choice->chose_lump_sum;
      if (h.choice->in_choice_arm) {
        ++choice;
      } else if (h.choice->assigned == Modality::LumpSum) {
        ++lump;
      } else {
        ++flow;
      }
    }
    CHECK(std::fabs(static_cast<double>(flow) / gd_total - 0.625) < 0.04);
    CHECK(std::fabs(static_cast<double>(lump) / gd_total - 0.25) < 0.035);
    CHECK(std::fabs(static_cast<double>(choice) / gd_total - 0.125) < 0.025);
    CHECK(std::fabs(static_cast<double>(chose_ls) / gd_total - 0.65) < 0.035);
  }
}
