// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Run directly or through ctest; `--criterion N` runs a single entry.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cashbench/config.hpp"
#include "cashbench/costing.hpp"
#include "cashbench/errors.hpp"
#include "cashbench/estimators.hpp"
#include "cashbench/forest.hpp"
#include "cashbench/inference.hpp"
#include "cashbench/lasso.hpp"
#include "cashbench/rng.hpp"
#include "cashbench/runner.hpp"
#include "cashbench/simlab.hpp"
#include "cashbench/stats.hpp"
#include "cashbench/wls.hpp"

using namespace cashbench;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  bool pass = false;
  std::string details;
};

struct Check {
  bool ok;
  std::string text;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

CriterionResult summarize(const std::vector<Check>& checks) {
  CriterionResult result;
  result.pass = true;
  for (const auto& c : checks) {
    result.pass = result.pass && c.ok;
    if (!result.details.empty()) result.details += "; ";
    result.details += c.text;
  }
  return result;
}

// ---------------------------------------------------------------- criterion 1

CriterionResult criterion_cost_ledger() {
  const Arm arms[] = {Arm::Gikuriro, Arm::GdLower, Arm::GdMiddle, Arm::GdUpper,
                      Arm::GdLarge};
  const double published_cpe[] = {124.49, 53.58, 95.86, 121.24, 517.44};
  const double published_cpv[] = {28.02, 12.20, 20.83, 26.69, 99.56};

  CostLedgerSet reference = CostLedgerSet::reference();
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const ArmCostLedger& l = reference.require(arms[i]);
    worst = std::max(worst, std::fabs(cost_per_eligible(l) - published_cpe[i]) /
                                published_cpe[i]);
    worst = std::max(worst,
                     std::fabs(cost_per_village_household(l) - published_cpv[i]) /
                         published_cpv[i]);
  }

  // Same formulas fed with the printed 2 d.p. compliance rates, reported for
  // transparency: the input rounding alone moves two village-level cells
  // past 2.5%.
  CostLedgerSet printed;
  printed.arms = {{Arm::Gikuriro, 141.84, 0.60, 0.80, 0.19},
                  {Arm::GdLower, 66.02, 1.00, 0.81, 0.18},
                  {Arm::GdMiddle, 111.09, 1.00, 0.86, 0.19},
                  {Arm::GdUpper, 145.43, 1.00, 0.83, 0.18},
                  {Arm::GdLarge, 566.55, 1.00, 0.91, 0.18}};
  double worst_printed = 0.0;
  for (int i = 0; i < 5; ++i) {
    const ArmCostLedger& l = printed.require(arms[i]);
    worst_printed = std::max(
        worst_printed,
        std::fabs(cost_per_eligible(l) - published_cpe[i]) / published_cpe[i]);
    worst_printed = std::max(
        worst_printed,
        std::fabs(cost_per_village_household(l) - published_cpv[i]) /
            published_cpv[i]);
  }
  return summarize(
      {{worst < 0.025, "bundled-ledger max error " + fmt(100 * worst) + "% (< 2.5%)"},
       {true, "printed 2 d.p. rates give max " + fmt(100 * worst_printed) +
                  "% (rounding-induced)"}});
}

// ---------------------------------------------------------------- criterion 2

CriterionResult criterion_wls_oracle() {
  Philox rng(2024, 0);
  double worst_beta = 0.0, worst_v = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    long n = 20 + static_cast<long>(rng.uniform_int(41));  // <= 60 rows
    int g = 2 + static_cast<int>(rng.uniform_int(7));      // <= 8 clusters
    long k = 2 + static_cast<long>(rng.uniform_int(4));
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n), w(n);
    std::vector<int> cluster(n);
    for (long i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      for (long j = 1; j < k; ++j) x(i, j) = rng.normal();
      w[i] = rng.uniform(0.3, 3.0);
      cluster[i] = static_cast<int>(rng.uniform_int(g));
      y[i] = 0.5 + 0.2 * x.row(i).sum() + rng.normal();
    }
    cluster[0] = 0;
    cluster[1] = 1;
    std::vector<std::string> names(k, "x");
    FitResult fit = fit_wls(x, names, y, w, cluster);

    // Independent dense route: explicit normal equations and an explicit
    // cluster-by-cluster sandwich.
    Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    Eigen::VectorXd beta = xtwx.fullPivLu().solve(
        x.transpose() * w.asDiagonal() * y);
    Eigen::VectorXd resid = y - x * beta;
    Eigen::MatrixXd bread = xtwx.fullPivLu().inverse();
    std::map<int, Eigen::VectorXd> sums;
    for (long i = 0; i < n; ++i) {
      auto [it, _] = sums.try_emplace(cluster[i], Eigen::VectorXd::Zero(k));
      it->second += w[i] * resid[i] * x.row(i).transpose();
    }
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (auto& [id, s] : sums) meat += s * s.transpose();
    double gg = static_cast<double>(sums.size());
    Eigen::MatrixXd vcov =
        gg / (gg - 1.0) * (n - 1.0) / (n - k) * bread * meat * bread;

    for (long j = 0; j < k; ++j) {
      worst_beta = std::max(worst_beta, std::fabs(fit.beta[j] - beta[j]) /
                                            std::max(1.0, std::fabs(beta[j])));
    }
    double scale = vcov.cwiseAbs().maxCoeff();
    worst_v = std::max(worst_v,
                       (fit.vcov - vcov).cwiseAbs().maxCoeff() / scale);
  }
  return summarize({{worst_beta < 1e-8,
                     "max coefficient deviation " + fmt(worst_beta, 3)},
                    {worst_v < 1e-8, "max covariance deviation " + fmt(worst_v, 3)}});
}

// ---------------------------------------------------------------- criterion 3

CriterionResult criterion_cost_equivalent_validity() {
  DgpSpec spec;  // reference design and ledger
  OutcomeDgp outcome;
  outcome.name = "y";
  outcome.effect.kind = EffectSpec::Kind::LinearInCost;
  outcome.effect.cash_at_benchmark = 0.15;
  outcome.effect.slope_per_100 = 0.05;
  outcome.effect.gikuriro_offset = 0.5;
  spec.outcomes.push_back(outcome);
  spec.attrition_enabled = false;

  EstimatorDescriptor est;
  est.kind = EstimatorDescriptor::Kind::CostEquivalent;
  est.outcome.name = "y";
  est.target_coefficient = kGikuriro;
  est.true_value = 0.5;
  McReport report = monte_carlo(spec, est, 500, 31);
  return summarize(
      {{std::fabs(report.mean_estimate - 0.5) < 0.03,
        "mean gikuriro differential " + fmt(report.mean_estimate) +
            " (target 0.5 +- 0.03)"},
       {report.coverage95 >= 0.93 && report.coverage95 <= 0.97,
        "95% CI coverage " + fmt(100 * report.coverage95, 3) + "% (in [93,97])"}});
}

// ---------------------------------------------------------------- criterion 4

CriterionResult criterion_interpolation_power() {
  DgpSpec spec;
  OutcomeDgp outcome;
  outcome.name = "y";
  spec.outcomes.push_back(outcome);
  PowerStudyResult result = interpolation_power_study(spec, 1000, 47);

  double analytic = result.analytic_ratio_vs_linear[2];
  double mc = result.mc_ratio_vs_linear[2];
  double agreement = std::fabs(mc - analytic) / analytic;
  return summarize(
      {{analytic > 1.0, "analytic cubic/linear variance ratio " + fmt(analytic)},
       {mc > 1.0, "mc ratio " + fmt(mc)},
       {agreement < 0.10, "analytic vs mc gap " + fmt(100 * agreement, 3) + "%"},
       {true, "benchmark ratio 2.58 for comparison"}});
}

// ---------------------------------------------------------------- criterion 5

int step_up_reference(const std::vector<double>& sorted_p, double level) {
  const int m = static_cast<int>(sorted_p.size());
  for (int i = m; i >= 1; --i) {
    if (sorted_p[i - 1] <= level * i / m) return i;
  }
  return 0;
}

std::vector<double> sharpened_q_reference(const std::vector<double>& pvals) {
  const int m = static_cast<int>(pvals.size());
  std::vector<double> sorted = pvals;
  std::sort(sorted.begin(), sorted.end());
  auto rejected_at = [&](double level) {
    double stage1 = level / (1.0 + level);
    int r1 = step_up_reference(sorted, stage1);
    if (r1 == m) return m;
    return step_up_reference(sorted, stage1 * m / (m - r1));
  };
  std::vector<double> q(m, 1.0);
  for (int i = 0; i < m; ++i) {
    int rank = 0;
    for (int j = 0; j < m; ++j) {
      if (pvals[j] < pvals[i] || (pvals[j] == pvals[i] && j <= i)) ++rank;
    }
    for (int step = 1; step <= 1000; ++step) {
      double level = step / 1000.0;
      if (rejected_at(level) >= rank) {
        q[i] = level;
        break;
      }
    }
  }
  return q;
}

CriterionResult criterion_sharpened_q() {
  Philox rng(5150, 0);
  long mismatches = 0, monotone_violations = 0, bound_violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    int m = 1 + static_cast<int>(rng.uniform_int(20));
    std::vector<double> p;
    for (int i = 0; i < m; ++i) {
      p.push_back(rng.bernoulli(0.35) ? rng.uniform() * 0.02 : rng.uniform());
    }
    std::vector<double> q = sharpened_q(p);
    std::vector<double> ref = sharpened_q_reference(p);
    for (int i = 0; i < m; ++i) mismatches += q[i] != ref[i];

    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return p[a] < p[b]; });
    for (int i = 1; i < m; ++i) {
      monotone_violations += q[order[i]] < q[order[i - 1]];
    }

    // Plain-BH dominance: step-up at level q contains BH at q/(1+q), so the
    // sharpened value never exceeds the deflated-BH bound.
    std::vector<double> bh = bh_q(p);
    for (int i = 0; i < m; ++i) {
      double bound =
          bh[i] >= 1.0 ? 1.0 : std::ceil(bh[i] / (1.0 - bh[i]) * 1000.0) / 1000.0;
      bound_violations += q[i] > std::min(1.0, bound) + 1e-12;
    }
  }
  return summarize({{mismatches == 0, "grid-reference mismatches " +
                                          std::to_string(mismatches) + "/1000 vectors"},
                    {monotone_violations == 0,
                     "monotonicity violations " + std::to_string(monotone_violations)},
                    {bound_violations == 0,
                     "BH-dominance violations " + std::to_string(bound_violations)}});
}

// ---------------------------------------------------------------- criterion 6

CriterionResult criterion_post_double_lasso() {
  Philox rng(66, 0);
  const int reps = 500;
  int all_found = 0;
  double worst_kkt = 0.0;
  LassoOptions options;
  for (int rep = 0; rep < reps; ++rep) {
    const long n = 500, p = 50;
    Eigen::MatrixXd candidates(n, p);
    Eigen::VectorXd y(n);
    Eigen::MatrixXd t(n, 1);
    for (long i = 0; i < n; ++i) {
      for (long j = 0; j < p; ++j) candidates(i, j) = rng.normal();
      double confound = 0.0;
      for (int j = 0; j < 5; ++j) confound += candidates(i, j);
      t(i, 0) = confound * 0.8 + rng.normal() > 0.0 ? 1.0 : 0.0;
      y[i] = 0.4 * t(i, 0) + 0.8 * confound + rng.normal();
    }
    // KKT audit on the outcome-equation lasso at the selection penalty.
    LassoProblem prob;
    prob.response = y;
    prob.candidates = candidates;
    prob.always_keep = Eigen::MatrixXd::Ones(n, 1);
    prob.weights = Eigen::VectorXd::Ones(n);
    prob.lambda = penalty_level(n, p).lambda;
    LassoFit fit = lasso_fit(prob, options);
    worst_kkt = std::max(worst_kkt, fit.max_kkt_violation);

    SelectionResult sel =
        post_double_select(y, t, candidates, Eigen::MatrixXd::Ones(n, 1),
                           Eigen::VectorXd::Ones(n));
    std::set<int> got(sel.selected.begin(), sel.selected.end());
    bool ok = true;
    for (int j = 0; j < 5; ++j) ok = ok && got.count(j);
    all_found += ok;
  }
  double rate = static_cast<double>(all_found) / reps;
  return summarize(
      {{rate >= 0.95, "all five confounders selected in " + fmt(100 * rate, 4) +
                          "% of reps (>= 95%)"},
       {worst_kkt <= 1e-6, "max KKT residual " + fmt(worst_kkt, 3) + " (<= 1e-6)"}});
}

// ---------------------------------------------------------------- criterion 7

CriterionResult criterion_forest() {
  Philox rng(77, 0);
  auto make_data = [&](auto tau) {
    ResidualizedData d;
    const long n = 2000;
    const int m = 8;
    d.outcome_res.resize(n);
    d.treatment_res.resize(n);
    d.treatment_binary.resize(n);
    d.weights = Eigen::VectorXd::Ones(n);
    d.moderators.resize(n, m);
    d.moderator_names.assign(m, "x");
    for (long i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) d.moderators(i, j) = rng.normal();
      double t = rng.bernoulli(0.5) ? 1.0 : 0.0;
      d.treatment_binary[i] = t;
      d.treatment_res[i] = t - 0.5;
      d.outcome_res[i] =
          d.treatment_res[i] * tau(d.moderators.row(i)) + rng.normal(0.0, 0.5);
    }
    return d;
  };

  ForestConfig config;  // production defaults: 2000 trees, 0.5/0.5, 5+5
  config.seed = 2718;

  // Step-function CATE.
  auto step = [](const auto& x) { return x[0] > 0.0 ? 0.9 : 0.1; };
  ResidualizedData step_data = make_data(step);
  CateModel step_model = fit_forest(step_data, config);
  Eigen::VectorXd pred = step_model.predict(step_data.moderators);
  Eigen::VectorXd truth(pred.size());
  for (long i = 0; i < truth.size(); ++i) {
    truth[i] = step(step_data.moderators.row(i));
  }
  double pm = pred.mean(), tm = truth.mean();
  double corr = ((pred.array() - pm) * (truth.array() - tm)).mean() /
                std::sqrt((pred.array() - pm).square().mean() *
                          (truth.array() - tm).square().mean());

  // Homogeneous effect.
  ResidualizedData flat_data = make_data([](const auto&) { return 0.5; });
  CateModel flat_model = fit_forest(flat_data, config);
  Eigen::VectorXd flat_pred = flat_model.predict(flat_data.moderators);
  double sd = std::sqrt(
      (flat_pred.array() - flat_pred.mean()).square().mean());

  // Honesty audit over both forests.
  long dishonest = 0, trees = 0;
  for (const CateModel* model : {&step_model, &flat_model}) {
    for (const auto& tree : model->trees) {
      std::set<int> split(tree.split_half.begin(), tree.split_half.end());
      bool overlap = false;
      for (int i : tree.estimate_half) overlap = overlap || split.count(i);
      dishonest += overlap;
      ++trees;
    }
  }
  return summarize(
      {{corr >= 0.5, "step-CATE correlation " + fmt(corr) + " (>= 0.5)"},
       {sd <= 0.05, "homogeneous prediction sd " + fmt(sd) + " (<= 0.1*tau = 0.05)"},
       {dishonest == 0, "honest trees " + std::to_string(trees - dishonest) +
                            "/" + std::to_string(trees)}});
}

// ---------------------------------------------------------------- criterion 8

CriterionResult criterion_targeting_inequality() {
  Philox rng(88, 0);
  int violations = 0;
  for (int rep = 0; rep < 100; ++rep) {
    int k = 2 + static_cast<int>(rng.uniform_int(4));
    long n = 50 + static_cast<long>(rng.uniform_int(200));
    std::vector<Eigen::VectorXd> cates;
    for (int j = 0; j < k; ++j) {
      Eigen::VectorXd c(n);
      for (long i = 0; i < n; ++i) c[i] = rng.normal(0.0, 1.5);
      cates.push_back(c);
    }
    TargetingReport report = targeting_gains(cates);
    double mean_gain = 0.0;
    for (double g : report.outcome_gains) mean_gain += g;
    mean_gain /= k;
    violations += report.composite_gain > mean_gain + 1e-12;
  }
  // Aligned configuration attains the bound exactly.
  Eigen::VectorXd shared(40);
  Philox rng2(89, 0);
  for (long i = 0; i < 40; ++i) shared[i] = rng2.normal();
  TargetingReport aligned = targeting_gains({shared, shared, shared});
  bool equality = std::fabs(aligned.composite_gain - aligned.outcome_gains[0]) < 1e-12;
  return summarize({{violations == 0,
                     "inequality violations " + std::to_string(violations) + "/100"},
                    {equality, "aligned case attains equality"}});
}

// ---------------------------------------------------------------- criterion 9

CriterionResult criterion_ipw_attrition() {
  DgpSpec spec;
  spec.attrition_enabled = true;
  OutcomeDgp outcome;
  outcome.name = "y";
  outcome.effect.kind = EffectSpec::Kind::Constant;
  outcome.effect.arm_effect = {0.0, 0.3, 0.3, 0.3, 0.3, 0.3};
  outcome.endline_covariate_effects = {{"x1", 0.6}};
  spec.outcomes.push_back(outcome);
  // Retention depends on x1 only within treated arms: classic MAR on
  // observables with a differential by arm.
  spec.attrition.control_remain = 0.90;
  spec.attrition.arm_logit_shift = {0, 0, 0, 0, 0, 0};
  spec.attrition.covariate_treated_logit = {{"x1", 1.8}};

  const int reps = 500;
  std::vector<double> naive(reps), corrected(reps);
  for_each_index(reps, ExecMode::Parallel, 0, [&](std::size_t rep) {
    SimData sim = generate(spec, 9000 + 17 * rep);
    EstimatorContext ctx;
    ctx.data = &sim.data;
    ctx.ledger = spec.ledger;
    ctx.lasso_controls = false;
    OutcomeSpec y;
    y.name = "y";
    naive[rep] = itt(ctx, y).fit.coef(kGdLarge);
    auto mult = remain_ipw_multipliers(ctx, y, {"x1"});
    IttOptions opts;
    opts.ipw_multiplier = &mult;
    corrected[rep] = itt(ctx, y, opts).fit.coef(kGdLarge);
  });
  double naive_bias = 0.0, ipw_bias = 0.0;
  for (int r = 0; r < reps; ++r) {
    naive_bias += naive[r] - 0.3;
    ipw_bias += corrected[r] - 0.3;
  }
  naive_bias /= reps;
  ipw_bias /= reps;
  double reduction = 1.0 - std::fabs(ipw_bias) / std::fabs(naive_bias);
  return summarize(
      {{std::fabs(naive_bias) >= 0.10,
        "induced complete-case bias " + fmt(naive_bias) + " (>= 0.1)"},
       {reduction >= 0.80, "ipw bias " + fmt(ipw_bias) + ", reduction " +
                               fmt(100 * reduction, 3) + "% (>= 80%)"}});
}

// --------------------------------------------------------------- criterion 10

CriterionResult criterion_ratio_test_size() {
  DgpSpec spec;
  spec.attrition_enabled = false;
  OutcomeDgp outcome;
  outcome.name = "y";
  outcome.effect.kind = EffectSpec::Kind::Constant;
  double c_gk = cost_per_eligible(spec.ledger.require(Arm::Gikuriro));
  double c_large = cost_per_eligible(spec.ledger.require(Arm::GdLarge));
  double per_dollar = 0.2 / 100.0;
  outcome.effect.arm_effect = {0.0, per_dollar * c_gk, 0.1, 0.1, 0.1,
                               per_dollar * c_large};
  spec.outcomes.push_back(outcome);

  EstimatorDescriptor est;
  est.kind = EstimatorDescriptor::Kind::BcrEqualityTest;
  est.outcome.name = "y";
  McReport report = monte_carlo(spec, est, 2000, 101);
  double rate = report.reject_rate_at_true;
  return summarize({{rate >= 0.035 && rate <= 0.065,
                     "equal-BCR rejection rate " + fmt(100 * rate, 3) +
                         "% (5% +- 1.5pp)"}});
}

// --------------------------------------------------------------- criterion 11

CriterionResult criterion_determinism() {
  const char* config_template = R"({
    "schema_version": 1,
    "seed": 4242,
    "output_dir": "PLACEHOLDER",
    "ledger": "reference",
    "dgp": {
      "reference_design": false,
      "villages_per_arm": 6,
      "eligible_per_village": 8,
      "ineligible_per_village": 4,
      "outcomes": [
        {"name": "cons", "effect": {"kind": "linear_in_cost",
          "cash_at_benchmark": 0.1, "slope_per_100": 0.05}},
        {"name": "diet", "family": "secondary",
         "effect": {"kind": "constant", "arm_effects": [0,0.2,0.1,0.1,0.1,0.4]}}
      ]
    },
    "outcomes": [
      {"name": "cons", "family": "primary"},
      {"name": "diet", "family": "secondary"}
    ],
    "lasso_controls": false,
    "report": {"ce_outcome": "cons", "diet_outcomes": ["diet"]}
  })";

  auto run_into = [&](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string cfg = config_template;
    cfg.replace(cfg.find("PLACEHOLDER"), std::strlen("PLACEHOLDER"),
                dir.string());
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    for (const char* command : {"simulate", "itt", "ce", "bcr", "report"}) {
      run_command(command, config, {}, log);
    }
  };
  fs::path a = fs::temp_directory_path() / "cashbench_acc_a";
  fs::path b = fs::temp_directory_path() / "cashbench_acc_b";
  run_into(a);
  run_into(b);

  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  int compared = 0, identical = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), a);
    ++compared;
    identical += slurp(entry.path()) == slurp(b / rel);
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return summarize({{compared > 5 && identical == compared,
                     std::to_string(identical) + "/" + std::to_string(compared) +
                         " artifacts byte-identical across reruns"}});
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
    }
  }

  struct Entry {
    const char* name;
    std::function<CriterionResult()> run;
  };
  const std::vector<Entry> entries = {
      {"cost ledger reproduction", criterion_cost_ledger},
      {"WLS/CR1 oracle equivalence", criterion_wls_oracle},
      {"cost-equivalent estimator validity", criterion_cost_equivalent_validity},
      {"interpolation power ordering", criterion_interpolation_power},
      {"sharpened q-values", criterion_sharpened_q},
      {"post-double lasso selection", criterion_post_double_lasso},
      {"honest causal forest", criterion_forest},
      {"targeting inequality", criterion_targeting_inequality},
      {"IPW attrition correction", criterion_ipw_attrition},
      {"ratio-test size", criterion_ratio_test_size},
      {"artifact determinism", criterion_determinism},
  };

  bool all_pass = true;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    int number = static_cast<int>(i) + 1;
    if (only != 0 && number != only) continue;
    auto start = std::chrono::steady_clock::now();
    CriterionResult result;
    try {
      result = entries[i].run();
    } catch (const std::exception& e) {
      result.pass = false;
      result.details = std::string("exception: ") + e.what();
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::printf("[%s] criterion %2d: %s (%.1fs) — %s\n",
                result.pass ? "PASS" : "FAIL", number, entries[i].name, seconds,
                result.details.c_str());
    std::fflush(stdout);
    all_pass = all_pass && result.pass;
  }
  return all_pass ? 0 : 1;
}
