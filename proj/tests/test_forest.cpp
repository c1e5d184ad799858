#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cashbench/errors.hpp"
#include "cashbench/forest.hpp"
#include "cashbench/rng.hpp"
#include "doctest.h"

using namespace cashbench;

namespace {

// Residualized two-arm data with a configurable CATE function.
template <typename TauFn>
ResidualizedData make_data(Philox& rng, long n, int m, TauFn tau,
                           double noise = 0.5) {
  ResidualizedData d;
  d.outcome_res.resize(n);
  d.treatment_res.resize(n);
  d.treatment_binary.resize(n);
  d.weights = Eigen::VectorXd::Ones(n);
  d.moderators.resize(n, m);
  for (int j = 0; j < m; ++j) {
    d.moderator_names.push_back("x" + std::to_string(j + 1));
  }
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) d.moderators(i, j) = rng.normal();
    double t = rng.bernoulli(0.5) ? 1.0 : 0.0;
    d.treatment_binary[i] = t;
    d.treatment_res[i] = t - 0.5;  // demeaned assignment
    d.outcome_res[i] =
        d.treatment_res[i] * tau(d.moderators.row(i)) + rng.normal(0.0, noise);
  }
  return d;
}

ForestConfig quick_config(int trees, std::uint64_t seed) {
  ForestConfig config;
  config.n_trees = trees;
  config.seed = seed;
  config.min_rows = 100;
  return config;
}

}  // namespace

TEST_SUITE("forest") {
  TEST_CASE("residualization reproduces the full-regression coefficient") {
    // Frisch-Waugh identity: the slope of residualized outcome on
    // residualized treatment equals the treatment coefficient of the full
    // regression with the same controls.
    Philox rng(1, 0);
    const long n = 300;
    Eigen::VectorXd y(n), t(n), w(n);
    Eigen::MatrixXd controls(n, 2);
    std::vector<int> blocks(n), clusters(n);
    for (long i = 0; i < n; ++i) {
      controls(i, 0) = rng.normal();
      controls(i, 1) = rng.normal();
      t[i] = rng.bernoulli(0.5);
      w[i] = rng.uniform(0.5, 2.0);
      blocks[i] = static_cast<int>(i % 4);
      clusters[i] = static_cast<int>(i % 25);
      y[i] = 0.7 * t[i] + 0.5 * controls(i, 0) - 0.2 * controls(i, 1) +
             0.1 * blocks[i] + rng.normal();
    }
    Residualized res = residualize(y, t, controls, {"c1", "c2"}, blocks, w,
                                   clusters);

    DesignBuilder full(n);
    full.add("treat", t).add_intercept().add_block_effects(blocks);
    full.add("c1", controls.col(0)).add("c2", controls.col(1));
    FitResult full_fit = fit_wls(full.matrix(), full.names(), y, w, clusters);

    DesignBuilder partial(n);
    partial.add("treat_res", res.treatment_res);
    FitResult partial_fit = fit_wls(partial.matrix(), partial.names(),
                                    res.outcome_res, w, clusters);
    CHECK(partial_fit.beta[0] ==
          doctest::Approx(full_fit.coef("treat")).epsilon(1e-8));
  }

  TEST_CASE("residualization drops constant covariates") {
    Philox rng(2, 0);
    const long n = 120;
    Eigen::VectorXd y(n), t(n), w = Eigen::VectorXd::Ones(n);
    Eigen::MatrixXd controls(n, 2);
    std::vector<int> blocks(n, 0), clusters(n);
    for (long i = 0; i < n; ++i) {
      controls(i, 0) = 5.0;  // constant
      controls(i, 1) = rng.normal();
      t[i] = rng.bernoulli(0.5);
      clusters[i] = static_cast<int>(i % 10);
      y[i] = t[i] + controls(i, 1) + rng.normal();
    }
    Residualized res =
        residualize(y, t, controls, {"konst", "c"}, blocks, w, clusters);
    CHECK(res.outcome_fit.k == 2);  // intercept + c only
  }

  TEST_CASE("orthogonal covariates leave the slope unchanged") {
    Philox rng(3, 0);
    const long n = 4000;
    Eigen::VectorXd y(n), t(n), w = Eigen::VectorXd::Ones(n);
    Eigen::MatrixXd controls(n, 1);
    std::vector<int> blocks(n, 0), clusters(n);
    for (long i = 0; i < n; ++i) {
      controls(i, 0) = rng.normal();  // independent of treatment
      t[i] = rng.bernoulli(0.5);
      clusters[i] = static_cast<int>(i % 100);
      y[i] = 0.4 * t[i] + rng.normal();
    }
    DesignBuilder raw(n);
    raw.add("treat", t).add_intercept();
    double raw_slope =
        fit_wls(raw.matrix(), raw.names(), y, w, clusters).coef("treat");
    Residualized res = residualize(y, t, controls, {"c"}, blocks, w, clusters);
    DesignBuilder partial(n);
    partial.add("treat_res", res.treatment_res);
    double res_slope = fit_wls(partial.matrix(), partial.names(),
                               res.outcome_res, w, clusters)
                           .beta[0];
    CHECK(res_slope == doctest::Approx(raw_slope).epsilon(0.01));
  }

  TEST_CASE("honesty: split and estimation halves never overlap") {
    Philox rng(4, 0);
    ResidualizedData d = make_data(
        rng, 400, 4, [](const auto&) { return 0.5; });
    CateModel model = fit_forest(d, quick_config(50, 11));
    REQUIRE(model.trees.size() == 50);
    for (const auto& tree : model.trees) {
      std::set<int> split(tree.split_half.begin(), tree.split_half.end());
      int overlap = 0;
      for (int i : tree.estimate_half) overlap += split.count(i);
      CHECK(overlap == 0);
      CHECK(!tree.split_half.empty());
      CHECK(!tree.estimate_half.empty());
    }
  }

  TEST_CASE("homogeneous effect gives nearly constant predictions") {
    Philox rng(5, 0);
    const double tau = 0.5;
    ResidualizedData d = make_data(
        rng, 1500, 5, [&](const auto&) { return tau; }, 0.4);
    CateModel model = fit_forest(d, quick_config(400, 17));
    Eigen::VectorXd pred = model.predict(d.moderators);
    double mean = pred.mean();
    double sd = std::sqrt((pred.array() - mean).square().mean());
    CHECK(std::fabs(mean - tau) < 0.08);
    CHECK(sd <= 0.1 * tau);
  }

  TEST_CASE("step-function CATE is recovered") {
    Philox rng(6, 0);
    auto tau = [](const auto& x) { return x[0] > 0.0 ? 0.9 : 0.1; };
    ResidualizedData d = make_data(rng, 1500, 5, tau, 0.4);
    CateModel model = fit_forest(d, quick_config(400, 23));
    Eigen::VectorXd pred = model.predict(d.moderators);
    Eigen::VectorXd truth(d.outcome_res.size());
    for (long i = 0; i < truth.size(); ++i) truth[i] = tau(d.moderators.row(i));
    double pm = pred.mean(), tm = truth.mean();
    double cov = ((pred.array() - pm) * (truth.array() - tm)).mean();
    double corr = cov / std::sqrt((pred.array() - pm).square().mean() *
                                  (truth.array() - tm).square().mean());
    CHECK(corr >= 0.5);
  }

  TEST_CASE("zero effect centers the predictions at zero") {
    Philox rng(7, 0);
    ResidualizedData d = make_data(
        rng, 1000, 4, [](const auto&) { return 0.0; }, 0.5);
    CateModel model = fit_forest(d, quick_config(300, 31));
    Eigen::VectorXd pred = model.predict(d.moderators);
    CHECK(std::fabs(pred.mean()) < 0.05);
  }

  TEST_CASE("predictions are invariant to affine moderator rescaling") {
    Philox rng(8, 0);
    auto tau = [](const auto& x) { return x[0] > 0.3 ? 0.8 : 0.2; };
    ResidualizedData d = make_data(rng, 600, 3, tau, 0.3);
    CateModel base = fit_forest(d, quick_config(60, 41));
    Eigen::VectorXd base_pred = base.predict(d.moderators);

    // Order-preserving rescalings map the split points one-for-one; the
    // partition, and with it every leaf estimate, is unchanged.
    ResidualizedData scaled = d;
    scaled.moderators.col(1) = 3.5 * d.moderators.col(1).array() - 2.0;
    CateModel rescaled = fit_forest(scaled, quick_config(60, 41));
    Eigen::VectorXd scaled_pred = rescaled.predict(scaled.moderators);
    CHECK((base_pred - scaled_pred).cwiseAbs().maxCoeff() < 1e-10);

    ResidualizedData shifted = d;
    shifted.moderators.col(0) = d.moderators.col(0).array() + 1e4;
    shifted.moderators.col(2) = 1e-3 * d.moderators.col(2).array();
    CateModel shift = fit_forest(shifted, quick_config(60, 41));
    Eigen::VectorXd shift_pred = shift.predict(shifted.moderators);
    CHECK((base_pred - shift_pred).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("serial and parallel fits are identical") {
    Philox rng(9, 0);
    auto tau = [](const auto& x) { return 0.3 + 0.4 * (x[1] > 0); };
    ResidualizedData d = make_data(rng, 500, 4, tau, 0.4);
    ForestConfig serial = quick_config(40, 57);
    serial.mode = ExecMode::Serial;
    ForestConfig parallel = quick_config(40, 57);
    parallel.mode = ExecMode::Parallel;
    parallel.threads = 2;
    CateModel a = fit_forest(d, serial);
    CateModel b = fit_forest(d, parallel);
    Eigen::VectorXd pa = a.predict(d.moderators);
    Eigen::VectorXd pb = b.predict(d.moderators);
    CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("min-leaf constraint keeps every leaf estimable") {
    Philox rng(10, 0);
    ResidualizedData d = make_data(
        rng, 400, 3, [](const auto& x) { return x[0]; }, 0.3);
    ForestConfig config = quick_config(80, 71);
    CateModel model = fit_forest(d, config);
    for (const auto& tree : model.trees) {
      // Walk estimation rows through the tree and count arm membership per
      // leaf.
      std::map<int, std::pair<int, int>> counts;
      for (int i : tree.estimate_half) {
        int node = 0;
        while (tree.nodes[node].feature >= 0) {
          node = d.moderators(i, tree.nodes[node].feature) <=
                         tree.nodes[node].threshold
                     ? tree.nodes[node].left
                     : tree.nodes[node].right;
        }
        auto& c = counts[node];
        (d.treatment_binary[i] > 0.5 ? c.first : c.second)++;
      }
      for (const auto& [node, c] : counts) {
        CHECK(c.first >= config.min_leaf_treated);
        CHECK(c.second >= config.min_leaf_control);
      }
    }
  }

  TEST_CASE("too small a sample is rejected") {
    Philox rng(11, 0);
    ResidualizedData d = make_data(
        rng, 150, 3, [](const auto&) { return 0.1; });
    ForestConfig config;
    config.n_trees = 10;
    CHECK_THROWS_AS(fit_forest(d, config), ValidationError);
  }

  TEST_CASE("cate cdf is a proper step function") {
    Eigen::VectorXd constant = Eigen::VectorXd::Constant(10, 0.4);
    auto degenerate = cate_cdf(constant);
    CHECK(degenerate.front().first == 0.4);
    CHECK(degenerate.back().second == 1.0);

    Philox rng(12, 0);
    Eigen::VectorXd pred(200);
    for (long i = 0; i < 200; ++i) pred[i] = rng.normal();
    auto cdf = cate_cdf(pred);
    std::vector<double> sorted(pred.data(), pred.data() + 200);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < cdf.size(); ++i) {
      CHECK(cdf[i].first == sorted[i]);
      CHECK(cdf[i].second == doctest::Approx((i + 1.0) / 200.0));
      if (i) CHECK(cdf[i].second >= cdf[i - 1].second);
    }
    Eigen::VectorXd empty;
    CHECK_THROWS_AS(cate_cdf(empty), ValidationError);
  }

  TEST_CASE("cross-outcome correlations behave like correlations") {
    Philox rng(13, 0);
    Eigen::VectorXd a(500), b(500);
    for (long i = 0; i < 500; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    Eigen::MatrixXd corr = cross_outcome_correlation({a, a, b});
    CHECK(corr(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(corr(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(corr(0, 2) == doctest::Approx(corr(2, 0)).epsilon(1e-12));
    CHECK(std::fabs(corr(0, 2)) < 0.15);  // independent noise

    Eigen::VectorXd flat = Eigen::VectorXd::Zero(500);
    CHECK_THROWS_AS(cross_outcome_correlation({a, flat}), EstimationError);
  }

  TEST_CASE("correlation matrix is permutation equivariant") {
    Philox rng(14, 0);
    Eigen::VectorXd a(300), b(300), c(300);
    for (long i = 0; i < 300; ++i) {
      a[i] = rng.normal();
      b[i] = 0.5 * a[i] + rng.normal();
      c[i] = rng.normal();
    }
    Eigen::MatrixXd abc = cross_outcome_correlation({a, b, c});
    Eigen::MatrixXd cab = cross_outcome_correlation({c, a, b});
    CHECK(abc(0, 1) == doctest::Approx(cab(1, 2)).epsilon(1e-12));
    CHECK(abc(0, 2) == doctest::Approx(cab(1, 0)).epsilon(1e-12));
  }

  TEST_CASE("targeting gains: one-sided, aligned, and anti-correlated cases") {
    // All CATEs positive: the gain is the mean CATE under always-cash.
    Eigen::VectorXd pos(4);
    pos << 0.2, 0.4, 0.6, 0.8;
    TargetingReport one = targeting_gains({pos});
    CHECK(one.outcome_gains[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(one.composite_gain == doctest::Approx(0.5).epsilon(1e-12));

    // Perfectly aligned outcomes attain the upper bound exactly.
    Eigen::VectorXd mixed(4);
    mixed << -0.5, 0.25, -0.1, 0.7;
    TargetingReport aligned = targeting_gains({mixed, mixed});
    CHECK(aligned.composite_gain ==
          doctest::Approx((aligned.outcome_gains[0] + aligned.outcome_gains[1]) /
                          2.0)
              .epsilon(1e-12));

    // Anti-correlated CATEs: composite strictly below the mean of gains.
    // Closed form: rows (+1,-1) and (-1,+1) have composite CATE 0, so the
    // composite gain is 0 while each outcome gain is 0.5.
    Eigen::VectorXd u(2), v(2);
    u << 1.0, -1.0;
    v << -1.0, 1.0;
    TargetingReport anti = targeting_gains({u, v});
    CHECK(anti.outcome_gains[0] == doctest::Approx(0.5));
    CHECK(anti.outcome_gains[1] == doctest::Approx(0.5));
    CHECK(anti.composite_gain == doctest::Approx(0.0));
    CHECK(anti.composite_gain <
          (anti.outcome_gains[0] + anti.outcome_gains[1]) / 2.0);
  }

  TEST_CASE("targeting inequality holds on random configurations") {
    Philox rng(15, 0);
    for (int rep = 0; rep < 100; ++rep) {
      int k = 2 + static_cast<int>(rng.uniform_int(4));
      long n = 20 + static_cast<long>(rng.uniform_int(80));
      std::vector<Eigen::VectorXd> cates;
      for (int j = 0; j < k; ++j) {
        Eigen::VectorXd c(n);
        for (long i = 0; i < n; ++i) c[i] = rng.normal(0.0, 2.0);
        cates.push_back(c);
      }
      TargetingReport report = targeting_gains(cates);
      double mean_gain = 0.0;
      for (double g : report.outcome_gains) mean_gain += g;
      mean_gain /= k;
      CHECK(report.composite_gain <= mean_gain + 1e-12);
    }
    Eigen::VectorXd a(3), b(2);
    CHECK_THROWS_AS(targeting_gains({a, b}), ValidationError);
  }

  TEST_CASE("subgroup averaging preserves means and order") {
    Philox rng(16, 0);
    Eigen::VectorXd pred(100);
    for (long i = 0; i < 100; ++i) pred[i] = rng.normal();
    Eigen::VectorXd grouped = subgroup_average_predictions(pred, 5);
    CHECK(grouped.mean() == doctest::Approx(pred.mean()).epsilon(1e-12));
    // Exactly five distinct values, ordered like the underlying predictions.
    std::set<double> levels(grouped.data(), grouped.data() + 100);
    CHECK(levels.size() == 5);
    for (long i = 0; i < 100; ++i) {
      for (long j = 0; j < 100; ++j) {
        if (pred[i] < pred[j]) CHECK(grouped[i] <= grouped[j]);
      }
    }
    // The per-row convention is the identity.
    Eigen::VectorXd same = subgroup_average_predictions(pred, 0);
    CHECK((same - pred).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("standardized index averages z-scores") {
    Eigen::VectorXd a(4), b(4);
    a << 1, 2, 3, 4;
    b << 8, 6, 4, 2;
    Eigen::VectorXd idx = standardized_index({a, b});
    // a's z-scores are the negatives of b's, so the index is zero.
    CHECK(idx.cwiseAbs().maxCoeff() < 1e-12);
  }
}
