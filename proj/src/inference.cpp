#include "cashbench/inference.hpp"

#include <algorithm>
#include <cmath>

#include "cashbench/errors.hpp"

namespace cashbench {

namespace {

// Step-up count: largest rank i with p_(i) <= level * i / m; every test with
// rank at most that count is rejected.
int step_up_count(const std::vector<double>& sorted_p, double level) {
  const int m = static_cast<int>(sorted_p.size());
  int count = 0;
  for (int i = 1; i <= m; ++i) {
    if (sorted_p[i - 1] <= level * i / m) count = i;
  }
  return count;
}

}  // namespace

std::vector<double> sharpened_q(std::span<const double> pvals,
                                double grid_step) {
  const int m = static_cast<int>(pvals.size());
  if (m == 0) throw ValidationError("sharpened_q: empty p-value list");
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("sharpened_q: p-values must lie in [0,1]");
    }
  }
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pvals[a] < pvals[b]; });
  std::vector<double> sorted_p(m);
  for (int i = 0; i < m; ++i) sorted_p[i] = pvals[order[i]];

  const int steps = static_cast<int>(std::lround(1.0 / grid_step));
  std::vector<double> q(m, 1.0);
  for (int step = 1; step <= steps; ++step) {
    double level = static_cast<double>(step) / steps;
    double stage1 = level / (1.0 + level);
    int r1 = step_up_count(sorted_p, stage1);
    int r2;
    if (r1 == m) {
      r2 = m;  // all nulls estimated false; everything is rejected
    } else {
      double stage2 = stage1 * static_cast<double>(m) / (m - r1);
      r2 = step_up_count(sorted_p, stage2);
    }
    for (int i = 0; i < r2; ++i) {
      q[order[i]] = std::min(q[order[i]], level);
    }
  }
  return q;
}

std::vector<double> bh_q(std::span<const double> pvals) {
  const int m = static_cast<int>(pvals.size());
  if (m == 0) throw ValidationError("bh_q: empty p-value list");
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pvals[a] < pvals[b]; });
  std::vector<double> q(m);
  double running = 1.0;
  for (int i = m; i >= 1; --i) {
    running = std::min(running, pvals[order[i - 1]] * m / i);
    q[order[i - 1]] = running;
  }
  return q;
}

double LogisticModel::predict(const Eigen::RowVectorXd& x) const {
  double eta = x * beta;
  return 1.0 / (1.0 + std::exp(-eta));
}

namespace {

LogisticModel newton_logistic(const Eigen::MatrixXd& design,
                              const std::vector<std::string>& names,
                              const Eigen::VectorXd& outcome,
                              const Eigen::VectorXd& weights, double ridge,
                              const LogisticOptions& options) {
  const long n = design.rows();
  const long k = design.cols();
  LogisticModel model;
  model.names = names;
  model.beta = Eigen::VectorXd::Zero(k);

  auto loglik = [&](const Eigen::VectorXd& b) {
    double ll = 0.0;
    for (long i = 0; i < n; ++i) {
      double eta = design.row(i) * b;
      // log(sigma(eta)) if y=1, log(1-sigma(eta)) otherwise, stably.
      double lse = eta > 0 ? eta + std::log1p(std::exp(-eta))
                           : std::log1p(std::exp(eta));
      ll += weights[i] * (outcome[i] * eta - lse);
    }
    ll -= 0.5 * ridge * b.squaredNorm();
    return ll;
  };

  double current = loglik(model.beta);
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd grad = -ridge * model.beta;
    Eigen::MatrixXd hess = ridge * Eigen::MatrixXd::Identity(k, k);
    for (long i = 0; i < n; ++i) {
      double eta = design.row(i) * model.beta;
      double p = 1.0 / (1.0 + std::exp(-eta));
      grad += weights[i] * (outcome[i] - p) * design.row(i).transpose();
      double s = std::max(p * (1.0 - p), 1e-12);
      hess += weights[i] * s * design.row(i).transpose() * design.row(i);
    }
    model.iterations = it + 1;
    if (grad.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      model.converged = true;
      break;
    }
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    // Dampen until the penalized likelihood improves.
    double scale = 1.0;
    for (int h = 0; h < 40; ++h) {
      Eigen::VectorXd trial = model.beta + scale * step;
      double value = loglik(trial);
      if (value >= current - 1e-14) {
        model.beta = trial;
        current = value;
        break;
      }
      scale *= 0.5;
    }
  }
  return model;
}

}  // namespace

LogisticModel fit_logistic(const Eigen::MatrixXd& design,
                           const std::vector<std::string>& names,
                           const Eigen::VectorXd& outcome,
                           const Eigen::VectorXd& weights,
                           const LogisticOptions& options) {
  const long n = design.rows();
  if (outcome.size() != n || weights.size() != n) {
    throw ValidationError("fit_logistic: inconsistent dimensions");
  }
  bool any0 = false, any1 = false;
  for (long i = 0; i < n; ++i) {
    if (outcome[i] != 0.0 && outcome[i] != 1.0) {
      throw ValidationError("fit_logistic: outcome must be 0/1");
    }
    (outcome[i] > 0.5 ? any1 : any0) = true;
  }
  if (!any0 || !any1) {
    throw ValidationError("fit_logistic: outcome has no variation");
  }

  LogisticModel model = newton_logistic(design, names, outcome, weights, 0.0, options);
  // Separation shows up as non-convergence with exploding coefficients.
  if (!model.converged || model.beta.lpNorm<Eigen::Infinity>() > 30.0) {
    LogisticModel stabilized = newton_logistic(
        design, names, outcome, weights, options.ridge_fallback, options);
    stabilized.separation = true;
    return stabilized;
  }
  return model;
}

PropensityModel fit_remain_propensity(
    const Eigen::MatrixXd& covariates,
    const std::vector<std::string>& covariate_names,
    const Eigen::MatrixXd& treatments,
    const std::vector<std::string>& treatment_names,
    const Eigen::VectorXd& remained, const Eigen::VectorXd& weights,
    const LogisticOptions& options) {
  const long n = remained.size();
  const long p = covariates.cols();
  const long t = treatments.cols();
  Eigen::MatrixXd design(n, 1 + p + t + p * t);
  std::vector<std::string> names;
  design.col(0).setOnes();
  names.push_back("const");
  for (long j = 0; j < p; ++j) {
    design.col(1 + j) = covariates.col(j);
    names.push_back(covariate_names[j]);
  }
  for (long j = 0; j < t; ++j) {
    design.col(1 + p + j) = treatments.col(j);
    names.push_back(treatment_names[j]);
  }
  long col = 1 + p + t;
  for (long a = 0; a < p; ++a) {
    for (long b = 0; b < t; ++b) {
      design.col(col) = covariates.col(a).cwiseProduct(treatments.col(b));
      names.push_back(covariate_names[a] + ":" + treatment_names[b]);
      ++col;
    }
  }
  PropensityModel model;
  model.covariate_names = covariate_names;
  model.logit = fit_logistic(design, names, remained, weights, options);
  return model;
}

double PropensityModel::remain_probability(
    const Eigen::RowVectorXd& covariates,
    std::span<const double> treatments) const {
  const long p = covariates.size();
  const long t = static_cast<long>(treatments.size());
  Eigen::RowVectorXd x(1 + p + t + p * t);
  x[0] = 1.0;
  for (long j = 0; j < p; ++j) x[1 + j] = covariates[j];
  for (long j = 0; j < t; ++j) x[1 + p + j] = treatments[j];
  long col = 1 + p + t;
  for (long a = 0; a < p; ++a) {
    for (long b = 0; b < t; ++b) x[col++] = covariates[a] * treatments[b];
  }
  return logit.predict(x);
}

std::map<int, double> ipw_multipliers(const PropensityModel& model,
                                      const Eigen::MatrixXd& covariates,
                                      const Eigen::MatrixXd& treatments,
                                      const Eigen::VectorXd& remained,
                                      std::span<const int> unit_ids,
                                      double floor) {
  const long n = remained.size();
  std::map<int, double> out;
  for (long i = 0; i < n; ++i) {
    if (remained[i] < 0.5) continue;
    std::vector<double> t(treatments.cols());
    for (long j = 0; j < treatments.cols(); ++j) t[j] = treatments(i, j);
    double p = model.remain_probability(covariates.row(i), t);
    out[unit_ids[i]] = 1.0 / std::max(p, floor);
  }
  return out;
}

}  // namespace cashbench
