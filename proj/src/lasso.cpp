#include "cashbench/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cashbench/errors.hpp"
#include "cashbench/stats.hpp"

namespace cashbench {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

LassoFit lasso_fit(const LassoProblem& problem, const LassoOptions& options) {
  const long n = problem.response.size();
  const long p = problem.candidates.cols();
  const long q = problem.always_keep.cols();
  const Eigen::MatrixXd keep =
      q > 0 ? problem.always_keep : Eigen::MatrixXd::Zero(n, 0);
  if (problem.candidates.rows() != n ||
      (q > 0 && problem.always_keep.rows() != n) ||
      problem.weights.size() != n) {
    throw ValidationError("lasso_fit: inconsistent dimensions");
  }
  if (problem.lambda < 0.0) throw ValidationError("lasso_fit: negative lambda");
  for (long i = 0; i < n; ++i) {
    if (!std::isfinite(problem.response[i]) || !(problem.weights[i] > 0.0)) {
      throw ValidationError("lasso_fit: non-finite data or nonpositive weight");
    }
  }

  // Normalize weights to mean one.
  Eigen::VectorXd w = problem.weights * (static_cast<double>(n) / problem.weights.sum());

  // Standardize candidates: weighted mean zero, weighted mean square one.
  Eigen::MatrixXd x = problem.candidates;
  Eigen::VectorXd center(p), scale(p);
  std::vector<bool> degenerate(p, false);
  for (long j = 0; j < p; ++j) {
    double m = w.dot(x.col(j)) / n;
    Eigen::VectorXd c = x.col(j).array() - m;
    double ms = c.cwiseProduct(c).dot(w) / n;
    center[j] = m;
    if (ms <= 1e-24) {
      degenerate[j] = true;
      scale[j] = 1.0;
      x.col(j).setZero();
    } else {
      scale[j] = std::sqrt(ms);
      x.col(j) = c / scale[j];
    }
  }

  Eigen::VectorXd psi = problem.loadings;
  if (psi.size() == 0) psi = Eigen::VectorXd::Ones(p);
  if (psi.size() != p) throw ValidationError("lasso_fit: loadings length mismatch");
  for (long j = 0; j < p; ++j) {
    if (!(psi[j] > 0.0)) throw ValidationError("lasso_fit: loadings must be positive");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd resid = problem.response;

  // Column curvatures d_j = sum_i w_i x_ij^2 (n for standardized columns).
  Eigen::VectorXd dx(p), da(q);
  for (long j = 0; j < p; ++j) {
    dx[j] = degenerate[j] ? 1.0 : x.col(j).cwiseProduct(x.col(j)).dot(w);
  }
  for (long j = 0; j < q; ++j) {
    da[j] = keep.col(j).cwiseProduct(keep.col(j)).dot(w);
    if (da[j] <= 0.0) da[j] = 1.0;
  }

  LassoFit fit;
  auto kkt_violation = [&]() {
    double worst = 0.0;
    for (long j = 0; j < p; ++j) {
      if (degenerate[j]) continue;
      double g = x.col(j).cwiseProduct(resid).dot(w);
      if (beta[j] != 0.0) {
        worst = std::max(worst, std::fabs(g - problem.lambda * psi[j] *
                                                  (beta[j] > 0 ? 1.0 : -1.0)));
      } else {
        worst = std::max(worst, std::fabs(g) - problem.lambda * psi[j]);
      }
    }
    for (long j = 0; j < q; ++j) {
      worst = std::max(
          worst, std::fabs(keep.col(j).cwiseProduct(resid).dot(w)));
    }
    return worst;
  };

  int sweep = 0;
  for (; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (long j = 0; j < q; ++j) {
      double g = keep.col(j).cwiseProduct(resid).dot(w);
      double delta = g / da[j];
      if (delta != 0.0) {
        theta[j] += delta;
        resid -= delta * keep.col(j);
        max_change = std::max(max_change, std::fabs(delta));
      }
    }
    for (long j = 0; j < p; ++j) {
      if (degenerate[j]) continue;
      double g = x.col(j).cwiseProduct(resid).dot(w);
      double z = g + dx[j] * beta[j];
      double b_new = soft_threshold(z, problem.lambda * psi[j]) / dx[j];
      double delta = b_new - beta[j];
      if (delta != 0.0) {
        beta[j] = b_new;
        resid -= delta * x.col(j);
        max_change = std::max(max_change, std::fabs(delta));
      }
    }
    if (max_change < options.tol) {
      // Stationarity confirmed on the actual residuals, not the running ones.
      resid = problem.response - keep * theta;
      for (long j = 0; j < p; ++j) {
        if (beta[j] != 0.0) resid -= beta[j] * x.col(j);
      }
      fit.max_kkt_violation = kkt_violation();
      if (fit.max_kkt_violation <= options.kkt_tol) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.sweeps = sweep + 1;
  if (!fit.converged) {
    fit.max_kkt_violation = kkt_violation();
    throw EstimationError(
        "lasso_fit: no convergence after " + std::to_string(options.max_sweeps) +
        " sweeps; max KKT violation " + std::to_string(fit.max_kkt_violation));
  }

  // Back to the original candidate scale.
  fit.beta = Eigen::VectorXd::Zero(p);
  for (long j = 0; j < p; ++j) {
    if (beta[j] != 0.0) {
      fit.beta[j] = beta[j] / scale[j];
      fit.active.push_back(static_cast<int>(j));
    }
  }
  fit.always_coefs = theta;
  fit.residuals = resid;
  return fit;
}

PenaltyLevel penalty_level(long n, long p, double c) {
  if (n <= 1 || p < 1) throw ValidationError("penalty_level: need n > 1, p >= 1");
  PenaltyLevel out;
  out.c = c;
  out.gamma = 0.1 / std::log(static_cast<double>(n));
  out.lambda = 2.0 * c * std::sqrt(static_cast<double>(n)) *
               normal_quantile(1.0 - out.gamma / (2.0 * static_cast<double>(p)));
  return out;
}

Eigen::VectorXd penalty_loadings(const Eigen::MatrixXd& candidates_std,
                                 const Eigen::VectorXd& residuals,
                                 const Eigen::VectorXd& weights,
                                 bool weighted) {
  const long n = candidates_std.rows();
  const long p = candidates_std.cols();
  Eigen::VectorXd w = weighted
                          ? Eigen::VectorXd(weights * (static_cast<double>(n) /
                                                       weights.sum()))
                          : Eigen::VectorXd::Ones(n);
  Eigen::VectorXd psi(p);
  Eigen::VectorXd r2 = residuals.cwiseProduct(residuals);
  for (long j = 0; j < p; ++j) {
    double m = candidates_std.col(j).cwiseProduct(candidates_std.col(j)).cwiseProduct(r2).dot(w) / n;
    psi[j] = std::sqrt(std::max(m, 1e-12));
  }
  return psi;
}

namespace {

// Weighted projection of each target column off the always-keep block.
Eigen::MatrixXd residualize_block(const Eigen::MatrixXd& targets,
                                  const Eigen::MatrixXd& keep,
                                  const Eigen::VectorXd& weights) {
  if (keep.cols() == 0) return targets;
  Eigen::VectorXd sw = weights.cwiseSqrt();
  Eigen::MatrixXd kw = sw.asDiagonal() * keep;
  Eigen::MatrixXd tw = sw.asDiagonal() * targets;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(kw);
  qr.setThreshold(1e-10);
  Eigen::MatrixXd coefs = qr.solve(tw);
  return targets - keep * coefs;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x, const Eigen::VectorXd& w_mean1) {
  const long n = x.rows();
  Eigen::MatrixXd out = x;
  for (long j = 0; j < x.cols(); ++j) {
    double m = w_mean1.dot(out.col(j)) / n;
    Eigen::VectorXd c = out.col(j).array() - m;
    double ms = c.cwiseProduct(c).dot(w_mean1) / n;
    out.col(j) = ms > 1e-24 ? Eigen::VectorXd(c / std::sqrt(ms))
                            : Eigen::VectorXd::Zero(n);
  }
  return out;
}

}  // namespace

SelectionResult post_double_select(const Eigen::VectorXd& outcome,
                                   const Eigen::MatrixXd& treatments,
                                   const Eigen::MatrixXd& candidates,
                                   const Eigen::MatrixXd& always_keep,
                                   const Eigen::VectorXd& weights,
                                   const SelectionOptions& options) {
  const long n = outcome.size();
  const long p = candidates.cols();
  if (treatments.rows() != n || candidates.rows() != n || weights.size() != n) {
    throw ValidationError("post_double_select: inconsistent dimensions");
  }

  Eigen::MatrixXd cand_res = residualize_block(candidates, always_keep, weights);
  Eigen::VectorXd w_mean1 = weights * (static_cast<double>(n) / weights.sum());
  Eigen::MatrixXd cand_std = standardize(cand_res, w_mean1);

  std::vector<Eigen::VectorXd> targets;
  targets.push_back(residualize_block(outcome, always_keep, weights).col(0));
  for (long t = 0; t < treatments.cols(); ++t) {
    targets.push_back(residualize_block(treatments.col(t), always_keep, weights).col(0));
  }

  SelectionResult result;
  PenaltyLevel level = penalty_level(n, std::max<long>(p, 1), options.c);

  for (const auto& target : targets) {
    LassoProblem prob;
    prob.response = target;
    prob.candidates = cand_res;
    prob.always_keep = Eigen::MatrixXd(n, 0);
    prob.weights = weights;
    prob.lambda = level.lambda;

    // Loading refinement: unit loadings first, then the heteroskedasticity
    // loadings from the running residuals.
    LassoFit fit = lasso_fit(prob, options.lasso);
    for (int it = 0; it < options.loading_iterations; ++it) {
      prob.loadings = penalty_loadings(cand_std, fit.residuals, weights,
                                       options.weights_in_loadings);
      fit = lasso_fit(prob, options.lasso);
    }
    result.per_target.push_back(fit.active);
    result.lambdas.push_back(level.lambda);
  }

  std::set<int> uni;
  for (const auto& s : result.per_target) uni.insert(s.begin(), s.end());
  result.selected.assign(uni.begin(), uni.end());
  return result;
}

}  // namespace cashbench
