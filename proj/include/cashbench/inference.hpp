#pragma once

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

#include "cashbench/data_model.hpp"

namespace cashbench {

// Sharpened two-stage FDR q-values on a 0.001 grid: the q-value of a test is
// the smallest grid level at which the two-stage step-up procedure (stage 1
// at q/(1+q), true-null count estimated from stage-1 rejections, stage 2 at
// the inflated level) rejects it.
std::vector<double> sharpened_q(std::span<const double> pvals,
                                double grid_step = 0.001);

// Plain Benjamini-Hochberg q-values (reference for the dominance property).
std::vector<double> bh_q(std::span<const double> pvals);

struct QValueReport {
  std::vector<double> pvals;
  std::vector<double> qvals;
  OutcomeFamily family = OutcomeFamily::Primary;
};

struct LogisticModel {
  Eigen::VectorXd beta;
  std::vector<std::string> names;
  bool converged = false;
  bool separation = false;  // fell back to the ridge-stabilized fit
  int iterations = 0;

  double predict(const Eigen::RowVectorXd& x) const;
};

struct LogisticOptions {
  int max_iterations = 200;
  double grad_tol = 1e-8;
  double ridge_fallback = 1e-4;
};

// Weighted logistic MLE by damped Newton steps.  Detected separation is
// reported on the model and the fit is ridge-stabilized.
LogisticModel fit_logistic(const Eigen::MatrixXd& design,
                           const std::vector<std::string>& names,
                           const Eigen::VectorXd& outcome,
                           const Eigen::VectorXd& weights,
                           const LogisticOptions& options = {});

// Remain-in-sample propensity: intercept, covariates, treatment dummies and
// covariate x treatment interactions on the right-hand side.
struct PropensityModel {
  LogisticModel logit;
  std::vector<std::string> covariate_names;

  double remain_probability(const Eigen::RowVectorXd& covariates,
                            std::span<const double> treatments) const;
};

PropensityModel fit_remain_propensity(
    const Eigen::MatrixXd& covariates,
    const std::vector<std::string>& covariate_names,
    const Eigen::MatrixXd& treatments,
    const std::vector<std::string>& treatment_names,
    const Eigen::VectorXd& remained, const Eigen::VectorXd& weights,
    const LogisticOptions& options = {});

constexpr double kDefaultPropensityFloor = 0.05;

// Inverse-propensity multipliers for the units that remained:
// 1 / max(p_hat, floor).  Attriters receive no entry.
std::map<int, double> ipw_multipliers(const PropensityModel& model,
                                      const Eigen::MatrixXd& covariates,
                                      const Eigen::MatrixXd& treatments,
                                      const Eigen::VectorXd& remained,
                                      std::span<const int> unit_ids,
                                      double floor = kDefaultPropensityFloor);

}  // namespace cashbench
