#pragma once

#include <Eigen/Dense>

#include <vector>

namespace cashbench {

// Weighted L1 problem: (1/2) sum_i w_i (y_i - a_i'theta - x_i'beta)^2
// + lambda * sum_j psi_j |beta_j|, with candidates standardized internally
// and the always-keep block unpenalized.  Weights are normalized to mean one
// so the penalty formula keeps its sqrt(N) scale.
struct LassoProblem {
  Eigen::VectorXd response;
  Eigen::MatrixXd candidates;   // n x p, penalized
  Eigen::MatrixXd always_keep;  // n x q, unpenalized (may have 0 columns)
  Eigen::VectorXd weights;      // observation weights, > 0
  double lambda = 0.0;
  Eigen::VectorXd loadings;     // psi_j > 0; empty = unit loadings
};

struct LassoFit {
  Eigen::VectorXd beta;          // candidate coefficients, original scale
  Eigen::VectorXd always_coefs;  // unpenalized block
  std::vector<int> active;       // indices with beta != 0
  Eigen::VectorXd residuals;
  int sweeps = 0;
  bool converged = false;
  double max_kkt_violation = 0.0;
};

struct LassoOptions {
  double tol = 1e-7;        // max coefficient change per sweep
  double kkt_tol = 1e-8;    // stationarity check on the score scale
  int max_sweeps = 10000;
};

// Cyclic coordinate descent; throws EstimationError when the KKT conditions
// cannot be met within the sweep budget (reporting the violation).
LassoFit lasso_fit(const LassoProblem& problem, const LassoOptions& options = {});

struct PenaltyLevel {
  double lambda = 0.0;
  double c = 1.1;
  double gamma = 0.0;
};

// lambda = 2c sqrt(N) Phi^-1(1 - gamma/(2p)) with gamma = 0.1/ln(N).
PenaltyLevel penalty_level(long n, long p, double c = 1.1);

// psi_j = sqrt(weighted mean of x_j^2 * resid^2) over standardized columns.
Eigen::VectorXd penalty_loadings(const Eigen::MatrixXd& candidates_std,
                                 const Eigen::VectorXd& residuals,
                                 const Eigen::VectorXd& weights,
                                 bool weighted);

struct SelectionOptions {
  double c = 1.1;
  int loading_iterations = 2;   // refinements after the unit-loading fit
  bool weights_in_loadings = true;
  LassoOptions lasso;
};

struct SelectionResult {
  std::vector<int> selected;                  // union over all targets
  std::vector<std::vector<int>> per_target;   // outcome first, then treatments
  std::vector<double> lambdas;
};

// Post-double selection: residualize the outcome, every treatment indicator
// and every candidate on the always-keep block, run one lasso per target,
// and return the union of active sets.  The final estimation step refits
// unpenalized (post-lasso) in the calling estimator.
SelectionResult post_double_select(const Eigen::VectorXd& outcome,
                                   const Eigen::MatrixXd& treatments,
                                   const Eigen::MatrixXd& candidates,
                                   const Eigen::MatrixXd& always_keep,
                                   const Eigen::VectorXd& weights,
                                   const SelectionOptions& options = {});

}  // namespace cashbench
