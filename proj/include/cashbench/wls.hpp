#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cashbench {

// Assembles a design matrix column by column; block fixed effects are
// expanded into dummies with the first category omitted.
class DesignBuilder {
 public:
  explicit DesignBuilder(long n_rows);

  DesignBuilder& add_intercept();
  DesignBuilder& add(const std::string& name, const Eigen::VectorXd& column);
  DesignBuilder& add_block_effects(std::span<const int> block_ids);

  long rows() const { return n_; }
  const Eigen::MatrixXd& matrix();
  const std::vector<std::string>& names() const { return names_; }

 private:
  long n_;
  std::vector<Eigen::VectorXd> columns_;
  std::vector<std::string> names_;
  Eigen::MatrixXd assembled_;
  bool dirty_ = true;
};

struct FitResult {
  Eigen::VectorXd beta;
  std::vector<std::string> names;
  Eigen::MatrixXd vcov;      // cluster-robust (CR1) covariance
  Eigen::MatrixXd xtwx_inv;
  Eigen::VectorXd residuals;
  Eigen::VectorXd fitted;
  long n = 0;
  int n_clusters = 0;
  int k = 0;
  double r2 = 0.0;

  // Retained so the covariance can be re-clustered after the fit.
  Eigen::MatrixXd design;
  Eigen::VectorXd weights;
  std::vector<int> clusters;

  int index_of(const std::string& name) const;
  double coef(const std::string& name) const;
  double se(int i) const;
  double se(const std::string& name) const;
  double tstat(int i) const;
  // Two-sided p from t(G-1), matching the F(q, G-1) reference used for
  // joint tests.
  double pvalue(int i) const;
  double pvalue(const std::string& name) const;
};

// Weighted least squares via column-pivoted QR.  Throws EstimationError on
// rank deficiency (naming the offending columns) or on fewer rows than
// parameters.  Cluster-robust covariance is computed eagerly.
FitResult fit_wls(const Eigen::MatrixXd& design,
                  const std::vector<std::string>& names,
                  const Eigen::VectorXd& outcome,
                  const Eigen::VectorXd& weights,
                  std::span<const int> cluster_ids);

// CR1 sandwich: (X'WX)^-1 [sum_g s_g s_g'] (X'WX)^-1 scaled by
// G/(G-1)*(N-1)/(N-K), where s_g sums weighted scores within cluster g.
// The small-sample factor can be switched off (plain CR0).
Eigen::MatrixXd cluster_cov(const FitResult& fit,
                            std::span<const int> cluster_ids,
                            bool small_sample_scaling = true);

struct LinearHypothesis {
  Eigen::MatrixXd restriction;  // R, q x K, full row rank
  Eigen::VectorXd target;       // r
};

struct WaldResult {
  double f = 0.0;
  double p = 1.0;
  int q = 0;
};

// F = (Rb-r)'[RVR']^-1(Rb-r)/q with p from F(q, G-1); the denominator
// degrees of freedom can be overridden.
WaldResult wald(const FitResult& fit, const LinearHypothesis& hypothesis,
                std::optional<double> denominator_df = std::nullopt);

// Equality of benefit-cost ratios beta_i/c_i = beta_j/c_j restated linearly
// as c_j*beta_i - c_i*beta_j = 0 (costs are known constants, so no
// delta-method approximation is involved).
LinearHypothesis bcr_equality_hypothesis(int i, int j, double cost_i,
                                         double cost_j, int n_params);

// Diagnostic path through the ratio parameterization; agrees with the
// linear restriction to first order (here exactly, costs being constants).
WaldResult bcr_equality_delta_method(const FitResult& fit, int i, int j,
                                     double cost_i, double cost_j);

}  // namespace cashbench
