#include "cashbench/wls.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cashbench/errors.hpp"
#include "cashbench/stats.hpp"

namespace cashbench {

DesignBuilder::DesignBuilder(long n_rows) : n_(n_rows) {}

DesignBuilder& DesignBuilder::add_intercept() {
  return add("const", Eigen::VectorXd::Ones(n_));
}

DesignBuilder& DesignBuilder::add(const std::string& name,
                                  const Eigen::VectorXd& column) {
  if (column.size() != n_) {
    throw ValidationError("design column '" + name + "' has wrong length");
  }
  columns_.push_back(column);
  names_.push_back(name);
  dirty_ = true;
  return *this;
}

DesignBuilder& DesignBuilder::add_block_effects(
    std::span<const int> block_ids) {
  if (static_cast<long>(block_ids.size()) != n_) {
    throw ValidationError("block id vector has wrong length");
  }
  std::set<int> levels(block_ids.begin(), block_ids.end());
  bool first = true;
  for (int level : levels) {
    if (first) {  // omitted category
      first = false;
      continue;
    }
    Eigen::VectorXd dummy(n_);
    for (long i = 0; i < n_; ++i) dummy[i] = block_ids[i] == level ? 1.0 : 0.0;
    add("block_" + std::to_string(level), dummy);
  }
  return *this;
}

const Eigen::MatrixXd& DesignBuilder::matrix() {
  if (dirty_) {
    assembled_.resize(n_, static_cast<long>(columns_.size()));
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      assembled_.col(static_cast<long>(j)) = columns_[j];
    }
    dirty_ = false;
  }
  return assembled_;
}

int FitResult::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw ValidationError("no coefficient named '" + name + "'");
}

double FitResult::coef(const std::string& name) const {
  return beta[index_of(name)];
}

double FitResult::se(int i) const { return std::sqrt(vcov(i, i)); }

double FitResult::se(const std::string& name) const { return se(index_of(name)); }

double FitResult::tstat(int i) const { return beta[i] / se(i); }

double FitResult::pvalue(int i) const {
  double df = static_cast<double>(n_clusters - 1);
  return student_t_sf_two_sided(tstat(i), df);
}

double FitResult::pvalue(const std::string& name) const {
  return pvalue(index_of(name));
}

FitResult fit_wls(const Eigen::MatrixXd& design,
                  const std::vector<std::string>& names,
                  const Eigen::VectorXd& outcome,
                  const Eigen::VectorXd& weights,
                  std::span<const int> cluster_ids) {
  const long n = design.rows();
  const long k = design.cols();
  if (outcome.size() != n || weights.size() != n ||
      static_cast<long>(cluster_ids.size()) != n) {
    throw ValidationError("fit_wls: inconsistent row counts");
  }
  if (n < k) {
    throw EstimationError("fit_wls: fewer rows (" + std::to_string(n) +
                          ") than parameters (" + std::to_string(k) + ")");
  }
  for (long i = 0; i < n; ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw ValidationError("fit_wls: weights must be finite and nonnegative");
    }
  }

  Eigen::VectorXd sw = weights.cwiseSqrt();
  Eigen::MatrixXd xw = sw.asDiagonal() * design;
  Eigen::VectorXd yw = sw.cwiseProduct(outcome);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    // The pivot order puts dependent columns last; name them.
    std::string offending;
    const auto& perm = qr.colsPermutation().indices();
    for (long j = qr.rank(); j < k; ++j) {
      if (!offending.empty()) offending += ", ";
      offending += names[perm[j]];
    }
    throw EstimationError("fit_wls: design matrix is rank deficient (" +
                          std::to_string(qr.rank()) + "/" + std::to_string(k) +
                          "); offending columns: " + offending);
  }

  FitResult fit;
  fit.beta = qr.solve(yw);
  fit.names = names;
  fit.n = n;
  fit.k = static_cast<int>(k);
  fit.design = design;
  fit.weights = weights;
  fit.clusters.assign(cluster_ids.begin(), cluster_ids.end());
  fit.fitted = design * fit.beta;
  fit.residuals = outcome - fit.fitted;

  Eigen::MatrixXd xtwx = xw.transpose() * xw;
  fit.xtwx_inv = xtwx.ldlt().solve(
      Eigen::MatrixXd::Identity(k, k));

  double wsum = weights.sum();
  double ymean = weights.dot(outcome) / wsum;
  Eigen::VectorXd centered = outcome.array() - ymean;
  double tss = sw.cwiseProduct(centered).squaredNorm();
  double rss = sw.cwiseProduct(fit.residuals).squaredNorm();
  fit.r2 = tss > 0.0 ? 1.0 - rss / tss : 0.0;

  std::set<int> groups(cluster_ids.begin(), cluster_ids.end());
  fit.n_clusters = static_cast<int>(groups.size());
  fit.vcov = cluster_cov(fit, cluster_ids);
  return fit;
}

Eigen::MatrixXd cluster_cov(const FitResult& fit,
                            std::span<const int> cluster_ids,
                            bool small_sample_scaling) {
  const long n = fit.n;
  const long k = fit.k;
  if (static_cast<long>(cluster_ids.size()) != n) {
    throw ValidationError("cluster_cov: cluster vector has wrong length");
  }
  std::map<int, Eigen::VectorXd> scores;
  for (long i = 0; i < n; ++i) {
    auto [it, inserted] =
        scores.try_emplace(cluster_ids[i], Eigen::VectorXd::Zero(k));
    it->second +=
        fit.weights[i] * fit.residuals[i] * fit.design.row(i).transpose();
  }
  const long g = static_cast<long>(scores.size());
  if (g < 2) {
    throw EstimationError("cluster_cov: need at least 2 clusters, have " +
                          std::to_string(g));
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& [id, s] : scores) meat += s * s.transpose();
  double dof = small_sample_scaling
                   ? static_cast<double>(g) / (g - 1.0) * (n - 1.0) / (n - k)
                   : 1.0;
  return dof * fit.xtwx_inv * meat * fit.xtwx_inv;
}

WaldResult wald(const FitResult& fit, const LinearHypothesis& hypothesis,
                std::optional<double> denominator_df) {
  const Eigen::MatrixXd& R = hypothesis.restriction;
  const long q = R.rows();
  if (R.cols() != fit.beta.size()) {
    throw ValidationError("wald: restriction width does not match fit");
  }
  if (q > fit.k) {
    throw ValidationError("wald: more restrictions than parameters");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rqr(R);
  rqr.setThreshold(1e-12);
  if (rqr.rank() < q) {
    throw ValidationError("wald: restriction matrix is not full row rank");
  }
  Eigen::VectorXd diff = R * fit.beta - hypothesis.target;
  Eigen::MatrixXd rvr = R * fit.vcov * R.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(rvr);
  if (!lu.isInvertible()) {
    throw EstimationError("wald: R V R' is singular");
  }
  WaldResult res;
  res.q = static_cast<int>(q);
  res.f = diff.dot(lu.solve(diff)) / static_cast<double>(q);
  double df = denominator_df.value_or(static_cast<double>(fit.n_clusters - 1));
  res.p = f_sf(res.f, static_cast<double>(q), df);
  return res;
}

LinearHypothesis bcr_equality_hypothesis(int i, int j, double cost_i,
                                         double cost_j, int n_params) {
  if (cost_i <= 0.0 || cost_j <= 0.0) {
    throw ValidationError("bcr_equality_hypothesis: costs must be positive");
  }
  LinearHypothesis h;
  h.restriction = Eigen::MatrixXd::Zero(1, n_params);
  h.restriction(0, i) = cost_j;
  h.restriction(0, j) = -cost_i;
  h.target = Eigen::VectorXd::Zero(1);
  return h;
}

WaldResult bcr_equality_delta_method(const FitResult& fit, int i, int j,
                                     double cost_i, double cost_j) {
  if (cost_i <= 0.0 || cost_j <= 0.0) {
    throw ValidationError("bcr_equality_delta_method: costs must be positive");
  }
  double theta = fit.beta[i] / cost_i - fit.beta[j] / cost_j;
  double var = fit.vcov(i, i) / (cost_i * cost_i) +
               fit.vcov(j, j) / (cost_j * cost_j) -
               2.0 * fit.vcov(i, j) / (cost_i * cost_j);
  if (var <= 0.0) throw EstimationError("bcr delta method: nonpositive variance");
  WaldResult res;
  res.q = 1;
  res.f = theta * theta / var;
  res.p = f_sf(res.f, 1.0, static_cast<double>(fit.n_clusters - 1));
  return res;
}

}  // namespace cashbench
