#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "cashbench/parallel.hpp"
#include "cashbench/wls.hpp"

namespace cashbench {

struct ForestConfig {
  int n_trees = 2000;
  double subsample_fraction = 0.5;
  double honesty_fraction = 0.5;  // share of the subsample used for splits
  int min_leaf_treated = 5;       // enforced on both halves of every leaf
  int min_leaf_control = 5;
  int max_depth = 30;
  double feature_fraction = 0.0;  // 0 = sqrt(m)/m
  long min_rows = 200;
  std::uint64_t seed = 0;
  int threads = 0;
  ExecMode mode = ExecMode::Parallel;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double effect = 0.0;
};

struct CateTree {
  std::vector<TreeNode> nodes;
  // Retained for the honesty audit: disjoint index sets by construction.
  std::vector<int> split_half;
  std::vector<int> estimate_half;

  double predict(const Eigen::RowVectorXd& x) const;
};

// Inputs to the forest after partialling out the ITT control set.
struct ResidualizedData {
  Eigen::VectorXd outcome_res;
  Eigen::VectorXd treatment_res;
  Eigen::VectorXd treatment_binary;  // original 0/1 indicator, for leaf counts
  Eigen::MatrixXd moderators;
  std::vector<std::string> moderator_names;
  Eigen::VectorXd weights;
};

struct CateModel {
  std::vector<CateTree> trees;
  ForestConfig config;
  std::vector<std::string> moderator_names;

  double predict_row(const Eigen::RowVectorXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const;
};

struct Residualized {
  Eigen::VectorXd outcome_res;
  Eigen::VectorXd treatment_res;
  FitResult outcome_fit;
  FitResult treatment_fit;
};

// WLS-residualizes the outcome and the treatment indicator on an intercept,
// the given controls and block dummies; constant control columns are
// dropped.  Regressing outcome_res on treatment_res alone reproduces the
// treatment coefficient of the corresponding full regression.
Residualized residualize(const Eigen::VectorXd& outcome,
                         const Eigen::VectorXd& treatment,
                         const Eigen::MatrixXd& controls,
                         const std::vector<std::string>& control_names,
                         std::span<const int> blocks,
                         const Eigen::VectorXd& weights,
                         std::span<const int> clusters);

// Honest causal forest with the causal-tree variance criterion: splits (on
// the split half) maximize sum_child W_child * tau_child^2; leaf effects (on
// the estimation half) are weighted cov(t_res, y_res) / var(t_res).
CateModel fit_forest(const ResidualizedData& data, const ForestConfig& config);

// Empirical CDF of per-row predictions as (value, probability) steps.
std::vector<std::pair<double, double>> cate_cdf(const Eigen::VectorXd& predictions);

// Pearson correlations of per-row CATE predictions across outcomes.
Eigen::MatrixXd cross_outcome_correlation(
    const std::vector<Eigen::VectorXd>& predictions);

// Z-scores each prediction vector and averages them (one index per row).
Eigen::VectorXd standardized_index(const std::vector<Eigen::VectorXd>& parts);

// Replaces each row's CATE with the mean of its prediction-quantile
// subgroup; the per-row convention is n_groups = 0 (identity).
Eigen::VectorXd subgroup_average_predictions(const Eigen::VectorXd& predictions,
                                             int n_groups);

struct TargetingReport {
  std::vector<double> outcome_gains;  // assignment optimized per outcome
  double composite_gain = 0.0;        // single composite-optimal assignment
};

// Plug-in policy values: the outcome-k gain is mean_i max(cate_k(i), 0); the
// composite gain evaluates the argmax of the averaged CATE, so it can never
// exceed the mean of the per-outcome gains.
TargetingReport targeting_gains(const std::vector<Eigen::VectorXd>& cates);

}  // namespace cashbench
