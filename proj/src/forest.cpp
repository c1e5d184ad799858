#include "cashbench/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cashbench/errors.hpp"
#include "cashbench/rng.hpp"
#include "cashbench/stats.hpp"

namespace cashbench {

void ForestConfig::validate() const {
  if (n_trees < 1) throw ValidationError("forest: need at least one tree");
  if (!(subsample_fraction > 0.0 && subsample_fraction < 1.0) ||
      !(honesty_fraction > 0.0 && honesty_fraction < 1.0)) {
    throw ValidationError("forest: fractions must lie in (0,1)");
  }
  if (min_leaf_treated < 1 || min_leaf_control < 1) {
    throw ValidationError("forest: min leaf sizes must be >= 1");
  }
  if (max_depth < 1) throw ValidationError("forest: max depth must be >= 1");
}

double CateTree::predict(const Eigen::RowVectorXd& x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = x[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                           : nodes[node].right;
  }
  return nodes[node].effect;
}

double CateModel::predict_row(const Eigen::RowVectorXd& x) const {
  KahanSum sum;
  for (const auto& tree : trees) sum.add(tree.predict(x));
  return sum.value() / static_cast<double>(trees.size());
}

Eigen::VectorXd CateModel::predict(const Eigen::MatrixXd& rows) const {
  Eigen::VectorXd out(rows.rows());
  for (long i = 0; i < rows.rows(); ++i) out[i] = predict_row(rows.row(i));
  return out;
}

Residualized residualize(const Eigen::VectorXd& outcome,
                         const Eigen::VectorXd& treatment,
                         const Eigen::MatrixXd& controls,
                         const std::vector<std::string>& control_names,
                         std::span<const int> blocks,
                         const Eigen::VectorXd& weights,
                         std::span<const int> clusters) {
  const long n = outcome.size();
  DesignBuilder builder(n);
  builder.add_intercept();
  builder.add_block_effects(blocks);
  for (long j = 0; j < controls.cols(); ++j) {
    // Constant columns carry nothing and would collide with the intercept.
    double wvar = 0.0;
    double mean = weights.dot(controls.col(j)) / weights.sum();
    for (long i = 0; i < n; ++i) {
      double d = controls(i, j) - mean;
      wvar += weights[i] * d * d;
    }
    if (wvar / weights.sum() > 1e-12) {
      builder.add(control_names[j], controls.col(j));
    }
  }
  Residualized out;
  out.outcome_fit =
      fit_wls(builder.matrix(), builder.names(), outcome, weights, clusters);
  out.treatment_fit =
      fit_wls(builder.matrix(), builder.names(), treatment, weights, clusters);
  out.outcome_res = out.outcome_fit.residuals;
  out.treatment_res = out.treatment_fit.residuals;
  return out;
}

namespace {

struct LeafStats {
  double wsum = 0.0;
  double wt = 0.0;    // sum w * t_res
  double wy = 0.0;    // sum w * y_res
  double wtt = 0.0;   // sum w * t_res^2
  double wty = 0.0;   // sum w * t_res * y_res
  int n_treated = 0;
  int n_control = 0;

  void add(double w, double t, double y, bool treated) {
    wsum += w;
    wt += w * t;
    wy += w * y;
    wtt += w * t * t;
    wty += w * t * y;
    (treated ? n_treated : n_control)++;
  }
  void remove_into(const LeafStats& total, LeafStats& rest) const {
    rest.wsum = total.wsum - wsum;
    rest.wt = total.wt - wt;
    rest.wy = total.wy - wy;
    rest.wtt = total.wtt - wtt;
    rest.wty = total.wty - wty;
    rest.n_treated = total.n_treated - n_treated;
    rest.n_control = total.n_control - n_control;
  }
  double effect() const {
    double var = wtt - wt * wt / wsum;
    if (var <= 1e-12) return 0.0;
    double cov = wty - wt * wy / wsum;
    return cov / var;
  }
  bool estimable(int min_treated, int min_control) const {
    return n_treated >= min_treated && n_control >= min_control;
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const ResidualizedData& data, const ForestConfig& config,
              Philox rng)
      : d_(data), cfg_(config), rng_(rng) {}

  CateTree build() {
    const long n = d_.outcome_res.size();
    long subsample = std::max<long>(
        2, static_cast<long>(std::floor(cfg_.subsample_fraction * n)));
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates draw without replacement.
    for (long i = 0; i < subsample; ++i) {
      long j = i + static_cast<long>(rng_.uniform_int(n - i));
      std::swap(pool[i], pool[j]);
    }
    long n_split = std::max<long>(
        1, static_cast<long>(std::floor(cfg_.honesty_fraction * subsample)));

    CateTree tree;
    tree.split_half.assign(pool.begin(), pool.begin() + n_split);
    tree.estimate_half.assign(pool.begin() + n_split, pool.begin() + subsample);
    std::sort(tree.split_half.begin(), tree.split_half.end());
    std::sort(tree.estimate_half.begin(), tree.estimate_half.end());

    tree_ = &tree;
    grow(tree.split_half, tree.estimate_half, 0);
    return tree;
  }

 private:
  LeafStats stats_of(const std::vector<int>& idx) const {
    LeafStats s;
    for (int i : idx) {
      s.add(d_.weights[i], d_.treatment_res[i], d_.outcome_res[i],
            d_.treatment_binary[i] > 0.5);
    }
    return s;
  }

  int grow(const std::vector<int>& split_idx, const std::vector<int>& est_idx,
           int depth) {
    int node_id = static_cast<int>(tree_->nodes.size());
    tree_->nodes.emplace_back();

    LeafStats split_total = stats_of(split_idx);
    LeafStats est_total = stats_of(est_idx);

    bool can_split =
        depth < cfg_.max_depth &&
        split_total.n_treated >= 2 * cfg_.min_leaf_treated &&
        split_total.n_control >= 2 * cfg_.min_leaf_control &&
        est_total.n_treated >= 2 * cfg_.min_leaf_treated &&
        est_total.n_control >= 2 * cfg_.min_leaf_control;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_criterion = -1.0;
    if (can_split) {
      find_best_split(split_idx, est_idx, split_total, best_feature,
                      best_threshold, best_criterion);
    }

    if (best_feature < 0) {
      tree_->nodes[node_id].effect = est_total.effect();
      return node_id;
    }

    std::vector<int> sl, sr, el, er;
    for (int i : split_idx) {
      (d_.moderators(i, best_feature) <= best_threshold ? sl : sr).push_back(i);
    }
    for (int i : est_idx) {
      (d_.moderators(i, best_feature) <= best_threshold ? el : er).push_back(i);
    }
    tree_->nodes[node_id].feature = best_feature;
    tree_->nodes[node_id].threshold = best_threshold;
    int left = grow(sl, el, depth + 1);
    int right = grow(sr, er, depth + 1);
    tree_->nodes[node_id].left = left;
    tree_->nodes[node_id].right = right;
    return node_id;
  }

  void find_best_split(const std::vector<int>& split_idx,
                       const std::vector<int>& est_idx,
                       const LeafStats& split_total, int& best_feature,
                       double& best_threshold, double& best_criterion) {
    const long m = d_.moderators.cols();
    long n_candidates = cfg_.feature_fraction > 0.0
                            ? static_cast<long>(std::ceil(cfg_.feature_fraction * m))
                            : static_cast<long>(std::ceil(std::sqrt(static_cast<double>(m))));
    n_candidates = std::clamp<long>(n_candidates, 1, m);
    std::vector<int> features(m);
    std::iota(features.begin(), features.end(), 0);
    for (long i = 0; i < n_candidates; ++i) {
      long j = i + static_cast<long>(rng_.uniform_int(m - i));
      std::swap(features[i], features[j]);
    }

    const LeafStats etotal = stats_of(est_idx);
    std::vector<int> s_sorted = split_idx, e_sorted = est_idx;
    for (long f_pos = 0; f_pos < n_candidates; ++f_pos) {
      int f = features[f_pos];
      auto by_feature = [&](int a, int b) {
        return d_.moderators(a, f) < d_.moderators(b, f);
      };
      std::sort(s_sorted.begin(), s_sorted.end(), by_feature);
      std::sort(e_sorted.begin(), e_sorted.end(), by_feature);

      LeafStats left;
      LeafStats eleft;
      std::size_t e_pos = 0;
      for (std::size_t i = 0; i + 1 < s_sorted.size(); ++i) {
        int idx = s_sorted[i];
        left.add(d_.weights[idx], d_.treatment_res[idx], d_.outcome_res[idx],
                 d_.treatment_binary[idx] > 0.5);
        double x_here = d_.moderators(idx, f);
        double x_next = d_.moderators(s_sorted[i + 1], f);
        if (x_next <= x_here) continue;  // not a boundary between values
        double threshold = x_here + 0.5 * (x_next - x_here);

        while (e_pos < e_sorted.size() &&
               d_.moderators(e_sorted[e_pos], f) <= threshold) {
          int e = e_sorted[e_pos];
          eleft.add(d_.weights[e], d_.treatment_res[e], d_.outcome_res[e],
                    d_.treatment_binary[e] > 0.5);
          ++e_pos;
        }

        if (!left.estimable(cfg_.min_leaf_treated, cfg_.min_leaf_control)) continue;
        LeafStats right;
        left.remove_into(split_total, right);
        if (!right.estimable(cfg_.min_leaf_treated, cfg_.min_leaf_control)) break;

        LeafStats eright;
        eleft.remove_into(etotal, eright);
        if (!eleft.estimable(cfg_.min_leaf_treated, cfg_.min_leaf_control) ||
            !eright.estimable(cfg_.min_leaf_treated, cfg_.min_leaf_control)) {
          continue;
        }

        double tau_l = left.effect();
        double tau_r = right.effect();
        double criterion = left.wsum * tau_l * tau_l + right.wsum * tau_r * tau_r;
        if (criterion > best_criterion + 1e-15) {
          best_criterion = criterion;
          best_feature = f;
          best_threshold = threshold;
        }
      }
    }
  }

  const ResidualizedData& d_;
  const ForestConfig& cfg_;
  Philox rng_;
  CateTree* tree_ = nullptr;
};

}  // namespace

CateModel fit_forest(const ResidualizedData& data, const ForestConfig& config) {
  config.validate();
  const long n = data.outcome_res.size();
  if (n < config.min_rows) {
    throw ValidationError("fit_forest: need at least " +
                          std::to_string(config.min_rows) + " rows, have " +
                          std::to_string(n));
  }
  if (data.treatment_res.size() != n || data.moderators.rows() != n ||
      data.weights.size() != n || data.treatment_binary.size() != n) {
    throw ValidationError("fit_forest: inconsistent dimensions");
  }
  if (data.moderators.cols() < 1) {
    throw ValidationError("fit_forest: no moderators supplied");
  }

  CateModel model;
  model.config = config;
  model.moderator_names = data.moderator_names;
  model.trees.resize(config.n_trees);
  // One counter-based stream per tree: results do not depend on scheduling.
  for_each_index(config.n_trees, config.mode, config.threads, [&](std::size_t t) {
    TreeBuilder builder(data, config, Philox(config.seed, 0x7265650000000000ull + t));
    model.trees[t] = builder.build();
  });
  return model;
}

std::vector<std::pair<double, double>> cate_cdf(const Eigen::VectorXd& predictions) {
  const long n = predictions.size();
  if (n == 0) throw ValidationError("cate_cdf: empty sample");
  std::vector<double> v(predictions.data(), predictions.data() + n);
  std::sort(v.begin(), v.end());
  std::vector<std::pair<double, double>> cdf;
  cdf.reserve(n);
  for (long i = 0; i < n; ++i) {
    cdf.emplace_back(v[i], static_cast<double>(i + 1) / static_cast<double>(n));
  }
  return cdf;
}

Eigen::MatrixXd cross_outcome_correlation(
    const std::vector<Eigen::VectorXd>& predictions) {
  const int k = static_cast<int>(predictions.size());
  if (k == 0) throw ValidationError("cross_outcome_correlation: no outcomes");
  const long n = predictions[0].size();
  for (const auto& p : predictions) {
    if (p.size() != n) {
      throw ValidationError("cross_outcome_correlation: sample size mismatch");
    }
  }
  Eigen::MatrixXd corr(k, k);
  std::vector<double> mean(k), sd(k);
  for (int a = 0; a < k; ++a) {
    mean[a] = predictions[a].mean();
    double var = (predictions[a].array() - mean[a]).square().sum() / n;
    if (var <= 0.0) {
      throw EstimationError("cross_outcome_correlation: zero-variance predictions");
    }
    sd[a] = std::sqrt(var);
  }
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      double cov = ((predictions[a].array() - mean[a]) *
                    (predictions[b].array() - mean[b]))
                       .sum() /
                   n;
      corr(a, b) = cov / (sd[a] * sd[b]);
    }
  }
  return corr;
}

Eigen::VectorXd standardized_index(const std::vector<Eigen::VectorXd>& parts) {
  if (parts.empty()) throw ValidationError("standardized_index: no components");
  const long n = parts[0].size();
  Eigen::VectorXd index = Eigen::VectorXd::Zero(n);
  for (const auto& p : parts) {
    if (p.size() != n) throw ValidationError("standardized_index: size mismatch");
    double m = p.mean();
    double var = (p.array() - m).square().sum() / n;
    if (var <= 0.0) {
      throw EstimationError("standardized_index: zero-variance component");
    }
    index += ((p.array() - m) / std::sqrt(var)).matrix();
  }
  return index / static_cast<double>(parts.size());
}

Eigen::VectorXd subgroup_average_predictions(const Eigen::VectorXd& predictions,
                                             int n_groups) {
  const long n = predictions.size();
  if (n_groups <= 0 || n_groups >= n) return predictions;
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
    return predictions[a] < predictions[b];
  });
  Eigen::VectorXd out(n);
  for (int g = 0; g < n_groups; ++g) {
    long lo = n * g / n_groups;
    long hi = n * (g + 1) / n_groups;
    double mean = 0.0;
    for (long i = lo; i < hi; ++i) mean += predictions[order[i]];
    mean /= static_cast<double>(hi - lo);
    for (long i = lo; i < hi; ++i) out[order[i]] = mean;
  }
  return out;
}

TargetingReport targeting_gains(const std::vector<Eigen::VectorXd>& cates) {
  const int k = static_cast<int>(cates.size());
  if (k == 0) throw ValidationError("targeting_gains: no outcomes");
  const long n = cates[0].size();
  for (const auto& c : cates) {
    if (c.size() != n) throw ValidationError("targeting_gains: mismatched samples");
  }
  TargetingReport report;
  for (const auto& c : cates) {
    report.outcome_gains.push_back(c.array().max(0.0).mean());
  }
  Eigen::VectorXd composite = Eigen::VectorXd::Zero(n);
  for (const auto& c : cates) composite += c;
  composite /= static_cast<double>(k);
  report.composite_gain = composite.array().max(0.0).mean();
  return report;
}

}  // namespace cashbench
