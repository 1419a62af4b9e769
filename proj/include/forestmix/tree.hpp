#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "forestmix/matrix.hpp"
#include "forestmix/rng.hpp"

namespace forestmix {

enum class ForestKind { bagged, extra };

struct TreeParams {
  int max_depth = 0;         // 0 = unlimited
  int min_samples_leaf = 2;
  int feature_subsample = 0; // 0 = ceil(sqrt(d))
};

struct TreeNode {
  std::int32_t feature = -1;       // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double impurity_decrease = 0.0;  // per-sample variance reduction of the split
  std::int32_t n_samples = 0;
  std::int32_t value_offset = -1;  // leaf: offset into leaf_values, units of C

  bool is_leaf() const { return feature < 0; }
};

// Regression tree over soft-label targets. Nodes are stored in pre-order;
// leaf vectors live in a shared pool.
struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<double> leaf_values;
  int n_features = 0;
  int n_outputs = 0;

  std::span<const double> predict(std::span<const double> x) const {
    require(static_cast<int>(x.size()) == n_features, Errc::width_mismatch,
            "tree expects width " + std::to_string(n_features) + ", got " +
                std::to_string(x.size()));
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) {
      // ties route left
      node = x[static_cast<std::size_t>(node->feature)] <= node->threshold
                 ? &nodes[static_cast<std::size_t>(node->left)]
                 : &nodes[static_cast<std::size_t>(node->right)];
    }
    return {leaf_values.data() + node->value_offset, static_cast<std::size_t>(n_outputs)};
  }
};

namespace detail {

constexpr double kImpurityEps = 1e-12;

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;  // absolute reduction of summed squared deviations
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const Matrix& Y, const TreeParams& params,
              ForestKind kind, Rng& rng)
      : X_(X), Y_(Y), params_(params), kind_(kind), rng_(rng),
        n_outputs_(static_cast<int>(Y.cols())),
        n_features_(static_cast<int>(X.cols())) {
    mtry_ = params.feature_subsample > 0
                ? std::min(params.feature_subsample, n_features_)
                : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features_))));
  }

  Tree build(std::vector<int> rows) {
    require(!rows.empty(), Errc::empty_input, "fit_tree on empty sample");
    rows_ = std::move(rows);
    tree_.n_features = n_features_;
    tree_.n_outputs = n_outputs_;
    build_node(0, rows_.size(), 0);
    return std::move(tree_);
  }

 private:
  // summed squared deviation from the mean, over all outputs
  double node_ss(std::size_t lo, std::size_t hi, std::vector<double>& sum) const {
    const auto n = static_cast<double>(hi - lo);
    sum.assign(static_cast<std::size_t>(n_outputs_), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(n_outputs_), 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto y = Y_.row(static_cast<std::size_t>(rows_[i]));
      for (int c = 0; c < n_outputs_; ++c) {
        sum[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)];
        sq[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)] * y[static_cast<std::size_t>(c)];
      }
    }
    double ss = 0.0;
    for (int c = 0; c < n_outputs_; ++c) {
      ss += sq[static_cast<std::size_t>(c)] -
            sum[static_cast<std::size_t>(c)] * sum[static_cast<std::size_t>(c)] / n;
    }
    return std::max(ss, 0.0);
  }

  int make_leaf(std::size_t lo, std::size_t hi, const std::vector<double>& sum) {
    const auto n = static_cast<double>(hi - lo);
    TreeNode node;
    node.n_samples = static_cast<std::int32_t>(hi - lo);
    node.value_offset = static_cast<std::int32_t>(tree_.leaf_values.size());
    for (int c = 0; c < n_outputs_; ++c) {
      tree_.leaf_values.push_back(sum[static_cast<std::size_t>(c)] / n);
    }
    tree_.nodes.push_back(node);
    return static_cast<int>(tree_.nodes.size()) - 1;
  }

  // scans midpoints of sorted distinct values, best gain wins
  void scan_bagged(int feature, std::size_t lo, std::size_t hi, double parent_ss,
                   const std::vector<double>& total, SplitChoice& best) {
    const std::size_t n = hi - lo;
    sorted_.clear();
    for (std::size_t i = lo; i < hi; ++i) {
      sorted_.emplace_back(X_(static_cast<std::size_t>(rows_[i]), static_cast<std::size_t>(feature)),
                           rows_[i]);
    }
    std::stable_sort(sorted_.begin(), sorted_.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto msl = static_cast<std::size_t>(params_.min_samples_leaf);
    left_sum_.assign(static_cast<std::size_t>(n_outputs_), 0.0);
    left_sq_.assign(static_cast<std::size_t>(n_outputs_), 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      const auto y = Y_.row(static_cast<std::size_t>(sorted_[i - 1].second));
      for (int c = 0; c < n_outputs_; ++c) {
        left_sum_[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)];
        left_sq_[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)] * y[static_cast<std::size_t>(c)];
      }
      if (sorted_[i - 1].first == sorted_[i].first) continue;
      if (i < msl || n - i < msl) continue;
      // the midpoint of two near-adjacent doubles can round onto the
      // right value; fall back to the left value so the (<=) partition
      // reproduces exactly this boundary
      double threshold = 0.5 * (sorted_[i - 1].first + sorted_[i].first);
      if (!(threshold >= sorted_[i - 1].first) || threshold >= sorted_[i].first) {
        threshold = sorted_[i - 1].first;
      }
      const auto nl = static_cast<double>(i);
      const auto nr = static_cast<double>(n - i);
      double ss_children = 0.0;
      for (int c = 0; c < n_outputs_; ++c) {
        const double sl = left_sum_[static_cast<std::size_t>(c)];
        const double ql = left_sq_[static_cast<std::size_t>(c)];
        const double sr = total[static_cast<std::size_t>(c)] - sl;
        double qr = 0.0;
        // right sq tracked implicitly: recompute from totals
        qr = total_sq_[static_cast<std::size_t>(c)] - ql;
        ss_children += std::max(ql - sl * sl / nl, 0.0) + std::max(qr - sr * sr / nr, 0.0);
      }
      const double gain = parent_ss - ss_children;
      if (gain > best.gain) {
        best.gain = gain;
        best.feature = feature;
        best.threshold = threshold;
      }
    }
  }

  // one uniform threshold between the in-node min and max
  void scan_extra(int feature, std::size_t lo, std::size_t hi, double parent_ss,
                  const std::vector<double>& total, double vmin, double vmax,
                  SplitChoice& best) {
    const std::size_t n = hi - lo;
    double t = vmin + rng_.u01() * (vmax - vmin);
    if (t >= vmax) t = std::nextafter(vmax, vmin);
    left_sum_.assign(static_cast<std::size_t>(n_outputs_), 0.0);
    left_sq_.assign(static_cast<std::size_t>(n_outputs_), 0.0);
    std::size_t nl = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      if (X_(static_cast<std::size_t>(rows_[i]), static_cast<std::size_t>(feature)) <= t) {
        const auto y = Y_.row(static_cast<std::size_t>(rows_[i]));
        for (int c = 0; c < n_outputs_; ++c) {
          left_sum_[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)];
          left_sq_[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)] * y[static_cast<std::size_t>(c)];
        }
        ++nl;
      }
    }
    const auto msl = static_cast<std::size_t>(params_.min_samples_leaf);
    if (nl < msl || n - nl < msl) return;
    double ss_children = 0.0;
    for (int c = 0; c < n_outputs_; ++c) {
      const double sl = left_sum_[static_cast<std::size_t>(c)];
      const double ql = left_sq_[static_cast<std::size_t>(c)];
      const double sr = total[static_cast<std::size_t>(c)] - sl;
      const double qr = total_sq_[static_cast<std::size_t>(c)] - ql;
      ss_children += std::max(ql - sl * sl / static_cast<double>(nl), 0.0) +
                     std::max(qr - sr * sr / static_cast<double>(n - nl), 0.0);
    }
    const double gain = parent_ss - ss_children;
    if (gain > best.gain) {
      best.gain = gain;
      best.feature = feature;
      best.threshold = t;
    }
  }

  int build_node(std::size_t lo, std::size_t hi, int depth) {
    const std::size_t n = hi - lo;
    std::vector<double> total;
    const double parent_ss = node_ss(lo, hi, total);
    total_sq_.assign(static_cast<std::size_t>(n_outputs_), 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto y = Y_.row(static_cast<std::size_t>(rows_[i]));
      for (int c = 0; c < n_outputs_; ++c) {
        total_sq_[static_cast<std::size_t>(c)] += y[static_cast<std::size_t>(c)] * y[static_cast<std::size_t>(c)];
      }
    }

    const bool depth_hit = params_.max_depth > 0 && depth >= params_.max_depth;
    if (depth_hit || n < 2 * static_cast<std::size_t>(params_.min_samples_leaf) ||
        parent_ss <= kImpurityEps) {
      return make_leaf(lo, hi, total);
    }

    // lazily shuffled feature order; constant features do not count
    // against the subsample budget
    feature_pool_.resize(static_cast<std::size_t>(n_features_));
    for (int f = 0; f < n_features_; ++f) feature_pool_[static_cast<std::size_t>(f)] = f;
    SplitChoice best;
    int evaluated = 0;
    for (int pos = 0; pos < n_features_ && evaluated < mtry_; ++pos) {
      const int take = pos + static_cast<int>(rng_.bounded(static_cast<std::uint64_t>(n_features_ - pos)));
      std::swap(feature_pool_[static_cast<std::size_t>(pos)], feature_pool_[static_cast<std::size_t>(take)]);
      const int f = feature_pool_[static_cast<std::size_t>(pos)];
      double vmin = X_(static_cast<std::size_t>(rows_[lo]), static_cast<std::size_t>(f));
      double vmax = vmin;
      for (std::size_t i = lo + 1; i < hi; ++i) {
        const double v = X_(static_cast<std::size_t>(rows_[i]), static_cast<std::size_t>(f));
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
      if (vmin == vmax) continue;
      ++evaluated;
      if (kind_ == ForestKind::bagged) {
        scan_bagged(f, lo, hi, parent_ss, total, best);
      } else {
        scan_extra(f, lo, hi, parent_ss, total, vmin, vmax, best);
      }
    }

    if (best.feature < 0 || best.gain <= 0.0) {
      return make_leaf(lo, hi, total);
    }

    TreeNode node;
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.impurity_decrease = best.gain / static_cast<double>(n);
    node.n_samples = static_cast<std::int32_t>(n);
    const int self = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(node);

    const auto mid_it = std::stable_partition(
        rows_.begin() + static_cast<std::ptrdiff_t>(lo),
        rows_.begin() + static_cast<std::ptrdiff_t>(hi), [&](int r) {
          return X_(static_cast<std::size_t>(r), static_cast<std::size_t>(best.feature)) <=
                 best.threshold;
        });
    const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
    if (mid == lo || mid == hi) {
      // a degenerate partition must never recurse on an unchanged range
      tree_.nodes.pop_back();
      return make_leaf(lo, hi, total);
    }
    tree_.nodes[static_cast<std::size_t>(self)].left =
        static_cast<std::int32_t>(build_node(lo, mid, depth + 1));
    tree_.nodes[static_cast<std::size_t>(self)].right =
        static_cast<std::int32_t>(build_node(mid, hi, depth + 1));
    return self;
  }

  const Matrix& X_;
  const Matrix& Y_;
  TreeParams params_;
  ForestKind kind_;
  Rng& rng_;
  int n_outputs_;
  int n_features_;
  int mtry_;
  Tree tree_;
  std::vector<int> rows_;
  std::vector<int> feature_pool_;
  std::vector<std::pair<double, int>> sorted_;
  std::vector<double> left_sum_;
  std::vector<double> left_sq_;
  std::vector<double> total_sq_;
};

}  // namespace detail

inline Tree fit_tree_rows(const Matrix& X, const Matrix& Y, std::vector<int> rows,
                          const TreeParams& params, ForestKind kind, Rng& rng) {
  require(X.rows() == Y.rows(), Errc::shape_error, "X/Y row mismatch");
  detail::TreeBuilder builder(X, Y, params, kind, rng);
  return builder.build(std::move(rows));
}

inline Tree fit_tree(const Matrix& X, const Matrix& Y, const TreeParams& params,
                     ForestKind kind, std::uint64_t seed) {
  require(X.rows() >= 1, Errc::empty_input, "fit_tree on empty sample");
  std::vector<int> rows(X.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  Rng rng(seed);
  return fit_tree_rows(X, Y, std::move(rows), params, kind, rng);
}

inline std::vector<double> predict_tree(const Tree& tree, std::span<const double> x) {
  const auto v = tree.predict(x);
  return {v.begin(), v.end()};
}

}  // namespace forestmix
