#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "forestmix/dataset.hpp"
#include "forestmix/matrix.hpp"
#include "forestmix/parallel.hpp"
#include "forestmix/tree.hpp"

namespace forestmix {

struct ForestParams {
  int n_trees = 100;
  ForestKind kind = ForestKind::bagged;
  TreeParams tree;
};

struct Forest {
  std::vector<Tree> trees;
  ForestKind kind = ForestKind::bagged;
  int n_features = 0;
  int n_outputs = 0;
  int feature_subsample = 0;  // resolved value actually used
  std::uint64_t seed = 0;
};

// `bagged` bootstraps rows per tree; `extra` trains every tree on the full
// sample. Per-tree seeds come from the forest seed and the tree index, so
// trees can be fit concurrently without changing the result.
inline Forest fit_forest(const Matrix& X, const Matrix& Y, const ForestParams& params,
                         std::uint64_t seed) {
  require(X.rows() >= 1, Errc::empty_input, "fit_forest on empty sample");
  require(X.rows() == Y.rows(), Errc::shape_error, "X/Y row mismatch");
  require(params.n_trees >= 1, Errc::config_error, "n_trees must be >= 1");
  Forest forest;
  forest.kind = params.kind;
  forest.n_features = static_cast<int>(X.cols());
  forest.n_outputs = static_cast<int>(Y.cols());
  forest.seed = seed;
  forest.feature_subsample =
      params.tree.feature_subsample > 0
          ? std::min(params.tree.feature_subsample, forest.n_features)
          : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(forest.n_features))));
  TreeParams tp = params.tree;
  tp.feature_subsample = forest.feature_subsample;

  const std::size_t n = X.rows();
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  parallel_for(static_cast<std::size_t>(params.n_trees), [&](std::size_t t) {
    Rng rng(derive_seed(seed, "tree", t));
    std::vector<int> rows;
    rows.reserve(n);
    if (params.kind == ForestKind::bagged) {
      for (std::size_t i = 0; i < n; ++i) {
        rows.push_back(static_cast<int>(rng.bounded(n)));
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) rows.push_back(static_cast<int>(i));
    }
    forest.trees[t] = fit_tree_rows(X, Y, std::move(rows), tp, params.kind, rng);
  });
  return forest;
}

// row-wise mean over trees, in tree order
inline Matrix predict_forest(const Forest& forest, const Matrix& X) {
  require(static_cast<int>(X.cols()) == forest.n_features, Errc::width_mismatch,
          "forest expects width " + std::to_string(forest.n_features) + ", got " +
              std::to_string(X.cols()));
  Matrix out(X.rows(), static_cast<std::size_t>(forest.n_outputs));
  const double inv = 1.0 / static_cast<double>(forest.trees.size());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto x = X.row(r);
    auto dst = out.row(r);
    for (const Tree& tree : forest.trees) {
      const auto leaf = tree.predict(x);
      for (std::size_t c = 0; c < leaf.size(); ++c) dst[c] += leaf[c];
    }
    for (double& v : dst) v *= inv;
  }
  return out;
}

// Per-feature importance vector; non-negative, sums to one.
struct FiVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  static FiVector uniform(std::size_t d) {
    FiVector fi;
    fi.values.assign(d, 1.0 / static_cast<double>(d));
    return fi;
  }

  bool all_equal() const {
    for (double v : values) {
      if (v != values.front()) return false;
    }
    return !values.empty();
  }

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

// adds impurity_decrease * node sample count for every internal node
inline void accumulate_importance(const Forest& forest, std::vector<double>& raw) {
  require(raw.size() == static_cast<std::size_t>(forest.n_features), Errc::width_mismatch,
          "importance accumulator width mismatch");
  for (const Tree& tree : forest.trees) {
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) continue;
      raw[static_cast<std::size_t>(node.feature)] +=
          node.impurity_decrease * static_cast<double>(node.n_samples);
    }
  }
}

inline FiVector normalize_importance(std::vector<double> raw) {
  double total = 0.0;
  for (double v : raw) total += v;
  if (total <= 0.0) return FiVector::uniform(raw.size());
  for (double& v : raw) v /= total;
  return FiVector{std::move(raw)};
}

inline FiVector feature_importance(std::span<const Forest> forests) {
  require(!forests.empty(), Errc::empty_input, "feature_importance of no forests");
  const int d = forests.front().n_features;
  for (const Forest& f : forests) {
    require(f.n_features == d, Errc::width_mismatch, "forests disagree on width");
  }
  std::vector<double> raw(static_cast<std::size_t>(d), 0.0);
  for (const Forest& f : forests) accumulate_importance(f, raw);
  return normalize_importance(std::move(raw));
}

inline FiVector feature_importance(const Forest& forest) {
  return feature_importance(std::span<const Forest>(&forest, 1));
}

struct GroupParams {
  ForestParams forest;
  std::vector<ForestKind> kinds{ForestKind::bagged, ForestKind::extra};

  std::size_t forests_per_layer() const { return kinds.size(); }
};

inline std::vector<Forest> fit_forest_group(const Matrix& X, const Matrix& Y,
                                            const GroupParams& gp, std::uint64_t seed) {
  require(!gp.kinds.empty(), Errc::config_error, "forest group needs at least one kind");
  std::vector<Forest> group;
  group.reserve(gp.kinds.size());
  for (std::size_t f = 0; f < gp.kinds.size(); ++f) {
    ForestParams params = gp.forest;
    params.kind = gp.kinds[f];
    group.push_back(fit_forest(X, Y, params, derive_seed(seed, "forest", f)));
  }
  return group;
}

// Hook applied to each fold's training complement (and to the full
// training set) before fitting; the cascade uses it to mix samples without
// leaking held-out rows into their own forwarded features.
using TrainMutator = std::function<void(Matrix&, Matrix&, std::uint64_t, int)>;

struct OofResult {
  std::vector<Forest> full;              // trained on all rows, used at inference
  std::vector<Matrix> oof;               // per forest: n x C, each row predicted out-of-fold
  std::vector<int> fold_of_row;
  std::vector<double> importance_raw;    // pooled over every forest trained here
  std::vector<std::vector<Forest>> fold_models;  // retained only on request
};

inline OofResult oof_predict(const Matrix& X, const Matrix& Y, std::span<const int> labels,
                             const GroupParams& gp, int k, std::uint64_t seed,
                             const TrainMutator& mutate = {}, bool keep_fold_models = false) {
  const std::size_t n = X.rows();
  require(k >= 2, Errc::bad_k, "oof_predict needs k >= 2");
  const auto folds = kfold_indices(n, k, labels, derive_seed(seed, "folds"));

  OofResult out;
  out.oof.assign(gp.forests_per_layer(), Matrix(n, Y.cols()));
  out.fold_of_row.assign(n, -1);
  out.importance_raw.assign(X.cols(), 0.0);

  std::vector<char> in_fold(n, 0);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (int r : folds[f]) {
      in_fold[static_cast<std::size_t>(r)] = 1;
      out.fold_of_row[static_cast<std::size_t>(r)] = static_cast<int>(f);
    }
    std::vector<int> complement;
    complement.reserve(n - folds[f].size());
    for (std::size_t r = 0; r < n; ++r) {
      if (!in_fold[r]) complement.push_back(static_cast<int>(r));
    }
    for (int r : folds[f]) in_fold[static_cast<std::size_t>(r)] = 0;

    Matrix Xc = X.take_rows(complement);
    Matrix Yc = Y.take_rows(complement);
    if (mutate) mutate(Xc, Yc, derive_seed(seed, "fold-mix", f), static_cast<int>(f));
    auto models = fit_forest_group(Xc, Yc, gp, derive_seed(seed, "fold-fit", f));

    const Matrix Xf = X.take_rows(folds[f]);
    for (std::size_t m = 0; m < models.size(); ++m) {
      accumulate_importance(models[m], out.importance_raw);
      const Matrix pred = predict_forest(models[m], Xf);
      for (std::size_t i = 0; i < folds[f].size(); ++i) {
        const auto src = pred.row(i);
        auto dst = out.oof[m].row(static_cast<std::size_t>(folds[f][i]));
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
    if (keep_fold_models) out.fold_models.push_back(std::move(models));
  }

  Matrix Xa = X;
  Matrix Ya = Y;
  if (mutate) mutate(Xa, Ya, derive_seed(seed, "full-mix"), -1);
  out.full = fit_forest_group(Xa, Ya, gp, derive_seed(seed, "full-fit"));
  for (const Forest& f : out.full) accumulate_importance(f, out.importance_raw);
  return out;
}

}  // namespace forestmix
