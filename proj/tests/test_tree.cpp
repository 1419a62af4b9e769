#include <catch2/catch_amalgamated.hpp>

#include "forestmix/tree.hpp"
#include "support/oracles.hpp"

using namespace forestmix;

namespace {

TreeParams full_scan_params(int min_leaf = 1, int max_depth = 0) {
  TreeParams p;
  p.min_samples_leaf = min_leaf;
  p.max_depth = max_depth;
  p.feature_subsample = 1 << 20;  // evaluate every feature
  return p;
}

}  // namespace

TEST_CASE("four points on a line split between the label groups") {
  const Matrix X = Matrix::from_rows({{0}, {1}, {2}, {3}});
  const Matrix Y = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const Tree tree = fit_tree(X, Y, full_scan_params(), ForestKind::bagged, 1);
  REQUIRE(tree.nodes.size() == 3);
  const TreeNode& root = tree.nodes[0];
  REQUIRE(!root.is_leaf());
  REQUIRE(root.threshold > 1.0);
  REQUIRE(root.threshold < 2.0);
  const auto left = tree.predict(std::vector<double>{0.0});
  REQUIRE(left[0] == 1.0);
  REQUIRE(left[1] == 0.0);
  const auto right = tree.predict(std::vector<double>{3.0});
  REQUIRE(right[0] == 0.0);
  REQUIRE(right[1] == 1.0);
}

TEST_CASE("identical targets collapse to a single leaf") {
  const Matrix X = Matrix::from_rows({{0, 5}, {1, 4}, {2, 3}});
  const Matrix Y = Matrix::from_rows({{0.25, 0.75}, {0.25, 0.75}, {0.25, 0.75}});
  const Tree tree = fit_tree(X, Y, full_scan_params(), ForestKind::bagged, 1);
  REQUIRE(tree.nodes.size() == 1);
  const auto p = tree.predict(std::vector<double>{9.0, 9.0});
  REQUIRE(p[0] == 0.25);
  REQUIRE(p[1] == 0.75);
}

TEST_CASE("single row becomes its own leaf") {
  const Matrix X = Matrix::from_rows({{1, 2}});
  const Matrix Y = Matrix::from_rows({{0.5, 0.5}});
  const Tree tree = fit_tree(X, Y, full_scan_params(), ForestKind::extra, 1);
  REQUIRE(tree.nodes.size() == 1);
  REQUIRE(tree.predict(std::vector<double>{0.0, 0.0})[0] == 0.5);
}

TEST_CASE("empty input is refused") {
  const Matrix X(0, 2);
  const Matrix Y(0, 2);
  REQUIRE_THROWS_MATCHES(fit_tree(X, Y, full_scan_params(), ForestKind::bagged, 1), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::empty_input;
                         }));
}

TEST_CASE("prediction routes ties left") {
  // single split at a known threshold
  const Matrix X = Matrix::from_rows({{0}, {0}, {2}, {2}});
  const Matrix Y = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const Tree tree = fit_tree(X, Y, full_scan_params(), ForestKind::bagged, 3);
  REQUIRE(tree.nodes.size() == 3);
  const double thr = tree.nodes[0].threshold;
  const auto at_threshold = tree.predict(std::vector<double>{thr});
  REQUIRE(at_threshold[0] == 1.0);  // left leaf
}

TEST_CASE("width mismatch is refused at prediction") {
  const Matrix X = Matrix::from_rows({{0, 1}, {1, 0}});
  const Matrix Y = Matrix::from_rows({{1, 0}, {0, 1}});
  const Tree tree = fit_tree(X, Y, full_scan_params(), ForestKind::bagged, 1);
  REQUIRE_THROWS_MATCHES(tree.predict(std::vector<double>{1.0, 2.0, 3.0}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::width_mismatch;
                         }));
}

TEST_CASE("first split matches exhaustive enumeration on random small cases") {
  // n <= 16, d <= 3, one split level; the chosen decrease must equal the
  // brute-force best within 1e-12
  int cases_with_split = 0;
  for (int trial = 0; trial < 250; ++trial) {
    Rng rng(derive_seed(1000, "tree-oracle", static_cast<std::uint64_t>(trial)));
    const int n = 2 + static_cast<int>(rng.bounded(15));
    const int d = 1 + static_cast<int>(rng.bounded(3));
    const int C = 2 + static_cast<int>(rng.bounded(2));
    Matrix X(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    Matrix Y(static_cast<std::size_t>(n), static_cast<std::size_t>(C));
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < d; ++j) {
        // coarse grid of values so duplicates and ties appear often
        X(static_cast<std::size_t>(r), static_cast<std::size_t>(j)) =
            static_cast<double>(rng.bounded(6));
      }
      if (rng.u01() < 0.7) {
        Y(static_cast<std::size_t>(r), rng.bounded(static_cast<std::uint64_t>(C))) = 1.0;
      } else {
        double total = 0.0;
        std::vector<double> soft(static_cast<std::size_t>(C));
        for (double& v : soft) {
          v = rng.u01_open();
          total += v;
        }
        for (int c = 0; c < C; ++c) {
          Y(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
              soft[static_cast<std::size_t>(c)] / total;
        }
      }
    }
    const auto best = oracle::exhaustive_best_split(X, Y, 1);
    const Tree tree = fit_tree(X, Y, full_scan_params(1, 1), ForestKind::bagged,
                               derive_seed(2000, "fit", static_cast<std::uint64_t>(trial)));
    if (!best.found || best.decrease <= 0.0) {
      REQUIRE(tree.nodes.size() == 1);
      continue;
    }
    ++cases_with_split;
    REQUIRE(!tree.nodes[0].is_leaf());
    REQUIRE_THAT(tree.nodes[0].impurity_decrease,
                 Catch::Matchers::WithinAbs(best.decrease, 1e-12));
  }
  REQUIRE(cases_with_split >= 200);
}

TEST_CASE("max_depth=1 yields at most one split") {
  Rng rng(55);
  Matrix X(30, 4);
  Matrix Y(30, 3);
  for (std::size_t r = 0; r < 30; ++r) {
    for (std::size_t j = 0; j < 4; ++j) X(r, j) = rng.normal();
    Y(r, rng.bounded(3)) = 1.0;
  }
  const Tree tree = fit_tree(X, Y, full_scan_params(1, 1), ForestKind::bagged, 3);
  REQUIRE(tree.nodes.size() <= 3);
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    REQUIRE(tree.nodes[i].is_leaf());
  }
}

TEST_CASE("min_samples_leaf keeps both children big enough") {
  Rng rng(66);
  Matrix X(40, 3);
  Matrix Y(40, 2);
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t j = 0; j < 3; ++j) X(r, j) = rng.normal();
    Y(r, rng.bounded(2)) = 1.0;
  }
  const Tree tree = fit_tree(X, Y, full_scan_params(5), ForestKind::bagged, 9);
  for (const TreeNode& node : tree.nodes) {
    if (node.is_leaf()) REQUIRE(node.n_samples >= 5);
  }
}

TEST_CASE("leaf values stay on the probability simplex") {
  Rng rng(77);
  Matrix X(60, 5);
  Matrix Y(60, 4);
  for (std::size_t r = 0; r < 60; ++r) {
    for (std::size_t j = 0; j < 5; ++j) X(r, j) = rng.normal();
    std::vector<double> soft(4);
    double total = 0.0;
    for (double& v : soft) {
      v = rng.u01_open();
      total += v;
    }
    for (std::size_t c = 0; c < 4; ++c) Y(r, c) = soft[c] / total;
  }
  for (ForestKind kind : {ForestKind::bagged, ForestKind::extra}) {
    TreeParams p;
    p.min_samples_leaf = 2;
    p.feature_subsample = 3;
    const Tree tree = fit_tree(X, Y, p, kind, 123);
    for (const TreeNode& node : tree.nodes) {
      if (!node.is_leaf()) continue;
      double sum = 0.0;
      for (int c = 0; c < tree.n_outputs; ++c) {
        const double v = tree.leaf_values[static_cast<std::size_t>(node.value_offset + c)];
        REQUIRE(v >= 0.0);
        sum += v;
      }
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
  }
}

TEST_CASE("near-adjacent feature values terminate and split consistently") {
  // 0.5*(a+b) rounds onto b here; the builder must still produce a
  // partition boundary that separates the two values
  const double a = std::nextafter(1.0, 2.0);
  const double b = std::nextafter(a, 2.0);
  const Matrix X = Matrix::from_rows({{a}, {a}, {b}, {b}});
  const Matrix Y = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const Tree tree = fit_tree(X, Y, full_scan_params(), ForestKind::bagged, 1);
  REQUIRE(tree.nodes.size() == 3);
  REQUIRE(tree.predict(std::vector<double>{a})[0] == 1.0);
  REQUIRE(tree.predict(std::vector<double>{b})[1] == 1.0);
}

TEST_CASE("extra trees on distinct values keep the same leaf set under row permutation") {
  // weak permutation-equivariance: depth-1 extra tree, hard 0/1 targets,
  // distinct feature values
  Matrix X = Matrix::from_rows({{0.1}, {0.9}, {0.35}, {0.7}, {0.5}});
  Matrix Y = Matrix::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 0}});
  TreeParams p = full_scan_params(1, 1);
  const Tree a = fit_tree(X, Y, p, ForestKind::extra, 31);

  const std::vector<int> perm{4, 2, 0, 3, 1};
  Matrix Xp(5, 1), Yp(5, 2);
  for (std::size_t r = 0; r < 5; ++r) {
    Xp(r, 0) = X(static_cast<std::size_t>(perm[r]), 0);
    for (std::size_t c = 0; c < 2; ++c) Yp(r, c) = Y(static_cast<std::size_t>(perm[r]), c);
  }
  const Tree b = fit_tree(Xp, Yp, p, ForestKind::extra, 31);

  auto leaf_set = [](const Tree& t) {
    std::vector<std::vector<double>> leaves;
    for (const TreeNode& node : t.nodes) {
      if (!node.is_leaf()) continue;
      leaves.push_back({t.leaf_values[static_cast<std::size_t>(node.value_offset)],
                        t.leaf_values[static_cast<std::size_t>(node.value_offset) + 1]});
    }
    std::sort(leaves.begin(), leaves.end());
    return leaves;
  };
  REQUIRE(leaf_set(a) == leaf_set(b));
}
