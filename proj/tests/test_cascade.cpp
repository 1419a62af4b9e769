#include <catch2/catch_amalgamated.hpp>

#include "forestmix/cascade.hpp"
#include "forestmix/search.hpp"
#include "support/synth.hpp"

using namespace forestmix;

namespace {

CascadeParams tiny_cascade(int trees = 6, int max_layers = 4, int folds = 3) {
  CascadeParams p;
  p.group.forest.n_trees = trees;
  p.group.forest.tree.min_samples_leaf = 2;
  p.group.forest.tree.feature_subsample = 0;
  p.group.kinds = {ForestKind::bagged, ForestKind::extra};
  p.max_layers = max_layers;
  p.oof_folds = folds;
  return p;
}

CascadeModel train_toy(const Dataset& ds, int layers, Policy policy, std::uint64_t seed,
                       CascadeParams params) {
  CascadeModel model;
  for (int i = 0; i < layers; ++i) {
    train_layer(model, ds.X, ds.Y, ds.labels, policy, params, derive_seed(seed, "l", i));
  }
  return model;
}

}  // namespace

TEST_CASE("forwarded width is raw plus forests times classes") {
  const std::vector<double> x{1, 2};
  const std::vector<double> o1{0.6, 0.4}, o2{0.1, 0.9};
  const std::vector<std::span<const double>> outs{o1, o2};
  const auto z = forward_features(x, outs);
  REQUIRE(z.size() == 6);
  REQUIRE(z == std::vector<double>{1, 2, 0.6, 0.4, 0.1, 0.9});
}

TEST_CASE("forwarded layout is fixed: raw block then forests in order") {
  const std::vector<double> x{7};
  const std::vector<double> o1{0.5, 0.5}, o2{1.0, 0.0};
  const std::vector<std::span<const double>> in_order{o1, o2};
  const std::vector<std::span<const double>> swapped{o2, o1};
  REQUIRE(forward_features(x, in_order) != forward_features(x, swapped));
}

TEST_CASE("layer training tracks input widths and layer limits") {
  const Dataset ds = synth::make_blobs(60, 4, 2, 3, 1.5, 0.05, 1);
  CascadeParams params = tiny_cascade(4, 2);
  CascadeModel model;
  train_layer(model, ds.X, ds.Y, ds.labels, Policy{0.0, 1.0}, params, 11);
  REQUIRE(model.layers[0].input_width == 4);
  REQUIRE(model.layers[0].oof_features.cols() == 4);  // F=2, C=2
  train_layer(model, ds.X, ds.Y, ds.labels, Policy{0.3, 1.0}, params, 12);
  REQUIRE(model.layers[1].input_width == 4 + 2 * 2);
  REQUIRE_THROWS_MATCHES(
      train_layer(model, ds.X, ds.Y, ds.labels, Policy{0.0, 1.0}, params, 13), Error,
      Catch::Matchers::Predicate<Error>([](const Error& e) {
        return e.code() == Errc::layer_limit_reached;
      }));
}

TEST_CASE("first-layer mixing sees uniform importance, later layers the pooled one") {
  const Dataset ds = synth::make_blobs(60, 5, 2, 3, 1.5, 0.05, 2);
  const CascadeModel model = train_toy(ds, 3, Policy{0.4, 1.0}, 21, tiny_cascade(4, 5));
  REQUIRE(model.layers[0].fi_used.all_equal());
  REQUIRE(model.layers[0].fi_used.size() == 5);
  // layer 2 uses layer 1's pooled importance zero-padded over the forwarded block
  REQUIRE(model.layers[1].fi_used.size() == 9);
  for (std::size_t k = 0; k < 5; ++k) {
    REQUIRE(model.layers[1].fi_used[k] == model.layers[0].fi_pooled[k]);
  }
  for (std::size_t k = 5; k < 9; ++k) {
    REQUIRE(model.layers[1].fi_used[k] == 0.0);
  }
  // layer 3 carries layer 2's pooled importance at matching width
  REQUIRE(model.layers[2].fi_used.size() == 9);
  for (std::size_t k = 0; k < 9; ++k) {
    REQUIRE(model.layers[2].fi_used[k] == model.layers[1].fi_pooled[k]);
  }
}

TEST_CASE("repeated training with the same seeds reproduces cached features") {
  const Dataset ds = synth::make_blobs(50, 4, 2, 3, 1.2, 0.1, 3);
  const CascadeModel a = train_toy(ds, 2, Policy{0.5, 0.8}, 7, tiny_cascade());
  const CascadeModel b = train_toy(ds, 2, Policy{0.5, 0.8}, 7, tiny_cascade());
  REQUIRE(a.layers[0].oof_features == b.layers[0].oof_features);
  REQUIRE(a.layers[1].oof_features == b.layers[1].oof_features);
}

TEST_CASE("layer one prediction averages the layer-one forests") {
  const Dataset ds = synth::make_blobs(40, 3, 2, 2, 2.0, 0.0, 4);
  const CascadeModel model = train_toy(ds, 1, Policy{0.0, 1.0}, 5, tiny_cascade());
  const Matrix P = predict_at_layer(model, ds.X, 1);
  Matrix manual(ds.n(), 2);
  for (const Forest& forest : model.layers[0].forests) {
    const Matrix Q = predict_forest(forest, ds.X);
    for (std::size_t r = 0; r < manual.rows(); ++r) {
      for (std::size_t c = 0; c < 2; ++c) manual(r, c) += Q(r, c);
    }
  }
  for (std::size_t r = 0; r < manual.rows(); ++r) {
    for (std::size_t c = 0; c < 2; ++c) manual(r, c) /= 2.0;
  }
  REQUIRE(P == manual);
}

TEST_CASE("hand-unrolled forwarding reproduces predict_at_layer exactly") {
  const Dataset ds = synth::make_blobs(60, 4, 3, 3, 1.5, 0.05, 6);
  const CascadeModel model = train_toy(ds, 3, Policy{0.3, 1.0}, 31, tiny_cascade(5, 5));
  const Dataset probe = synth::make_blobs(25, 4, 3, 3, 1.5, 0.05, 7);

  // manual unroll with explicit concatenation per layer
  Matrix Z = probe.X;
  Matrix expected;
  for (int layer = 0; layer < 3; ++layer) {
    std::vector<Matrix> outs;
    for (const Forest& forest : model.layers[static_cast<std::size_t>(layer)].forests) {
      outs.push_back(predict_forest(forest, Z));
    }
    Matrix avg(probe.n(), 3);
    for (std::size_t r = 0; r < avg.rows(); ++r) {
      for (const Matrix& P : outs) {
        for (std::size_t c = 0; c < 3; ++c) avg(r, c) += P(r, c);
      }
      for (std::size_t c = 0; c < 3; ++c) avg(r, c) /= static_cast<double>(outs.size());
    }
    expected = avg;
    if (layer + 1 < 3) {
      Matrix forwarded(probe.n(), 6);
      for (std::size_t f = 0; f < outs.size(); ++f) {
        for (std::size_t r = 0; r < probe.n(); ++r) {
          for (std::size_t c = 0; c < 3; ++c) {
            forwarded(r, f * 3 + c) = outs[f](r, c);
          }
        }
      }
      Z = hstack(probe.X, forwarded);
    }
  }
  const Matrix got = predict_at_layer(model, probe.X, 3);
  REQUIRE(got == expected);
}

TEST_CASE("checkpoint ensemble equals the naive mean of per-layer outputs") {
  const Dataset ds = synth::make_blobs(60, 4, 2, 3, 1.3, 0.1, 8);
  const CascadeModel model = train_toy(ds, 3, Policy{0.4, 1.2}, 17, tiny_cascade(5, 5));
  const Dataset probe = synth::make_blobs(30, 4, 2, 3, 1.3, 0.1, 9);
  const Matrix ce = predict_checkpoint_ensemble(model, probe.X);
  double max_diff = 0.0;
  for (std::size_t r = 0; r < probe.n(); ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      double naive = 0.0;
      for (int layer = 1; layer <= 3; ++layer) {
        naive += predict_at_layer(model, probe.X, layer)(r, c);
      }
      naive /= 3.0;
      max_diff = std::max(max_diff, std::fabs(naive - ce(r, c)));
    }
  }
  REQUIRE(max_diff <= 1e-12);
  for (std::size_t r = 0; r < ce.rows(); ++r) {
    double sum = 0.0;
    for (double v : ce.row(r)) sum += v;
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("one-layer checkpoint ensemble equals layer one") {
  const Dataset ds = synth::make_blobs(40, 3, 2, 2, 1.5, 0.0, 10);
  const CascadeModel model = train_toy(ds, 1, Policy{0.0, 1.0}, 3, tiny_cascade());
  REQUIRE(predict_checkpoint_ensemble(model, ds.X) == predict_at_layer(model, ds.X, 1));
}

TEST_CASE("scaling per-layer outputs by a positive constant keeps the predicted classes") {
  const Dataset ds = synth::make_blobs(50, 4, 3, 3, 1.2, 0.1, 12);
  const CascadeModel model = train_toy(ds, 3, Policy{0.3, 1.0}, 13, tiny_cascade(4, 5));
  const auto outs = per_layer_outputs(model, ds.X, model.n_layers());
  Matrix plain(ds.n(), 3), scaled(ds.n(), 3);
  for (const Matrix& P : outs) {
    for (std::size_t r = 0; r < ds.n(); ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        plain(r, c) += P(r, c) / 3.0;
        scaled(r, c) += 3.7 * P(r, c) / 3.0;
      }
    }
  }
  REQUIRE(predicted_classes(plain) == predicted_classes(scaled));
}

TEST_CASE("empty model and bad layer indexes are refused") {
  const Dataset ds = synth::make_blobs(30, 3, 2, 2, 1.0, 0.0, 14);
  CascadeModel empty;
  REQUIRE_THROWS_MATCHES(predict_checkpoint_ensemble(empty, ds.X), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::empty_model;
                         }));
  const CascadeModel model = train_toy(ds, 2, Policy{0.0, 1.0}, 15, tiny_cascade());
  REQUIRE_THROWS_MATCHES(predict_at_layer(model, ds.X, 3), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::bad_layer_index;
                         }));
  REQUIRE_THROWS_MATCHES(predict_at_layer(model, ds.X, 0), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::bad_layer_index;
                         }));
}

TEST_CASE("out-of-fold features for each row come from a model that never saw it") {
  const Dataset ds = synth::make_blobs(45, 4, 3, 3, 1.5, 0.0, 16);
  CascadeParams params = tiny_cascade(4, 3);
  params.keep_fold_models = true;
  CascadeModel model;
  train_layer(model, ds.X, ds.Y, ds.labels, Policy{0.5, 1.0}, params, 19);
  const Layer& layer = model.layers[0];
  const auto folds = kfold_indices(ds.n(), 3, ds.labels, derive_seed(19, "folds"));
  for (std::size_t r = 0; r < ds.n(); ++r) {
    const int fold = layer.fold_of_row[r];
    // bookkeeping agrees with the fold partition
    const auto& fold_rows = folds[static_cast<std::size_t>(fold)];
    REQUIRE(std::find(fold_rows.begin(), fold_rows.end(), static_cast<int>(r)) !=
            fold_rows.end());
    // cached features equal the held-out fold model's prediction
    const Matrix row = ds.X.take_rows(std::vector<int>{static_cast<int>(r)});
    const auto& models = layer.fold_models[static_cast<std::size_t>(fold)];
    for (std::size_t f = 0; f < models.size(); ++f) {
      const Matrix re = predict_forest(models[f], row);
      for (std::size_t c = 0; c < 3; ++c) {
        REQUIRE(re(0, c) == layer.oof_features(r, f * 3 + c));
      }
    }
  }
}

TEST_CASE("cv layer selection scans every layer and favors the shallowest tie") {
  const Dataset ds = synth::make_blobs(60, 4, 2, 3, 1.4, 0.1, 18);
  const Dataset val = synth::make_blobs(30, 4, 2, 3, 1.4, 0.1, 19);
  const CascadeModel model = train_toy(ds, 4, Policy{0.2, 1.0}, 23, tiny_cascade(4, 6));
  const int chosen = select_output_layer_cv(model, val.X, val.labels);
  // independent re-scan
  int expected = 1;
  double best = -1.0;
  for (int i = 1; i <= model.n_layers(); ++i) {
    const double acc = accuracy(predict_at_layer(model, val.X, i), val.labels);
    if (acc > best) {
      best = acc;
      expected = i;
    }
  }
  REQUIRE(chosen == expected);
}

TEST_CASE("cv layer selection returns 1 when all layers tie") {
  // single-layer model trivially ties with itself; extend by duplicating
  const Dataset ds = synth::make_blobs(40, 3, 2, 2, 3.0, 0.0, 24);
  CascadeModel model = train_toy(ds, 3, Policy{0.0, 1.0}, 25, tiny_cascade(6, 5));
  // a perfectly separable task saturates every layer at accuracy 1
  const int chosen = select_output_layer_cv(model, ds.X, ds.labels);
  const double first = accuracy(predict_at_layer(model, ds.X, 1), ds.labels);
  if (first == 1.0) {
    REQUIRE(chosen == 1);
  } else {
    SUCCEED("task not saturated under this seed; tie rule exercised elsewhere");
  }
}
