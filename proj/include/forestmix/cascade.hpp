#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forestmix/augment.hpp"
#include "forestmix/forest.hpp"
#include "forestmix/matrix.hpp"
#include "forestmix/metrics.hpp"

namespace forestmix {

struct CascadeParams {
  GroupParams group;
  int max_layers = 15;
  int oof_folds = 3;
  bool keep_fold_models = false;  // training-only bookkeeping for audits
};

struct Layer {
  std::vector<Forest> forests;    // full-data group, used at inference
  FiVector fi_used;               // importance consumed by this layer's mixing
  FiVector fi_pooled;             // pooled from every forest trained in this layer
  Policy policy;
  Matrix oof_features;            // n x (F*C), out-of-fold outputs cached for the next layer
  std::vector<int> fold_of_row;
  std::vector<std::vector<Forest>> fold_models;  // only when keep_fold_models
  int input_width = 0;
};

enum class OutputMode { checkpoint_ensemble, cv_selected };

struct CascadeModel {
  int d = 0;            // raw feature width
  int C = 0;            // classes
  int F = 0;            // forests per layer
  int max_layers = 15;
  std::vector<Layer> layers;
  OutputMode mode = OutputMode::checkpoint_ensemble;
  int selected_layer = 0;  // 1-based; set iff mode == cv_selected
  std::uint64_t schema_hash = 0;
  std::vector<std::string> class_names;

  int n_layers() const { return static_cast<int>(layers.size()); }

  // layer 1 consumes raw features, deeper layers raw + forwarded
  int input_width_at(int layer_1based) const {
    return layer_1based <= 1 ? d : d + F * C;
  }
};

// [x_raw || out_1 || ... || out_F], fixed forest order
inline std::vector<double> forward_features(std::span<const double> x_raw,
                                            std::span<const std::span<const double>> outputs) {
  std::vector<double> z(x_raw.begin(), x_raw.end());
  for (const auto& out : outputs) z.insert(z.end(), out.begin(), out.end());
  return z;
}

namespace detail {

// importance from the previous layer, zero-padded on the right when this
// layer's input is wider (layer 2 sees forwarded columns the first layer's
// forests never trained on)
inline FiVector carried_importance(const CascadeModel& model, std::size_t width) {
  if (model.layers.empty()) return FiVector::uniform(width);
  FiVector fi = model.layers.back().fi_pooled;
  require(fi.size() <= width, Errc::width_mismatch, "importance wider than layer input");
  fi.values.resize(width, 0.0);
  return fi;
}

inline Matrix layer_input(const CascadeModel& model, const Matrix& X) {
  if (model.layers.empty()) return X;
  return hstack(X, model.layers.back().oof_features);
}

}  // namespace detail

// Trains the next layer: mixes the layer input under `policy` (within each
// fold's training complement), fits the forest group out-of-fold, and
// caches the forwarded features for the layer after this one.
inline void train_layer(CascadeModel& model, const Matrix& X, const Matrix& Y,
                        std::span<const int> labels, const Policy& policy,
                        const CascadeParams& params, std::uint64_t seed,
                        const MixSink* sink = nullptr) {
  require(model.n_layers() < params.max_layers, Errc::layer_limit_reached,
          "cascade already has " + std::to_string(model.n_layers()) + " layers");
  if (model.layers.empty()) {
    model.d = static_cast<int>(X.cols());
    model.C = static_cast<int>(Y.cols());
    model.F = static_cast<int>(params.group.forests_per_layer());
    model.max_layers = params.max_layers;
  } else {
    require(static_cast<int>(X.cols()) == model.d, Errc::width_mismatch,
            "raw feature width changed between layers");
  }

  const Matrix Z = detail::layer_input(model, X);
  Layer layer;
  layer.input_width = static_cast<int>(Z.cols());
  layer.policy = policy;
  layer.fi_used = detail::carried_importance(model, Z.cols());

  TrainMutator mutate;
  if (policy.prob > 0.0) {
    const FiVector& fi = layer.fi_used;
    mutate = [&fi, &policy, sink](Matrix& Xm, Matrix& Ym, std::uint64_t s, int) {
      AugmentResult aug = apply_policy(Xm, Ym, policy, fi, s, sink);
      Xm = std::move(aug.X);
      Ym = std::move(aug.Y);
    };
  }

  OofResult oof = oof_predict(Z, Y, labels, params.group, params.oof_folds, seed, mutate,
                              params.keep_fold_models);
  layer.forests = std::move(oof.full);
  layer.fold_of_row = std::move(oof.fold_of_row);
  layer.fold_models = std::move(oof.fold_models);
  layer.fi_pooled = normalize_importance(std::move(oof.importance_raw));

  layer.oof_features = Matrix(Z.rows(), static_cast<std::size_t>(model.F * model.C));
  for (int f = 0; f < model.F; ++f) {
    const Matrix& P = oof.oof[static_cast<std::size_t>(f)];
    for (std::size_t r = 0; r < P.rows(); ++r) {
      const auto src = P.row(r);
      auto dst = layer.oof_features.row(r);
      std::copy(src.begin(), src.end(),
                dst.begin() + static_cast<std::ptrdiff_t>(f * model.C));
    }
  }
  model.layers.push_back(std::move(layer));
}

// Averaged class distribution of each layer 1..upto for the given raw rows,
// forwarding full-data forest outputs between layers.
inline std::vector<Matrix> per_layer_outputs(const CascadeModel& model, const Matrix& X,
                                             int upto) {
  require(model.n_layers() >= 1, Errc::empty_model, "cascade has no trained layers");
  require(upto >= 1 && upto <= model.n_layers(), Errc::bad_layer_index,
          "layer index " + std::to_string(upto) + " outside 1.." +
              std::to_string(model.n_layers()));
  require(static_cast<int>(X.cols()) == model.d, Errc::width_mismatch,
          "expected raw width " + std::to_string(model.d));

  std::vector<Matrix> averaged;
  averaged.reserve(static_cast<std::size_t>(upto));
  Matrix Z = X;
  for (int i = 0; i < upto; ++i) {
    const Layer& layer = model.layers[static_cast<std::size_t>(i)];
    std::vector<Matrix> outs;
    outs.reserve(layer.forests.size());
    for (const Forest& forest : layer.forests) outs.push_back(predict_forest(forest, Z));

    Matrix avg(X.rows(), static_cast<std::size_t>(model.C));
    for (std::size_t r = 0; r < avg.rows(); ++r) {
      auto dst = avg.row(r);
      for (const Matrix& P : outs) {
        const auto src = P.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
      for (double& v : dst) v /= static_cast<double>(outs.size());
    }
    averaged.push_back(std::move(avg));

    if (i + 1 < upto) {
      Matrix forwarded(X.rows(), static_cast<std::size_t>(model.F * model.C));
      for (int f = 0; f < model.F; ++f) {
        for (std::size_t r = 0; r < X.rows(); ++r) {
          const auto src = outs[static_cast<std::size_t>(f)].row(r);
          auto dst = forwarded.row(r);
          std::copy(src.begin(), src.end(),
                    dst.begin() + static_cast<std::ptrdiff_t>(f * model.C));
        }
      }
      Z = hstack(X, forwarded);
    }
  }
  return averaged;
}

inline Matrix predict_at_layer(const CascadeModel& model, const Matrix& X, int layer) {
  return per_layer_outputs(model, X, layer).back();
}

// uniform mean over every trained layer's output, one forward pass
inline Matrix predict_checkpoint_ensemble(const CascadeModel& model, const Matrix& X) {
  const auto outs = per_layer_outputs(model, X, model.n_layers());
  Matrix mean(X.rows(), static_cast<std::size_t>(model.C));
  for (const Matrix& P : outs) {
    for (std::size_t r = 0; r < mean.rows(); ++r) {
      const auto src = P.row(r);
      auto dst = mean.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(outs.size());
  for (std::size_t r = 0; r < mean.rows(); ++r) {
    for (double& v : mean.row(r)) v *= inv;
  }
  return mean;
}

// highest validation accuracy wins; ties go to the shallower layer
inline int select_output_layer_cv(const CascadeModel& model, const Matrix& Xval,
                                  std::span<const int> yval) {
  require(model.n_layers() >= 1, Errc::empty_model, "cascade has no trained layers");
  require(Xval.rows() >= 1, Errc::empty_input, "empty validation set");
  const auto outs = per_layer_outputs(model, Xval, model.n_layers());
  int best_layer = 1;
  double best_acc = -1.0;
  for (int i = 0; i < static_cast<int>(outs.size()); ++i) {
    const double acc = accuracy(outs[static_cast<std::size_t>(i)], yval);
    if (acc > best_acc) {
      best_acc = acc;
      best_layer = i + 1;
    }
  }
  return best_layer;
}

inline Matrix predict_model(const CascadeModel& model, const Matrix& X) {
  if (model.mode == OutputMode::cv_selected && model.selected_layer >= 1) {
    return predict_at_layer(model, X, model.selected_layer);
  }
  return predict_checkpoint_ensemble(model, X);
}

}  // namespace forestmix
