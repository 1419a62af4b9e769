#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "forestmix/forest.hpp"
#include "forestmix/matrix.hpp"
#include "forestmix/rng.hpp"

namespace forestmix {

// Augmentation policy for one cascade layer: per-row selection probability
// and the Beta shape controlling how many features a mixed row keeps.
struct Policy {
  double prob = 0.0;
  double mag = 1.0;

  bool operator==(const Policy& o) const { return prob == o.prob && mag == o.mag; }
};

struct MixRecord {
  std::int32_t i = 0;             // row being replaced
  std::int32_t j = 0;             // partner row
  std::vector<std::int32_t> kept; // feature indices taken from row i
  double lambda = 0.0;
  double c = 0.0;
};

using MixSink = std::function<void(const MixRecord&)>;

struct MaskDraw {
  std::vector<std::uint8_t> mask;  // 1 = keep from row i, 0 = take from row j
  double lambda = 0.0;

  int ones() const {
    int m = 0;
    for (auto b : mask) m += b;
    return m;
  }
};

// lambda ~ Beta(mag, mag); the mask keeps clamp(round(lambda*d), 1, d-1)
// features so both parents always contribute.
inline MaskDraw sample_mask(int d, double mag, Rng& rng) {
  require(d >= 2, Errc::bad_dimension, "mask needs d >= 2");
  require(mag > 0.0, Errc::bad_dimension, "mag must be positive");
  MaskDraw draw;
  draw.lambda = rng.beta(mag, mag);
  long long m = std::llround(draw.lambda * static_cast<double>(d));
  m = std::clamp(m, 1ll, static_cast<long long>(d) - 1);
  draw.mask.assign(static_cast<std::size_t>(d), 0);
  for (int idx : rng.sample_without_replacement(d, static_cast<int>(m))) {
    draw.mask[static_cast<std::size_t>(idx)] = 1;
  }
  return draw;
}

// Label coefficient: the importance mass of the kept features. When every
// importance entry is equal the ratio reduces to ones/d; that case is
// computed directly so the reduction holds exactly in floating point.
inline double mix_coefficient(std::span<const std::uint8_t> mask, const FiVector& fi) {
  require(mask.size() == fi.size(), Errc::width_mismatch, "mask/importance width mismatch");
  if (fi.all_equal()) {
    require(fi.values.front() > 0.0, Errc::zero_importance, "importance sums to zero");
    int ones = 0;
    for (auto b : mask) ones += b;
    return static_cast<double>(ones) / static_cast<double>(mask.size());
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    require(fi[k] >= 0.0, Errc::zero_importance, "negative importance entry");
    den += fi[k];
    if (mask[k]) num += fi[k];
  }
  require(den > 0.0, Errc::zero_importance, "importance sums to zero");
  return num / den;
}

struct MixResult {
  std::vector<double> x;
  std::vector<double> y;
  double c = 0.0;
};

// x~ keeps masked features from x_i and fills the rest from x_j;
// y~ = c*y_i + (1-c)*y_j.
inline MixResult mix_pair(std::span<const double> x_i, std::span<const double> x_j,
                          std::span<const double> y_i, std::span<const double> y_j,
                          std::span<const std::uint8_t> mask, const FiVector& fi) {
  require(x_i.size() == x_j.size() && x_i.size() == mask.size(), Errc::width_mismatch,
          "feature width mismatch in mix_pair");
  require(y_i.size() == y_j.size(), Errc::width_mismatch, "label width mismatch in mix_pair");
  MixResult out;
  out.c = mix_coefficient(mask, fi);
  out.x.resize(x_i.size());
  for (std::size_t k = 0; k < x_i.size(); ++k) {
    out.x[k] = mask[k] ? x_i[k] : x_j[k];
  }
  out.y.resize(y_i.size());
  for (std::size_t c = 0; c < y_i.size(); ++c) {
    out.y[c] = out.c * y_i[c] + (1.0 - out.c) * y_j[c];
  }
  return out;
}

struct AugmentResult {
  Matrix X;
  Matrix Y;
  std::size_t mixed_count = 0;
};

// Each row is independently replaced, with probability policy.prob, by a
// mix of itself and a uniformly drawn partner (never itself). Parents are
// always original rows; the output has the same size as the input.
inline AugmentResult apply_policy(const Matrix& X, const Matrix& Y, const Policy& policy,
                                  const FiVector& fi, std::uint64_t seed,
                                  const MixSink* sink = nullptr) {
  require(X.rows() == Y.rows(), Errc::shape_error, "X/Y row mismatch");
  require(fi.size() == X.cols(), Errc::width_mismatch,
          "importance width " + std::to_string(fi.size()) + " != feature width " +
              std::to_string(X.cols()));
  require(policy.prob >= 0.0 && policy.prob <= 1.0, Errc::config_error,
          "prob must lie in [0,1]");
  require(policy.mag > 0.0, Errc::config_error, "mag must be positive");

  AugmentResult out;
  out.X = X;
  out.Y = Y;
  const std::size_t n = X.rows();
  if (n < 2 || policy.prob == 0.0) return out;
  const int d = static_cast<int>(X.cols());

  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(derive_seed(seed, "row", r));
    if (rng.u01() >= policy.prob) continue;
    const MaskDraw draw = sample_mask(d, policy.mag, rng);
    std::size_t j = static_cast<std::size_t>(rng.bounded(n - 1));
    if (j >= r) ++j;
    const MixResult mixed =
        mix_pair(X.row(r), X.row(j), Y.row(r), Y.row(j), draw.mask, fi);
    std::copy(mixed.x.begin(), mixed.x.end(), out.X.row(r).begin());
    std::copy(mixed.y.begin(), mixed.y.end(), out.Y.row(r).begin());
    ++out.mixed_count;
    if (sink && *sink) {
      MixRecord rec;
      rec.i = static_cast<std::int32_t>(r);
      rec.j = static_cast<std::int32_t>(j);
      for (int k = 0; k < d; ++k) {
        if (draw.mask[static_cast<std::size_t>(k)]) rec.kept.push_back(k);
      }
      rec.lambda = draw.lambda;
      rec.c = mixed.c;
      (*sink)(rec);
    }
  }
  return out;
}

}  // namespace forestmix
