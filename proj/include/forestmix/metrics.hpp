#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "forestmix/matrix.hpp"

namespace forestmix {

// lowest index wins ties, matching the prediction tie rule everywhere
inline int argmax_row(std::span<const double> row) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(row.size()); ++c) {
    if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

inline std::vector<int> predicted_classes(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = argmax_row(probs.row(r));
  return out;
}

inline double accuracy(const Matrix& probs, std::span<const int> labels) {
  require(probs.rows() == labels.size(), Errc::shape_error, "accuracy row mismatch");
  require(probs.rows() > 0, Errc::empty_input, "accuracy of empty set");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    if (argmax_row(probs.row(r)) == labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

inline std::vector<std::vector<std::int64_t>> confusion_matrix(const Matrix& probs,
                                                               std::span<const int> labels,
                                                               int num_classes) {
  require(probs.rows() == labels.size(), Errc::shape_error, "confusion row mismatch");
  std::vector<std::vector<std::int64_t>> cm(
      static_cast<std::size_t>(num_classes),
      std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    cm[static_cast<std::size_t>(labels[r])][static_cast<std::size_t>(argmax_row(probs.row(r)))]++;
  }
  return cm;
}

inline double mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

inline double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace forestmix
