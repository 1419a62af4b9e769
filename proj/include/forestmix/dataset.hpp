#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "forestmix/csv.hpp"
#include "forestmix/matrix.hpp"
#include "forestmix/rng.hpp"
#include "forestmix/schema.hpp"

namespace forestmix {

enum class MissingPolicy { impute, reject };

// Encoded table: features ordinally encoded, labels one-hot. Immutable
// after construction, safe to share across workers.
struct Dataset {
  Matrix X;                             // n x d
  Matrix Y;                             // n x C, one-hot
  std::vector<int> labels;              // n, class index per row
  Schema schema;
  std::vector<std::string> class_names; // C

  std::size_t n() const { return X.rows(); }
  std::size_t d() const { return X.cols(); }
  std::size_t num_classes() const { return class_names.size(); }

  Dataset subset(std::span<const int> idx) const {
    Dataset out;
    out.X = X.take_rows(idx);
    out.Y = Y.take_rows(idx);
    out.labels.reserve(idx.size());
    for (int i : idx) out.labels.push_back(labels[static_cast<std::size_t>(i)]);
    out.schema = schema;
    out.class_names = class_names;
    return out;
  }

  // decode an ordinal feature value back to its category label
  std::string decode_feature(int feature, double value) const {
    const auto fidx = schema.feature_indices();
    const Column& col = schema.columns[static_cast<std::size_t>(fidx[static_cast<std::size_t>(feature)])];
    require(col.kind == ColumnKind::categorical, Errc::config_error,
            "decode_feature on continuous column '" + col.name + "'");
    const auto code = static_cast<std::size_t>(value);
    require(std::floor(value) == value && code < col.categories.size(),
            Errc::unknown_category, "ordinal code out of range for '" + col.name + "'");
    return col.categories[code];
  }

  void check_invariants() const {
    require(d() >= 2, Errc::invalid_dataset, "need at least 2 feature columns");
    require(n() >= num_classes(), Errc::invalid_dataset, "fewer rows than classes");
    std::vector<int> counts(num_classes(), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      require(counts[c] > 0, Errc::invalid_dataset,
              "class '" + class_names[c] + "' never appears in the data");
    }
  }

  std::vector<int> class_counts() const {
    std::vector<int> counts(num_classes(), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
  }
};

namespace detail {

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "?";
}

inline double parse_number(const std::string& cell, const std::string& col) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  double value = 0.0;
  const auto res = std::from_chars(first, last, value);
  require(res.ec == std::errc() && res.ptr == last, Errc::parse_error,
          "cannot parse '" + cell + "' as a number in column '" + col + "'");
  return value;
}

inline double column_median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace detail

// Reads a headered CSV against its schema. Missing cells are empty strings
// or "?"; under `impute`, continuous gaps take the column median and
// categorical gaps the column mode (ties resolved by category order).
inline Dataset load_csv(const std::string& path, const Schema& schema,
                        MissingPolicy missing = MissingPolicy::impute) {
  schema.validate();
  const auto rows = csv::read_file(path);
  require(!rows.empty(), Errc::shape_error, "csv file '" + path + "' is empty");

  const auto& header = rows.front();
  require(header.size() == schema.columns.size(), Errc::shape_error,
          "header has " + std::to_string(header.size()) + " columns, schema expects " +
              std::to_string(schema.columns.size()));
  // map file column order onto schema order
  std::vector<int> file_col_of(schema.columns.size(), -1);
  for (std::size_t s = 0; s < schema.columns.size(); ++s) {
    for (std::size_t f = 0; f < header.size(); ++f) {
      if (header[f] == schema.columns[s].name) {
        file_col_of[s] = static_cast<int>(f);
        break;
      }
    }
    require(file_col_of[s] >= 0, Errc::shape_error,
            "column '" + schema.columns[s].name + "' missing from csv header");
  }

  const std::size_t n = rows.size() - 1;
  require(n > 0, Errc::shape_error, "csv has no data rows");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    require(rows[r].size() == header.size(), Errc::shape_error,
            "row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                " cells, expected " + std::to_string(header.size()));
  }

  // decode cells column by column, collecting stats for imputation
  const std::size_t ncols = schema.columns.size();
  Matrix cells(n, ncols);
  std::vector<std::vector<char>> missing_mask(ncols, std::vector<char>(n, 0));
  bool any_missing = false;
  for (std::size_t s = 0; s < ncols; ++s) {
    const Column& col = schema.columns[s];
    const auto f = static_cast<std::size_t>(file_col_of[s]);
    for (std::size_t r = 0; r < n; ++r) {
      const std::string& cell = rows[r + 1][f];
      if (detail::is_missing(cell)) {
        require(missing != MissingPolicy::reject, Errc::missing_value,
                "missing value at row " + std::to_string(r + 1) + ", column '" + col.name + "'");
        require(static_cast<int>(s) != schema.label_index(), Errc::missing_value,
                "label missing at row " + std::to_string(r + 1));
        missing_mask[s][r] = 1;
        any_missing = true;
        continue;
      }
      if (col.kind == ColumnKind::continuous) {
        cells(r, s) = detail::parse_number(cell, col.name);
      } else {
        const int code = Schema::category_code(col, cell);
        require(code >= 0, Errc::unknown_category,
                "value '" + cell + "' not among categories of column '" + col.name + "'");
        cells(r, s) = static_cast<double>(code);
      }
    }
  }

  if (any_missing) {
    for (std::size_t s = 0; s < ncols; ++s) {
      const Column& col = schema.columns[s];
      std::vector<double> present;
      for (std::size_t r = 0; r < n; ++r) {
        if (!missing_mask[s][r]) present.push_back(cells(r, s));
      }
      bool has_gap = present.size() < n;
      if (!has_gap) continue;
      require(!present.empty(), Errc::missing_value,
              "column '" + col.name + "' has no observed values to impute from");
      double fill = 0.0;
      if (col.kind == ColumnKind::continuous) {
        fill = detail::column_median(present);
      } else {
        std::vector<int> freq(col.categories.size(), 0);
        for (double v : present) freq[static_cast<std::size_t>(v)]++;
        int best = 0;
        for (std::size_t c = 1; c < freq.size(); ++c) {
          if (freq[c] > freq[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        }
        fill = static_cast<double>(best);
      }
      for (std::size_t r = 0; r < n; ++r) {
        if (missing_mask[s][r]) cells(r, s) = fill;
      }
    }
  }

  // split into features and one-hot labels
  Dataset ds;
  ds.schema = schema;
  ds.class_names = schema.class_names();
  const auto fidx = schema.feature_indices();
  const auto li = static_cast<std::size_t>(schema.label_index());
  ds.X = Matrix(n, fidx.size());
  ds.Y = Matrix(n, ds.class_names.size());
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < fidx.size(); ++j) {
      ds.X(r, j) = cells(r, static_cast<std::size_t>(fidx[j]));
    }
    const int cls = static_cast<int>(cells(r, li));
    ds.labels[r] = cls;
    ds.Y(r, static_cast<std::size_t>(cls)) = 1.0;
  }
  ds.check_invariants();
  return ds;
}

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

// Stratified split. Per class, the test part receives
// clamp(round(count * test_fraction), 1, count - 1) members, so both parts
// keep at least one member of every class.
inline SplitResult stratified_split(const Dataset& ds, double test_fraction,
                                    std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, Errc::config_error,
          "test_fraction must lie in (0,1)");
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    require(counts[c] >= 2, Errc::too_few_samples,
            "class '" + ds.class_names[c] + "' has fewer than 2 members");
  }
  std::vector<std::vector<int>> by_class(ds.num_classes());
  for (std::size_t r = 0; r < ds.n(); ++r) {
    by_class[static_cast<std::size_t>(ds.labels[r])].push_back(static_cast<int>(r));
  }
  SplitResult out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    Rng rng(derive_seed(seed, "split-class", c));
    rng.shuffle(members);
    const auto count = static_cast<long long>(members.size());
    long long want = std::llround(static_cast<double>(count) * test_fraction);
    want = std::clamp(want, 1ll, count - 1);
    for (long long i = 0; i < count; ++i) {
      (i < want ? out.test_idx : out.train_idx).push_back(members[static_cast<std::size_t>(i)]);
    }
  }
  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.test_idx.begin(), out.test_idx.end());
  out.train = ds.subset(out.train_idx);
  out.test = ds.subset(out.test_idx);
  return out;
}

// Stratified k-fold partition of 0..n-1. Per class and overall, fold sizes
// differ by at most one; the global cursor keeps every fold non-empty.
inline std::vector<std::vector<int>> kfold_indices(std::size_t n, int k,
                                                   std::span<const int> labels,
                                                   std::uint64_t seed) {
  require(k >= 2 && static_cast<std::size_t>(k) <= n, Errc::bad_k,
          "need 2 <= k <= n, got k=" + std::to_string(k) + ", n=" + std::to_string(n));
  require(labels.size() == n, Errc::shape_error, "labels length mismatch");
  int max_label = 0;
  for (int y : labels) max_label = std::max(max_label, y);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t r = 0; r < n; ++r) {
    by_class[static_cast<std::size_t>(labels[r])].push_back(static_cast<int>(r));
  }
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    Rng rng(derive_seed(seed, "fold-class", c));
    rng.shuffle(members);
    for (int idx : members) {
      folds[cursor % static_cast<std::size_t>(k)].push_back(idx);
      ++cursor;
    }
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

}  // namespace forestmix
