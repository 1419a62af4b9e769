#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "forestmix/errors.hpp"

namespace forestmix {

enum class ColumnKind { continuous, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;  // categorical only, ordinal order
};

// Describes one CSV file: every column including the label column.
struct Schema {
  std::vector<Column> columns;
  std::string label_column;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  int label_index() const { return column_index(label_column); }

  // feature columns in schema order, label excluded
  std::vector<int> feature_indices() const {
    std::vector<int> out;
    const int li = label_index();
    for (int i = 0; i < static_cast<int>(columns.size()); ++i) {
      if (i != li) out.push_back(i);
    }
    return out;
  }

  void validate() const {
    require(!columns.empty(), Errc::config_error, "schema has no columns");
    std::unordered_set<std::string> names;
    for (const auto& col : columns) {
      require(names.insert(col.name).second, Errc::config_error,
              "duplicate column name '" + col.name + "'");
      if (col.kind == ColumnKind::categorical) {
        require(!col.categories.empty(), Errc::config_error,
                "categorical column '" + col.name + "' has no categories");
        std::unordered_set<std::string> cats;
        for (const auto& c : col.categories) {
          require(cats.insert(c).second, Errc::config_error,
                  "duplicate category '" + c + "' in column '" + col.name + "'");
        }
      } else {
        require(col.categories.empty(), Errc::config_error,
                "continuous column '" + col.name + "' lists categories");
      }
    }
    const int li = label_index();
    require(li >= 0, Errc::config_error, "label column '" + label_column + "' not in schema");
    require(columns[static_cast<std::size_t>(li)].kind == ColumnKind::categorical,
            Errc::config_error, "label column must be categorical");
    require(columns.size() >= 3, Errc::config_error,
            "need at least two feature columns besides the label");
  }

  const std::vector<std::string>& class_names() const {
    return columns[static_cast<std::size_t>(label_index())].categories;
  }

  // ordinal code of a category value, -1 when unknown
  static int category_code(const Column& col, const std::string& value) {
    for (std::size_t i = 0; i < col.categories.size(); ++i) {
      if (col.categories[i] == value) return static_cast<int>(i);
    }
    return -1;
  }

  // stable content hash; prediction refuses to run when it disagrees
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](const std::string& s) {
      for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
      }
      h ^= 0x1f;
      h *= 0x100000001b3ull;
    };
    feed(label_column);
    for (const auto& col : columns) {
      feed(col.name);
      feed(col.kind == ColumnKind::categorical ? "categorical" : "continuous");
      for (const auto& c : col.categories) feed(c);
    }
    return h;
  }
};

inline Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  require(j.contains("label") && j["label"].is_string(), Errc::config_error,
          "schema json needs a string 'label' field");
  require(j.contains("columns") && j["columns"].is_array(), Errc::config_error,
          "schema json needs a 'columns' array");
  s.label_column = j["label"].get<std::string>();
  for (const auto& cj : j["columns"]) {
    Column col;
    col.name = cj.at("name").get<std::string>();
    const std::string kind = cj.at("kind").get<std::string>();
    if (kind == "continuous") {
      col.kind = ColumnKind::continuous;
    } else if (kind == "categorical") {
      col.kind = ColumnKind::categorical;
      for (const auto& cat : cj.at("categories")) {
        col.categories.push_back(cat.get<std::string>());
      }
    } else {
      fail(Errc::config_error, "unknown column kind '" + kind + "'");
    }
    s.columns.push_back(std::move(col));
  }
  s.validate();
  return s;
}

inline nlohmann::json schema_to_json(const Schema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& col : s.columns) {
    nlohmann::json cj;
    cj["name"] = col.name;
    cj["kind"] = col.kind == ColumnKind::categorical ? "categorical" : "continuous";
    if (col.kind == ColumnKind::categorical) cj["categories"] = col.categories;
    cols.push_back(cj);
  }
  return nlohmann::json{{"label", s.label_column}, {"columns", cols}};
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, "schema json: " + std::string(e.what()));
  }
  return schema_from_json(j);
}

inline void save_schema(const Schema& s, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write schema file '" + path + "'");
  out << schema_to_json(s).dump(2) << "\n";
}

}  // namespace forestmix
