#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forestmix/cascade.hpp"
#include "forestmix/forest.hpp"

namespace forestmix {
namespace io {

// All integers and IEEE-754 bit patterns are written little-endian with
// fixed widths; see the Formats section of the README for the layout.

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_bytes(out, &v, 1); }

inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  write_bytes(out, b, 4);
}

inline void write_i32(std::ostream& out, std::int32_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  write_bytes(out, s.data(), s.size());
}

inline void read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(in.gcount() == static_cast<std::streamsize>(n), Errc::io_error,
          "unexpected end of stream");
}

inline std::uint8_t read_u8(std::istream& in) {
  std::uint8_t v = 0;
  read_bytes(in, &v, 1);
  return v;
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint8_t b[4];
  read_bytes(in, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::int32_t read_i32(std::istream& in) {
  return static_cast<std::int32_t>(read_u32(in));
}

inline std::uint64_t read_u64(std::istream& in) {
  const std::uint64_t lo = read_u32(in);
  const std::uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}

inline double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_u64(in));
}

inline std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  require(n < (1ull << 32), Errc::io_error, "unreasonable string length");
  std::string s(n, '\0');
  if (n) read_bytes(in, s.data(), n);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
  char got[8];
  read_bytes(in, got, 8);
  require(std::memcmp(got, magic, 8) == 0, Errc::io_error,
          std::string("bad magic, expected ") + magic);
}

constexpr char kForestMagic[9] = "FMXFRST1";
constexpr char kModelMagic[9] = "FMXMODL1";
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace io

inline void save_forest(std::ostream& out, const Forest& forest) {
  io::write_bytes(out, io::kForestMagic, 8);
  io::write_u32(out, io::kFormatVersion);
  io::write_u8(out, forest.kind == ForestKind::bagged ? 0 : 1);
  io::write_u32(out, static_cast<std::uint32_t>(forest.n_outputs));
  io::write_u32(out, static_cast<std::uint32_t>(forest.n_features));
  io::write_u32(out, static_cast<std::uint32_t>(forest.trees.size()));
  io::write_u32(out, static_cast<std::uint32_t>(forest.feature_subsample));
  io::write_u64(out, forest.seed);
  for (const Tree& tree : forest.trees) {
    io::write_u32(out, static_cast<std::uint32_t>(tree.nodes.size()));
    io::write_u32(out, static_cast<std::uint32_t>(tree.leaf_values.size()));
    for (const TreeNode& node : tree.nodes) {  // pre-order by construction
      io::write_i32(out, node.feature);
      io::write_f64(out, node.threshold);
      io::write_i32(out, node.left);
      io::write_i32(out, node.right);
      io::write_f64(out, node.impurity_decrease);
      io::write_i32(out, node.n_samples);
      io::write_i32(out, node.value_offset);
    }
    for (double v : tree.leaf_values) io::write_f64(out, v);
  }
}

inline Forest load_forest(std::istream& in) {
  io::expect_magic(in, io::kForestMagic);
  const std::uint32_t version = io::read_u32(in);
  require(version == io::kFormatVersion, Errc::io_error,
          "unsupported forest format version " + std::to_string(version));
  Forest forest;
  forest.kind = io::read_u8(in) == 0 ? ForestKind::bagged : ForestKind::extra;
  forest.n_outputs = static_cast<int>(io::read_u32(in));
  forest.n_features = static_cast<int>(io::read_u32(in));
  const std::uint32_t n_trees = io::read_u32(in);
  forest.feature_subsample = static_cast<int>(io::read_u32(in));
  forest.seed = io::read_u64(in);
  forest.trees.resize(n_trees);
  for (Tree& tree : forest.trees) {
    tree.n_features = forest.n_features;
    tree.n_outputs = forest.n_outputs;
    const std::uint32_t n_nodes = io::read_u32(in);
    const std::uint32_t n_values = io::read_u32(in);
    tree.nodes.resize(n_nodes);
    for (TreeNode& node : tree.nodes) {
      node.feature = io::read_i32(in);
      node.threshold = io::read_f64(in);
      node.left = io::read_i32(in);
      node.right = io::read_i32(in);
      node.impurity_decrease = io::read_f64(in);
      node.n_samples = io::read_i32(in);
      node.value_offset = io::read_i32(in);
    }
    tree.leaf_values.resize(n_values);
    for (double& v : tree.leaf_values) v = io::read_f64(in);
  }
  return forest;
}

inline void save_fi(std::ostream& out, const FiVector& fi) {
  io::write_u64(out, fi.values.size());
  for (double v : fi.values) io::write_f64(out, v);
}

inline FiVector load_fi(std::istream& in) {
  FiVector fi;
  fi.values.resize(io::read_u64(in));
  for (double& v : fi.values) v = io::read_f64(in);
  return fi;
}

// Bundles schema hash, the config it was trained under, every layer's
// full-data forests, importance vectors, and the policy schedule.
inline void save_model(std::ostream& out, const CascadeModel& model,
                       const nlohmann::json& config) {
  io::write_bytes(out, io::kModelMagic, 8);
  io::write_u32(out, io::kFormatVersion);
  io::write_u64(out, model.schema_hash);
  io::write_string(out, config.dump());
  io::write_u32(out, static_cast<std::uint32_t>(model.d));
  io::write_u32(out, static_cast<std::uint32_t>(model.C));
  io::write_u32(out, static_cast<std::uint32_t>(model.F));
  io::write_u32(out, static_cast<std::uint32_t>(model.max_layers));
  io::write_u8(out, model.mode == OutputMode::checkpoint_ensemble ? 0 : 1);
  io::write_i32(out, model.selected_layer);
  io::write_u32(out, static_cast<std::uint32_t>(model.class_names.size()));
  for (const auto& name : model.class_names) io::write_string(out, name);
  io::write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const Layer& layer : model.layers) {
    io::write_u32(out, static_cast<std::uint32_t>(layer.input_width));
    io::write_f64(out, layer.policy.prob);
    io::write_f64(out, layer.policy.mag);
    save_fi(out, layer.fi_used);
    save_fi(out, layer.fi_pooled);
    io::write_u32(out, static_cast<std::uint32_t>(layer.forests.size()));
    for (const Forest& forest : layer.forests) save_forest(out, forest);
  }
}

inline CascadeModel load_model(std::istream& in, nlohmann::json* config_out = nullptr) {
  io::expect_magic(in, io::kModelMagic);
  const std::uint32_t version = io::read_u32(in);
  require(version == io::kFormatVersion, Errc::io_error,
          "unsupported model format version " + std::to_string(version));
  CascadeModel model;
  model.schema_hash = io::read_u64(in);
  const std::string config_text = io::read_string(in);
  if (config_out) {
    try {
      *config_out = nlohmann::json::parse(config_text);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error, "embedded config unreadable: " + std::string(e.what()));
    }
  }
  model.d = static_cast<int>(io::read_u32(in));
  model.C = static_cast<int>(io::read_u32(in));
  model.F = static_cast<int>(io::read_u32(in));
  model.max_layers = static_cast<int>(io::read_u32(in));
  model.mode = io::read_u8(in) == 0 ? OutputMode::checkpoint_ensemble : OutputMode::cv_selected;
  model.selected_layer = io::read_i32(in);
  model.class_names.resize(io::read_u32(in));
  for (auto& name : model.class_names) name = io::read_string(in);
  model.layers.resize(io::read_u32(in));
  for (Layer& layer : model.layers) {
    layer.input_width = static_cast<int>(io::read_u32(in));
    layer.policy.prob = io::read_f64(in);
    layer.policy.mag = io::read_f64(in);
    layer.fi_used = load_fi(in);
    layer.fi_pooled = load_fi(in);
    layer.forests.resize(io::read_u32(in));
    for (Forest& forest : layer.forests) forest = load_forest(in);
  }
  return model;
}

inline void save_model_file(const std::string& path, const CascadeModel& model,
                            const nlohmann::json& config) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot write model file '" + path + "'");
  save_model(out, model, config);
  require(out.good(), Errc::io_error, "failed writing model file '" + path + "'");
}

inline CascadeModel load_model_file(const std::string& path,
                                    nlohmann::json* config_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open model file '" + path + "'");
  return load_model(in, config_out);
}

// human-readable structural dump
inline nlohmann::json forest_to_json(const Forest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& tree : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) {
        std::vector<double> value(
            tree.leaf_values.begin() + node.value_offset,
            tree.leaf_values.begin() + node.value_offset + tree.n_outputs);
        nodes.push_back({{"leaf", true}, {"n", node.n_samples}, {"value", value}});
      } else {
        nodes.push_back({{"leaf", false},
                         {"feature", node.feature},
                         {"threshold", node.threshold},
                         {"left", node.left},
                         {"right", node.right},
                         {"decrease", node.impurity_decrease},
                         {"n", node.n_samples}});
      }
    }
    trees.push_back({{"nodes", nodes}});
  }
  return {{"kind", forest.kind == ForestKind::bagged ? "bagged" : "extra"},
          {"n_features", forest.n_features},
          {"n_outputs", forest.n_outputs},
          {"feature_subsample", forest.feature_subsample},
          {"seed", forest.seed},
          {"trees", trees}};
}

inline nlohmann::json model_to_json(const CascadeModel& model, bool include_trees = false) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : model.layers) {
    nlohmann::json lj;
    lj["input_width"] = layer.input_width;
    lj["policy"] = {{"prob", layer.policy.prob}, {"mag", layer.policy.mag}};
    lj["fi_used"] = layer.fi_used.values;
    lj["fi_pooled"] = layer.fi_pooled.values;
    if (include_trees) {
      nlohmann::json forests = nlohmann::json::array();
      for (const Forest& forest : layer.forests) forests.push_back(forest_to_json(forest));
      lj["forests"] = forests;
    } else {
      nlohmann::json forests = nlohmann::json::array();
      for (const Forest& forest : layer.forests) {
        std::size_t nodes = 0;
        for (const Tree& tree : forest.trees) nodes += tree.nodes.size();
        forests.push_back({{"kind", forest.kind == ForestKind::bagged ? "bagged" : "extra"},
                           {"trees", forest.trees.size()},
                           {"total_nodes", nodes}});
      }
      lj["forests"] = forests;
    }
    layers.push_back(lj);
  }
  return {{"d", model.d},
          {"classes", model.C},
          {"forests_per_layer", model.F},
          {"max_layers", model.max_layers},
          {"mode", model.mode == OutputMode::checkpoint_ensemble ? "checkpoint_ensemble"
                                                                 : "cv_selected"},
          {"selected_layer", model.selected_layer},
          {"schema_hash", model.schema_hash},
          {"class_names", model.class_names},
          {"layers", layers}};
}

}  // namespace forestmix
