#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forestmix/cascade.hpp"
#include "forestmix/dataset.hpp"
#include "forestmix/search.hpp"

namespace forestmix {

enum class RunMode { vanilla, fixed_policy, search, transfer };

inline const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::vanilla:      return "vanilla";
    case RunMode::fixed_policy: return "fixed-policy";
    case RunMode::search:       return "search";
    case RunMode::transfer:     return "transfer";
  }
  return "vanilla";
}

inline RunMode run_mode_from(const std::string& s) {
  if (s == "vanilla") return RunMode::vanilla;
  if (s == "fixed-policy") return RunMode::fixed_policy;
  if (s == "search") return RunMode::search;
  if (s == "transfer") return RunMode::transfer;
  fail(Errc::config_error, "unknown mode '" + s + "'");
}

// One config file drives every subcommand; flags override single fields.
struct RunConfig {
  RunMode mode = RunMode::vanilla;

  std::string csv_path;
  std::string schema_path;
  MissingPolicy missing = MissingPolicy::impute;

  double test_fraction = 0.2;
  double val_fraction = 0.2;

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  int trees_per_forest = 100;
  std::vector<ForestKind> kinds{ForestKind::bagged, ForestKind::extra};
  int max_depth = 0;
  int min_samples_leaf = 2;
  int feature_subsample = 0;

  int max_layers = 15;
  int oof_folds = 3;

  PolicyGrid grid = PolicyGrid::default_grid();
  int population = 8;
  double probe_tree_fraction = 0.25;
  ExploreSeedMode explore_seed = ExploreSeedMode::top_half;

  Policy fixed_policy{0.3, 1.0};

  OutputMode output_mode = OutputMode::checkpoint_ensemble;
  std::string out_dir = "runs/out";

  CascadeParams cascade_params() const {
    CascadeParams p;
    p.group.forest.n_trees = trees_per_forest;
    p.group.forest.tree.max_depth = max_depth;
    p.group.forest.tree.min_samples_leaf = min_samples_leaf;
    p.group.forest.tree.feature_subsample = feature_subsample;
    p.group.kinds = kinds;
    p.max_layers = max_layers;
    p.oof_folds = oof_folds;
    return p;
  }

  SearchParams search_params() const {
    SearchParams p;
    p.grid = grid;
    p.population = population;
    p.cascade = cascade_params();
    p.probe_tree_fraction = probe_tree_fraction;
    p.explore_seed = explore_seed;
    return p;
  }

  void validate() const {
    require(!seeds.empty(), Errc::config_error, "seed list must not be empty");
    require(test_fraction > 0.0 && test_fraction < 1.0, Errc::config_error,
            "split.test_fraction must lie in (0,1)");
    require(val_fraction > 0.0 && val_fraction < 1.0, Errc::config_error,
            "split.val_fraction must lie in (0,1)");
    require(trees_per_forest >= 1, Errc::config_error, "forest.trees must be >= 1");
    require(!kinds.empty(), Errc::config_error, "forest.kinds must not be empty");
    require(max_layers >= 1, Errc::config_error, "cascade.max_layers must be >= 1");
    require(oof_folds >= 2, Errc::config_error, "cascade.oof_folds must be >= 2");
    require(population >= 2 && population % 2 == 0, Errc::config_error,
            "population must be even and >= 2");
    require(probe_tree_fraction > 0.0 && probe_tree_fraction <= 1.0, Errc::config_error,
            "probe_tree_fraction must lie in (0,1]");
    grid.validate();
    if (mode == RunMode::fixed_policy) {
      require(fixed_policy.prob >= 0.0 && fixed_policy.prob <= 1.0 && fixed_policy.mag > 0.0,
              Errc::config_error, "fixed policy out of range");
    }
  }
};

inline ForestKind forest_kind_from(const std::string& s) {
  if (s == "bagged") return ForestKind::bagged;
  if (s == "extra") return ForestKind::extra;
  fail(Errc::config_error, "unknown forest kind '" + s + "'");
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("mode")) c.mode = run_mode_from(j["mode"].get<std::string>());
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    if (d.contains("csv")) c.csv_path = d["csv"].get<std::string>();
    if (d.contains("schema")) c.schema_path = d["schema"].get<std::string>();
    if (d.contains("missing")) {
      const auto m = d["missing"].get<std::string>();
      if (m == "impute") c.missing = MissingPolicy::impute;
      else if (m == "reject") c.missing = MissingPolicy::reject;
      else fail(Errc::config_error, "unknown missing policy '" + m + "'");
    }
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (s.contains("test_fraction")) c.test_fraction = s["test_fraction"].get<double>();
    if (s.contains("val_fraction")) c.val_fraction = s["val_fraction"].get<double>();
  }
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("forest")) {
    const auto& f = j["forest"];
    if (f.contains("trees")) c.trees_per_forest = f["trees"].get<int>();
    if (f.contains("kinds")) {
      c.kinds.clear();
      for (const auto& k : f["kinds"]) c.kinds.push_back(forest_kind_from(k.get<std::string>()));
    }
    if (f.contains("max_depth")) c.max_depth = f["max_depth"].get<int>();
    if (f.contains("min_samples_leaf")) c.min_samples_leaf = f["min_samples_leaf"].get<int>();
    if (f.contains("feature_subsample")) c.feature_subsample = f["feature_subsample"].get<int>();
  }
  if (j.contains("cascade")) {
    const auto& k = j["cascade"];
    if (k.contains("max_layers")) c.max_layers = k["max_layers"].get<int>();
    if (k.contains("oof_folds")) c.oof_folds = k["oof_folds"].get<int>();
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (g.contains("P")) c.grid.probs = g["P"].get<std::vector<double>>();
    if (g.contains("M")) c.grid.mags = g["M"].get<std::vector<double>>();
  }
  if (j.contains("population")) c.population = j["population"].get<int>();
  if (j.contains("probe_tree_fraction")) {
    c.probe_tree_fraction = j["probe_tree_fraction"].get<double>();
  }
  if (j.contains("explore_seed")) {
    const auto m = j["explore_seed"].get<std::string>();
    if (m == "top-half") c.explore_seed = ExploreSeedMode::top_half;
    else if (m == "best-only") c.explore_seed = ExploreSeedMode::best_only;
    else fail(Errc::config_error, "unknown explore_seed '" + m + "'");
  }
  if (j.contains("policy")) {
    c.fixed_policy.prob = j["policy"].value("prob", c.fixed_policy.prob);
    c.fixed_policy.mag = j["policy"].value("mag", c.fixed_policy.mag);
  }
  if (j.contains("output_mode")) {
    const auto m = j["output_mode"].get<std::string>();
    if (m == "ce") c.output_mode = OutputMode::checkpoint_ensemble;
    else if (m == "cv") c.output_mode = OutputMode::cv_selected;
    else fail(Errc::config_error, "unknown output_mode '" + m + "'");
  }
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json kinds = nlohmann::json::array();
  for (ForestKind k : c.kinds) kinds.push_back(k == ForestKind::bagged ? "bagged" : "extra");
  return {
      {"mode", run_mode_name(c.mode)},
      {"dataset",
       {{"csv", c.csv_path},
        {"schema", c.schema_path},
        {"missing", c.missing == MissingPolicy::impute ? "impute" : "reject"}}},
      {"split", {{"test_fraction", c.test_fraction}, {"val_fraction", c.val_fraction}}},
      {"seeds", c.seeds},
      {"forest",
       {{"trees", c.trees_per_forest},
        {"kinds", kinds},
        {"max_depth", c.max_depth},
        {"min_samples_leaf", c.min_samples_leaf},
        {"feature_subsample", c.feature_subsample}}},
      {"cascade", {{"max_layers", c.max_layers}, {"oof_folds", c.oof_folds}}},
      {"grid", {{"P", c.grid.probs}, {"M", c.grid.mags}}},
      {"population", c.population},
      {"probe_tree_fraction", c.probe_tree_fraction},
      {"explore_seed", c.explore_seed == ExploreSeedMode::top_half ? "top-half" : "best-only"},
      {"policy", {{"prob", c.fixed_policy.prob}, {"mag", c.fixed_policy.mag}}},
      {"output_mode", c.output_mode == OutputMode::checkpoint_ensemble ? "ce" : "cv"},
      {"out_dir", c.out_dir},
  };
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, "config json: " + std::string(e.what()));
  }
  return config_from_json(j);
}

}  // namespace forestmix
