#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forestmix/cascade.hpp"
#include "forestmix/config.hpp"
#include "forestmix/csv.hpp"
#include "forestmix/dataset.hpp"
#include "forestmix/metrics.hpp"
#include "forestmix/search.hpp"
#include "forestmix/serialize.hpp"

namespace forestmix {

namespace fs = std::filesystem;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Guards an output directory against concurrent writers.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    require(f != nullptr, Errc::io_error,
            "output directory '" + dir.string() + "' is locked (" + path_.string() +
                " exists); remove the stale lock if no other run is active");
    std::fputs("locked\n", f);
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

struct RunOptions {
  bool verify = false;
  bool dump_mix = false;
  bool allow_grid_mismatch = false;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot write '" + path.string() + "'");
  out << text;
  require(out.good(), Errc::io_error, "failed writing '" + path.string() + "'");
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  return j;
}

// test rows decoded back to their original cell values, so the split can
// be re-ingested with the same schema
inline void write_split_csv(const fs::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot write '" + path.string() + "'");
  const auto fidx = ds.schema.feature_indices();
  std::vector<std::string> header;
  for (int i : fidx) header.push_back(ds.schema.columns[static_cast<std::size_t>(i)].name);
  header.push_back(ds.schema.label_column);
  csv::write_row(out, header);
  for (std::size_t r = 0; r < ds.n(); ++r) {
    std::vector<std::string> row;
    for (std::size_t j = 0; j < fidx.size(); ++j) {
      const Column& col = ds.schema.columns[static_cast<std::size_t>(fidx[j])];
      if (col.kind == ColumnKind::categorical) {
        row.push_back(col.categories[static_cast<std::size_t>(ds.X(r, j))]);
      } else {
        row.push_back(format_double(ds.X(r, j)));
      }
    }
    row.push_back(ds.class_names[static_cast<std::size_t>(ds.labels[r])]);
    csv::write_row(out, row);
  }
}

inline void write_test_predictions(const fs::path& path, const Dataset& test,
                                   const Matrix& probs) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot write '" + path.string() + "'");
  std::vector<std::string> header{"row", "true", "predicted"};
  for (const auto& name : test.class_names) header.push_back("p_" + name);
  csv::write_row(out, header);
  for (std::size_t r = 0; r < test.n(); ++r) {
    std::vector<std::string> row;
    row.push_back(std::to_string(r));
    row.push_back(test.class_names[static_cast<std::size_t>(test.labels[r])]);
    row.push_back(test.class_names[static_cast<std::size_t>(argmax_row(probs.row(r)))]);
    for (double p : probs.row(r)) row.push_back(format_double(p));
    csv::write_row(out, row);
  }
}

// per-layer predicted class for each validation row; the validation curve
// is recomputable from this file alone
inline void write_val_predictions(const fs::path& path, const Dataset& val,
                                  const std::vector<Matrix>& per_layer) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot write '" + path.string() + "'");
  std::vector<std::string> header{"row", "true"};
  for (std::size_t l = 1; l <= per_layer.size(); ++l) {
    header.push_back("pred_layer_" + std::to_string(l));
  }
  csv::write_row(out, header);
  for (std::size_t r = 0; r < val.n(); ++r) {
    std::vector<std::string> row;
    row.push_back(std::to_string(r));
    row.push_back(val.class_names[static_cast<std::size_t>(val.labels[r])]);
    for (const Matrix& P : per_layer) {
      row.push_back(val.class_names[static_cast<std::size_t>(argmax_row(P.row(r)))]);
    }
    csv::write_row(out, row);
  }
}

struct SeedSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

inline SeedSplits make_splits(const Dataset& ds, const RunConfig& cfg, std::uint64_t seed) {
  SplitResult outer = stratified_split(ds, cfg.test_fraction, derive_seed(seed, "split-test"));
  SplitResult inner =
      stratified_split(outer.train, cfg.val_fraction, derive_seed(seed, "split-val"));
  return SeedSplits{std::move(inner.train), std::move(inner.test), std::move(outer.test)};
}

inline std::vector<Policy> constant_schedule(int layers, Policy policy) {
  return std::vector<Policy>(static_cast<std::size_t>(layers), policy);
}

inline std::vector<double> val_curve(const CascadeModel& model, const Dataset& val,
                                     std::vector<Matrix>* outs_keep = nullptr) {
  auto outs = per_layer_outputs(model, val.X, model.n_layers());
  std::vector<double> curve;
  curve.reserve(outs.size());
  for (const Matrix& P : outs) curve.push_back(accuracy(P, val.labels));
  if (outs_keep) *outs_keep = std::move(outs);
  return curve;
}

inline std::optional<MixSink> open_mix_sink(std::shared_ptr<std::ofstream>& stream,
                                            const fs::path& path, bool enabled) {
  if (!enabled) return std::nullopt;
  stream = std::make_shared<std::ofstream>(path, std::ios::binary);
  require(stream->good(), Errc::io_error, "cannot write '" + path.string() + "'");
  auto* raw = stream.get();
  return MixSink([raw](const MixRecord& rec) {
    nlohmann::json j{{"i", rec.i}, {"j", rec.j}, {"kept", rec.kept},
                     {"lambda", rec.lambda}, {"c", rec.c}};
    (*raw) << j.dump() << "\n";
  });
}

}  // namespace detail

inline void save_schedule_file(const fs::path& path, const PolicyGrid& grid,
                               std::span<const Policy> schedule, std::uint64_t seed,
                               double score) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    entries.push_back({{"layer", i + 1}, {"prob", schedule[i].prob}, {"mag", schedule[i].mag}});
  }
  const nlohmann::json j{{"grid", {{"P", grid.probs}, {"M", grid.mags}}},
                         {"entries", entries},
                         {"seed", seed},
                         {"score", score}};
  detail::write_json_file(path, j);
}

struct LoadedSchedule {
  PolicyGrid grid;
  std::vector<Policy> entries;
  std::uint64_t seed = 0;
  double score = 0.0;
};

inline LoadedSchedule load_schedule_file(const fs::path& path) {
  const nlohmann::json j = detail::read_json_file(path);
  LoadedSchedule s;
  require(j.contains("grid") && j.contains("entries"), Errc::parse_error,
          "schedule file missing grid/entries");
  s.grid.probs = j["grid"].at("P").get<std::vector<double>>();
  s.grid.mags = j["grid"].at("M").get<std::vector<double>>();
  s.grid.validate();
  for (const auto& e : j["entries"]) {
    Policy p{e.at("prob").get<double>(), e.at("mag").get<double>()};
    bool in_grid = false;
    for (double gp : s.grid.probs) {
      for (double gm : s.grid.mags) {
        if (gp == p.prob && gm == p.mag) in_grid = true;
      }
    }
    require(in_grid, Errc::schedule_mismatch,
            "schedule entry (prob=" + std::to_string(p.prob) + ", mag=" + std::to_string(p.mag) +
                ") is not a grid cell");
    s.entries.push_back(p);
  }
  require(!s.entries.empty(), Errc::schedule_mismatch, "schedule has no entries");
  s.seed = j.value("seed", 0ull);
  s.score = j.value("score", 0.0);
  return s;
}

// Re-derives every statistic in a report from the persisted prediction
// files; throws on the first mismatch.
inline void verify_outputs(const fs::path& out_dir, const nlohmann::json& report) {
  std::vector<double> headline;
  for (const auto& entry : report.at("per_seed")) {
    const std::uint64_t seed = entry.at("seed").get<std::uint64_t>();
    const fs::path pred_path =
        out_dir / ("test_predictions_seed" + std::to_string(seed) + ".csv");
    const auto rows = csv::read_file(pred_path.string());
    require(rows.size() >= 2, Errc::io_error, "prediction dump " + pred_path.string() + " empty");
    std::size_t hits = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].at(1) == rows[r].at(2)) ++hits;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(rows.size() - 1);
    const double reported = entry.at("test_accuracy").get<double>();
    require(acc == reported, Errc::io_error,
            "seed " + std::to_string(seed) + ": reported accuracy " +
                detail::format_double(reported) + " != recomputed " + detail::format_double(acc));
    headline.push_back(acc);

    if (entry.contains("val_curve")) {
      const fs::path val_path =
          out_dir / ("val_predictions_seed" + std::to_string(seed) + ".csv");
      const auto vrows = csv::read_file(val_path.string());
      const auto curve = entry.at("val_curve").get<std::vector<double>>();
      require(vrows.front().size() == curve.size() + 2, Errc::io_error,
              "val dump layer count mismatch for seed " + std::to_string(seed));
      for (std::size_t l = 0; l < curve.size(); ++l) {
        std::size_t vhits = 0;
        for (std::size_t r = 1; r < vrows.size(); ++r) {
          if (vrows[r].at(1) == vrows[r].at(l + 2)) ++vhits;
        }
        const double vacc = static_cast<double>(vhits) / static_cast<double>(vrows.size() - 1);
        require(vacc == curve[l], Errc::io_error,
                "seed " + std::to_string(seed) + ": val curve layer " + std::to_string(l + 1) +
                    " mismatch");
      }
    }
  }
  require(mean(headline) == report.at("mean_test_accuracy").get<double>(), Errc::io_error,
          "mean accuracy not recomputable");
  require(sample_std(headline) == report.at("std_test_accuracy").get<double>(), Errc::io_error,
          "std accuracy not recomputable");
}

// train: vanilla or fixed-policy cascade per seed, both checkpoint-ensemble
// and cv-selected-layer test accuracy reported
inline nlohmann::json run_train(const RunConfig& cfg, const RunOptions& opts = {}) {
  require(cfg.mode == RunMode::vanilla || cfg.mode == RunMode::fixed_policy, Errc::config_error,
          "train expects mode vanilla or fixed-policy");
  const Dataset ds = load_csv(cfg.csv_path, load_schema(cfg.schema_path), cfg.missing);
  const fs::path out_dir(cfg.out_dir);
  DirLock lock(out_dir);

  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<double> ce_accs;
  std::vector<double> cv_accs;
  for (std::uint64_t seed : cfg.seeds) {
    const auto splits = detail::make_splits(ds, cfg, seed);
    const Policy policy = cfg.mode == RunMode::vanilla ? Policy{0.0, 1.0} : cfg.fixed_policy;
    const auto schedule = detail::constant_schedule(cfg.max_layers, policy);

    std::shared_ptr<std::ofstream> mix_stream;
    const auto sink = detail::open_mix_sink(
        mix_stream, out_dir / ("mix_seed" + std::to_string(seed) + ".jsonl"), opts.dump_mix);

    Stopwatch train_watch;
    CascadeModel model = apply_schedule_with_sink(schedule, splits.train, cfg.cascade_params(),
                                                  derive_seed(seed, "train"),
                                                  sink ? &*sink : nullptr);
    const double train_seconds = train_watch.seconds();

    std::vector<Matrix> val_outs;
    const auto curve = detail::val_curve(model, splits.val, &val_outs);
    const int cv_layer = select_output_layer_cv(model, splits.val.X, splits.val.labels);

    model.schema_hash = ds.schema.hash();
    model.class_names = ds.class_names;
    model.mode = cfg.output_mode;
    model.selected_layer = cfg.output_mode == OutputMode::cv_selected ? cv_layer : 0;

    Stopwatch infer_watch;
    const Matrix test_ce = predict_checkpoint_ensemble(model, splits.test.X);
    const double inference_seconds = infer_watch.seconds();
    const Matrix test_cv = predict_at_layer(model, splits.test.X, cv_layer);
    const double acc_ce = accuracy(test_ce, splits.test.labels);
    const double acc_cv = accuracy(test_cv, splits.test.labels);
    ce_accs.push_back(acc_ce);
    cv_accs.push_back(acc_cv);

    const std::string tag = std::to_string(seed);
    save_model_file((out_dir / ("model_seed" + tag + ".bin")).string(), model,
                    config_to_json(cfg));
    detail::write_split_csv(out_dir / ("test_split_seed" + tag + ".csv"), splits.test);
    detail::write_test_predictions(out_dir / ("test_predictions_seed" + tag + ".csv"),
                                   splits.test, test_ce);
    detail::write_val_predictions(out_dir / ("val_predictions_seed" + tag + ".csv"), splits.val,
                                  val_outs);

    per_seed.push_back({{"seed", seed},
                        {"test_accuracy", acc_ce},
                        {"test_accuracy_cv_selected", acc_cv},
                        {"cv_selected_layer", cv_layer},
                        {"val_curve", curve},
                        {"layers", model.n_layers()},
                        {"timings",
                         {{"train_seconds", train_seconds},
                          {"inference_seconds", inference_seconds}}},
                        {"schedule_prob", policy.prob},
                        {"schedule_mag", policy.mag}});
  }

  nlohmann::json report{{"mode", run_mode_name(cfg.mode)},
                        {"dataset", cfg.csv_path},
                        {"per_seed", per_seed},
                        {"mean_test_accuracy", mean(ce_accs)},
                        {"std_test_accuracy", sample_std(ce_accs)},
                        {"mean_test_accuracy_cv_selected", mean(cv_accs)},
                        {"std_test_accuracy_cv_selected", sample_std(cv_accs)},
                        {"config", config_to_json(cfg)}};
  detail::write_json_file(out_dir / "report.json", report);
  if (opts.verify) verify_outputs(out_dir, report);
  return report;
}

// search: schedule learning per seed, persisting the winning model, its
// schedule, and a vanilla control for the cost ratio
inline nlohmann::json run_search(const RunConfig& cfg, const RunOptions& opts = {}) {
  require(cfg.mode == RunMode::search, Errc::config_error, "search expects mode=search");
  const Dataset ds = load_csv(cfg.csv_path, load_schema(cfg.schema_path), cfg.missing);
  const fs::path out_dir(cfg.out_dir);
  DirLock lock(out_dir);

  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<double> accs;
  for (std::uint64_t seed : cfg.seeds) {
    const auto splits = detail::make_splits(ds, cfg, seed);

    std::shared_ptr<std::ofstream> mix_stream;
    const auto sink = detail::open_mix_sink(
        mix_stream, out_dir / ("mix_seed" + std::to_string(seed) + ".jsonl"), opts.dump_mix);
    SearchParams sparams = cfg.search_params();
    sparams.mix_sink = sink ? &*sink : nullptr;

    Stopwatch search_watch;
    const SearchResult result = run_schedule_search(splits.train, splits.val, sparams, seed);
    const double search_seconds = search_watch.seconds();

    Stopwatch vanilla_watch;
    CascadeModel vanilla = apply_schedule(
        detail::constant_schedule(cfg.max_layers, Policy{0.0, 1.0}), splits.train,
        cfg.cascade_params(), derive_seed(seed, "train"));
    const double vanilla_seconds = vanilla_watch.seconds();
    const double vanilla_acc =
        accuracy(predict_checkpoint_ensemble(vanilla, splits.test.X), splits.test.labels);

    CascadeModel model = result.best.model;
    model.schema_hash = ds.schema.hash();
    model.class_names = ds.class_names;
    model.mode = cfg.output_mode;
    if (cfg.output_mode == OutputMode::cv_selected) {
      model.selected_layer = select_output_layer_cv(model, splits.val.X, splits.val.labels);
    }

    std::vector<Policy> schedule;
    for (const GridIndex& g : result.best.schedule) schedule.push_back(cfg.grid.at(g.pi, g.mi));

    std::vector<Matrix> val_outs;
    const auto curve = detail::val_curve(model, splits.val, &val_outs);

    Stopwatch infer_watch;
    const Matrix test_ce = predict_checkpoint_ensemble(model, splits.test.X);
    const double inference_seconds = infer_watch.seconds();
    const double acc = accuracy(test_ce, splits.test.labels);
    accs.push_back(acc);

    const std::string tag = std::to_string(seed);
    save_schedule_file(out_dir / ("schedule_seed" + tag + ".json"), cfg.grid, schedule, seed,
                       result.best.score);
    save_model_file((out_dir / ("model_seed" + tag + ".bin")).string(), model,
                    config_to_json(cfg));
    detail::write_split_csv(out_dir / ("test_split_seed" + tag + ".csv"), splits.test);
    detail::write_test_predictions(out_dir / ("test_predictions_seed" + tag + ".csv"),
                                   splits.test, test_ce);
    detail::write_val_predictions(out_dir / ("val_predictions_seed" + tag + ".csv"), splits.val,
                                  val_outs);

    nlohmann::json schedule_json = nlohmann::json::array();
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      schedule_json.push_back(
          {{"layer", i + 1}, {"prob", schedule[i].prob}, {"mag", schedule[i].mag}});
    }
    per_seed.push_back(
        {{"seed", seed},
         {"test_accuracy", acc},
         {"vanilla_test_accuracy", vanilla_acc},
         {"best_val_score", result.best.score},
         {"val_curve", curve},
         {"schedule", schedule_json},
         {"counters",
          {{"full_layer_trainings", result.counters.full_layer_trainings},
           {"probe_trainings", result.counters.probe_trainings}}},
         {"timings",
          {{"search_seconds", search_seconds},
           {"vanilla_train_seconds", vanilla_seconds},
           {"search_to_train_ratio", search_seconds / vanilla_seconds},
           {"inference_seconds", inference_seconds}}}});
  }

  nlohmann::json report{{"mode", run_mode_name(cfg.mode)},
                        {"dataset", cfg.csv_path},
                        {"per_seed", per_seed},
                        {"mean_test_accuracy", mean(accs)},
                        {"std_test_accuracy", sample_std(accs)},
                        {"config", config_to_json(cfg)}};
  detail::write_json_file(out_dir / "report.json", report);
  if (opts.verify) verify_outputs(out_dir, report);
  return report;
}

// transfer: apply a learned schedule to freshly configured cascades and
// contrast against a no-augmentation control under the same seeds
inline nlohmann::json run_transfer(const RunConfig& cfg, const fs::path& schedule_path,
                                   const RunOptions& opts = {}) {
  const LoadedSchedule sched = load_schedule_file(schedule_path);
  if (!opts.allow_grid_mismatch) {
    require(sched.grid.probs == cfg.grid.probs && sched.grid.mags == cfg.grid.mags,
            Errc::schedule_mismatch,
            "schedule grid differs from config grid (pass --allow-grid-mismatch to override)");
  }
  const Dataset ds = load_csv(cfg.csv_path, load_schema(cfg.schema_path), cfg.missing);
  const fs::path out_dir(cfg.out_dir);
  DirLock lock(out_dir);

  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<double> accs;
  std::vector<double> deltas;
  for (std::uint64_t seed : cfg.seeds) {
    const auto splits = detail::make_splits(ds, cfg, seed);

    std::shared_ptr<std::ofstream> mix_stream;
    const auto sink = detail::open_mix_sink(
        mix_stream, out_dir / ("mix_seed" + std::to_string(seed) + ".jsonl"), opts.dump_mix);

    Stopwatch train_watch;
    CascadeModel model =
        apply_schedule_with_sink(sched.entries, splits.train, cfg.cascade_params(),
                                 derive_seed(seed, "transfer"), sink ? &*sink : nullptr);
    const double train_seconds = train_watch.seconds();

    const auto control_schedule =
        detail::constant_schedule(static_cast<int>(sched.entries.size()), Policy{0.0, 1.0});
    CascadeModel control = apply_schedule(control_schedule, splits.train, cfg.cascade_params(),
                                          derive_seed(seed, "transfer"));

    model.schema_hash = ds.schema.hash();
    model.class_names = ds.class_names;
    model.mode = cfg.output_mode;
    if (cfg.output_mode == OutputMode::cv_selected) {
      model.selected_layer = select_output_layer_cv(model, splits.val.X, splits.val.labels);
    }

    std::vector<Matrix> val_outs;
    const auto curve = detail::val_curve(model, splits.val, &val_outs);

    Stopwatch infer_watch;
    const Matrix test_ce = predict_checkpoint_ensemble(model, splits.test.X);
    const double inference_seconds = infer_watch.seconds();
    const double acc = accuracy(test_ce, splits.test.labels);
    const double control_acc =
        accuracy(predict_checkpoint_ensemble(control, splits.test.X), splits.test.labels);
    accs.push_back(acc);
    deltas.push_back(acc - control_acc);

    const std::string tag = std::to_string(seed);
    save_model_file((out_dir / ("model_seed" + tag + ".bin")).string(), model,
                    config_to_json(cfg));
    detail::write_split_csv(out_dir / ("test_split_seed" + tag + ".csv"), splits.test);
    detail::write_test_predictions(out_dir / ("test_predictions_seed" + tag + ".csv"),
                                   splits.test, test_ce);
    detail::write_val_predictions(out_dir / ("val_predictions_seed" + tag + ".csv"), splits.val,
                                  val_outs);

    per_seed.push_back({{"seed", seed},
                        {"test_accuracy", acc},
                        {"control_test_accuracy", control_acc},
                        {"delta_vs_control", acc - control_acc},
                        {"val_curve", curve},
                        {"timings",
                         {{"train_seconds", train_seconds},
                          {"inference_seconds", inference_seconds}}}});
  }

  nlohmann::json report{{"mode", "transfer"},
                        {"dataset", cfg.csv_path},
                        {"schedule_file", schedule_path.string()},
                        {"per_seed", per_seed},
                        {"mean_test_accuracy", mean(accs)},
                        {"std_test_accuracy", sample_std(accs)},
                        {"mean_delta_vs_control", mean(deltas)},
                        {"config", config_to_json(cfg)}};
  detail::write_json_file(out_dir / "report.json", report);
  if (opts.verify) verify_outputs(out_dir, report);
  return report;
}

// eval: score a saved model on a dataset file; refuses on schema mismatch
inline nlohmann::json run_eval(const fs::path& model_path, const std::string& csv_path,
                               const std::string& schema_path, const fs::path& out_dir,
                               MissingPolicy missing = MissingPolicy::impute,
                               const RunOptions& opts = {}) {
  nlohmann::json train_config;
  const CascadeModel model = load_model_file(model_path.string(), &train_config);
  const Schema schema = load_schema(schema_path);
  require(schema.hash() == model.schema_hash, Errc::schema_mismatch,
          "dataset schema does not match the schema the model was trained on");
  const Dataset ds = load_csv(csv_path, schema, missing);
  DirLock lock(out_dir);

  Stopwatch infer_watch;
  const auto outs = per_layer_outputs(model, ds.X, model.n_layers());
  Matrix headline(ds.n(), ds.Y.cols());
  if (model.mode == OutputMode::cv_selected && model.selected_layer >= 1) {
    headline = outs[static_cast<std::size_t>(model.selected_layer - 1)];
  } else {
    for (const Matrix& P : outs) {
      for (std::size_t r = 0; r < headline.rows(); ++r) {
        const auto src = P.row(r);
        auto dst = headline.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
    }
    const double inv = 1.0 / static_cast<double>(outs.size());
    for (std::size_t r = 0; r < headline.rows(); ++r) {
      for (double& v : headline.row(r)) v *= inv;
    }
  }
  const double inference_seconds = infer_watch.seconds();

  std::vector<double> layer_curve;
  for (const Matrix& P : outs) layer_curve.push_back(accuracy(P, ds.labels));
  const double acc = accuracy(headline, ds.labels);
  const auto cm = confusion_matrix(headline, ds.labels, static_cast<int>(ds.num_classes()));

  detail::write_test_predictions(out_dir / "eval_predictions.csv", ds, headline);

  nlohmann::json report{{"mode", "eval"},
                        {"dataset", csv_path},
                        {"model", model_path.string()},
                        {"prediction_mode",
                         model.mode == OutputMode::cv_selected ? "cv_selected"
                                                               : "checkpoint_ensemble"},
                        {"selected_layer", model.selected_layer},
                        {"test_accuracy", acc},
                        {"per_layer_accuracy", layer_curve},
                        {"confusion_matrix", cm},
                        {"class_names", ds.class_names},
                        {"timings", {{"inference_seconds", inference_seconds}}}};
  detail::write_json_file(out_dir / "eval_report.json", report);

  if (opts.verify) {
    const auto rows = csv::read_file((out_dir / "eval_predictions.csv").string());
    std::size_t hits = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].at(1) == rows[r].at(2)) ++hits;
    }
    const double recomputed = static_cast<double>(hits) / static_cast<double>(rows.size() - 1);
    require(recomputed == acc, Errc::io_error, "eval accuracy not recomputable from dump");
    const auto counts = ds.class_counts();
    for (std::size_t c = 0; c < cm.size(); ++c) {
      std::int64_t row_sum = 0;
      for (std::int64_t v : cm[c]) row_sum += v;
      require(row_sum == counts[c], Errc::io_error, "confusion row sum mismatch");
    }
  }
  return report;
}

// ingest-check: load, validate, and summarize a dataset without training
inline nlohmann::json run_ingest_check(const std::string& csv_path,
                                       const std::string& schema_path,
                                       MissingPolicy missing = MissingPolicy::impute) {
  const Schema schema = load_schema(schema_path);
  const Dataset ds = load_csv(csv_path, schema, missing);

  // encoding round-trip over every categorical feature cell
  const auto fidx = schema.feature_indices();
  for (std::size_t j = 0; j < fidx.size(); ++j) {
    const Column& col = schema.columns[static_cast<std::size_t>(fidx[j])];
    if (col.kind != ColumnKind::categorical) continue;
    for (std::size_t r = 0; r < ds.n(); ++r) {
      const std::string label = ds.decode_feature(static_cast<int>(j), ds.X(r, j));
      require(Schema::category_code(col, label) == static_cast<int>(ds.X(r, j)),
              Errc::unknown_category, "encode/decode round-trip failed for '" + col.name + "'");
    }
  }

  nlohmann::json class_counts = nlohmann::json::object();
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) class_counts[ds.class_names[c]] = counts[c];
  return nlohmann::json{{"csv", csv_path},
                        {"rows", ds.n()},
                        {"features", ds.d()},
                        {"classes", ds.num_classes()},
                        {"class_counts", class_counts},
                        {"schema_hash", ds.schema.hash()},
                        {"encoding_round_trip", "ok"}};
}

// export: human-readable structural dump of a saved model
inline nlohmann::json run_export(const fs::path& model_path, bool include_trees) {
  nlohmann::json config;
  const CascadeModel model = load_model_file(model_path.string(), &config);
  nlohmann::json j = model_to_json(model, include_trees);
  j["trained_config"] = config;
  return j;
}

}  // namespace forestmix
