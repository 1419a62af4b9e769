#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "forestmix/runner.hpp"
#include "support/synth.hpp"
#include "support/tmpdir.hpp"

using namespace forestmix;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// small but non-trivial dataset on disk plus a matching config
RunConfig fixture_config(const testutil::TempDir& tmp, RunMode mode, int layers = 2,
                         int trees = 4, std::vector<std::uint64_t> seeds = {1, 2}) {
  const Dataset ds = synth::make_small_noisy(120, 6, 3, 555);
  synth::write_dataset_files(ds, tmp.file("data.csv"), tmp.file("schema.json"));
  RunConfig cfg;
  cfg.mode = mode;
  cfg.csv_path = tmp.file("data.csv");
  cfg.schema_path = tmp.file("schema.json");
  cfg.seeds = std::move(seeds);
  cfg.trees_per_forest = trees;
  cfg.max_layers = layers;
  cfg.oof_folds = 3;
  cfg.min_samples_leaf = 2;
  cfg.grid.probs = {0.1, 0.5, 0.9};
  cfg.grid.mags = {0.5, 1.0, 2.0};
  cfg.population = 4;
  cfg.probe_tree_fraction = 0.5;
  cfg.out_dir = tmp.file("out");
  return cfg;
}

}  // namespace

TEST_CASE("config json round-trips through parse and dump") {
  testutil::TempDir tmp("cfg");
  RunConfig cfg = fixture_config(tmp, RunMode::fixed_policy);
  cfg.fixed_policy = Policy{0.7, 2.0};
  const nlohmann::json j = config_to_json(cfg);
  const RunConfig back = config_from_json(j);
  REQUIRE(config_to_json(back) == j);
  REQUIRE(back.grid.probs == cfg.grid.probs);
  REQUIRE(back.fixed_policy.prob == 0.7);
}

TEST_CASE("config validation rejects odd populations and bad fractions") {
  testutil::TempDir tmp("cfgbad");
  RunConfig cfg = fixture_config(tmp, RunMode::vanilla);
  cfg.population = 5;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
  cfg.population = 4;
  cfg.test_fraction = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("train reports both ensemble and cv-selected accuracy with verify") {
  testutil::TempDir tmp("train");
  const RunConfig cfg = fixture_config(tmp, RunMode::vanilla);
  RunOptions opts;
  opts.verify = true;
  const nlohmann::json report = run_train(cfg, opts);
  REQUIRE(report["per_seed"].size() == 2);
  for (const auto& entry : report["per_seed"]) {
    REQUIRE(entry.contains("test_accuracy"));
    REQUIRE(entry.contains("test_accuracy_cv_selected"));
    REQUIRE(entry["val_curve"].size() == 2);
    REQUIRE(entry["cv_selected_layer"].get<int>() >= 1);
  }
  // sample statistics recompute from the per-seed values
  std::vector<double> accs;
  for (const auto& entry : report["per_seed"]) accs.push_back(entry["test_accuracy"]);
  REQUIRE(report["mean_test_accuracy"].get<double>() == mean(accs));
  REQUIRE(report["std_test_accuracy"].get<double>() == sample_std(accs));
  // artifacts exist
  REQUIRE(std::filesystem::exists(tmp.file("out/model_seed1.bin")));
  REQUIRE(std::filesystem::exists(tmp.file("out/test_predictions_seed1.csv")));
  REQUIRE(std::filesystem::exists(tmp.file("out/report.json")));
}

TEST_CASE("train report json round-trips through its own file") {
  testutil::TempDir tmp("trainrt");
  RunConfig cfg = fixture_config(tmp, RunMode::fixed_policy, 2, 3, {7});
  cfg.fixed_policy = Policy{0.5, 1.0};
  const nlohmann::json report = run_train(cfg);
  const nlohmann::json from_disk = detail::read_json_file(tmp.file("out/report.json"));
  REQUIRE(from_disk == report);
}

TEST_CASE("locked output directories are refused") {
  testutil::TempDir tmp("lock");
  const RunConfig cfg = fixture_config(tmp, RunMode::vanilla, 1, 2, {1});
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream(cfg.out_dir + "/.lock") << "held\n";
  REQUIRE_THROWS_MATCHES(run_train(cfg), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::io_error;
                         }));
}

TEST_CASE("search writes schedule, model, and budget counters; reruns are byte-identical") {
  testutil::TempDir tmp("search");
  RunConfig cfg = fixture_config(tmp, RunMode::search, 2, 4, {9});
  const nlohmann::json report = run_search(cfg);
  const auto& entry = report["per_seed"][0];
  REQUIRE(entry["counters"]["full_layer_trainings"] == 4 * 2);
  REQUIRE(entry["counters"]["probe_trainings"] == 9);
  REQUIRE(entry["schedule"].size() == 2);
  REQUIRE(entry["timings"]["search_to_train_ratio"].get<double>() > 0.0);
  REQUIRE(entry.contains("vanilla_test_accuracy"));

  const std::string schedule_a = slurp(tmp.file("out/schedule_seed9.json"));
  const std::string preds_a = slurp(tmp.file("out/test_predictions_seed9.csv"));

  cfg.out_dir = tmp.file("out2");
  const nlohmann::json report2 = run_search(cfg);
  REQUIRE(slurp(tmp.file("out2/schedule_seed9.json")) == schedule_a);
  REQUIRE(slurp(tmp.file("out2/test_predictions_seed9.csv")) == preds_a);
  REQUIRE(report2["per_seed"][0]["test_accuracy"] == entry["test_accuracy"]);
}

TEST_CASE("schedule files load back and validate against their grid") {
  testutil::TempDir tmp("sched");
  RunConfig cfg = fixture_config(tmp, RunMode::search, 2, 3, {4});
  run_search(cfg);
  const LoadedSchedule sched = load_schedule_file(tmp.file("out/schedule_seed4.json"));
  REQUIRE(sched.entries.size() == 2);
  REQUIRE(sched.grid.probs == cfg.grid.probs);
  REQUIRE(sched.seed == 4);
  for (const Policy& p : sched.entries) {
    bool found = false;
    for (double gp : cfg.grid.probs) {
      for (double gm : cfg.grid.mags) {
        if (gp == p.prob && gm == p.mag) found = true;
      }
    }
    REQUIRE(found);
  }
}

TEST_CASE("transfer contrasts against a control and honors grid compatibility") {
  testutil::TempDir tmp("transfer");
  RunConfig cfg = fixture_config(tmp, RunMode::search, 2, 3, {5});
  run_search(cfg);
  const std::string schedule_path = tmp.file("out/schedule_seed5.json");

  RunConfig tcfg = cfg;
  tcfg.mode = RunMode::transfer;
  tcfg.trees_per_forest = cfg.trees_per_forest * 4;
  tcfg.out_dir = tmp.file("tout");
  tcfg.seeds = {5, 6};
  const nlohmann::json report = run_transfer(tcfg, schedule_path);
  REQUIRE(report["per_seed"].size() == 2);
  for (const auto& entry : report["per_seed"]) {
    REQUIRE(entry.contains("control_test_accuracy"));
    REQUIRE(entry.contains("delta_vs_control"));
    const double delta = entry["delta_vs_control"].get<double>();
    const double a = entry["test_accuracy"].get<double>();
    const double c = entry["control_test_accuracy"].get<double>();
    REQUIRE(delta == a - c);
  }

  // grid mismatch is refused without the override
  RunConfig mismatched = tcfg;
  mismatched.grid.mags = {0.4, 1.1, 2.2};
  mismatched.out_dir = tmp.file("tout2");
  REQUIRE_THROWS_MATCHES(run_transfer(mismatched, schedule_path), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::schedule_mismatch;
                         }));
  RunOptions allow;
  allow.allow_grid_mismatch = true;
  const nlohmann::json forced = run_transfer(mismatched, schedule_path, allow);
  REQUIRE(forced["per_seed"].size() == 2);
}

TEST_CASE("a zero-prob schedule transfers with zero delta against the control") {
  testutil::TempDir tmp("zsched");
  RunConfig cfg = fixture_config(tmp, RunMode::transfer, 2, 3, {11});
  // hand-written all-zero schedule is not representable on the grid, so
  // write a grid that includes prob 0
  cfg.grid.probs = {0.0, 0.5};
  cfg.grid.mags = {1.0, 2.0};
  const std::vector<Policy> zeros(2, Policy{0.0, 1.0});
  save_schedule_file(tmp.file("zero.json"), cfg.grid, zeros, 0, 0.0);
  const nlohmann::json report = run_transfer(cfg, tmp.file("zero.json"));
  for (const auto& entry : report["per_seed"]) {
    REQUIRE(entry["delta_vs_control"].get<double>() == 0.0);
  }
}

TEST_CASE("eval matches the training report and checks schema hashes") {
  testutil::TempDir tmp("eval");
  RunConfig cfg = fixture_config(tmp, RunMode::vanilla, 2, 4, {3});
  const nlohmann::json train_report = run_train(cfg);
  const double recorded = train_report["per_seed"][0]["test_accuracy"].get<double>();

  RunOptions opts;
  opts.verify = true;
  const nlohmann::json eval_report =
      run_eval(tmp.file("out/model_seed3.bin"), tmp.file("out/test_split_seed3.csv"),
               tmp.file("schema.json"), tmp.file("evalout"), MissingPolicy::impute, opts);
  REQUIRE(eval_report["test_accuracy"].get<double>() == recorded);
  REQUIRE(eval_report["per_layer_accuracy"].size() == 2);

  // confusion matrix row sums equal the class counts of the test split
  const Dataset test_ds =
      load_csv(tmp.file("out/test_split_seed3.csv"), load_schema(tmp.file("schema.json")));
  const auto counts = test_ds.class_counts();
  const auto cm = eval_report["confusion_matrix"];
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::int64_t row_sum = 0;
    for (const auto& v : cm[c]) row_sum += v.get<std::int64_t>();
    REQUIRE(row_sum == counts[c]);
  }

  // wrong schema refuses to predict
  Dataset other = synth::make_small_noisy(60, 7, 3, 777);
  synth::write_dataset_files(other, tmp.file("other.csv"), tmp.file("other_schema.json"));
  REQUIRE_THROWS_MATCHES(
      run_eval(tmp.file("out/model_seed3.bin"), tmp.file("other.csv"),
               tmp.file("other_schema.json"), tmp.file("evalout2")),
      Error, Catch::Matchers::Predicate<Error>(
                 [](const Error& e) { return e.code() == Errc::schema_mismatch; }));
}

TEST_CASE("ingest-check summarizes a dataset and round-trips encodings") {
  testutil::TempDir tmp("ingest");
  const Dataset ds = synth::make_arrhythmia_like(12);
  synth::write_dataset_files(ds, tmp.file("a.csv"), tmp.file("a_schema.json"));
  const nlohmann::json summary = run_ingest_check(tmp.file("a.csv"), tmp.file("a_schema.json"));
  REQUIRE(summary["rows"] == 452);
  REQUIRE(summary["features"] == 279);
  REQUIRE(summary["classes"] == 16);
  REQUIRE(summary["encoding_round_trip"] == "ok");
}

TEST_CASE("export dumps a saved model including its embedded config") {
  testutil::TempDir tmp("export");
  RunConfig cfg = fixture_config(tmp, RunMode::vanilla, 1, 2, {2});
  run_train(cfg);
  const nlohmann::json dump = run_export(tmp.file("out/model_seed2.bin"), false);
  REQUIRE(dump["layers"].size() == 1);
  REQUIRE(dump["trained_config"]["mode"] == "vanilla");
}

TEST_CASE("mix records stream to json lines when requested") {
  testutil::TempDir tmp("mix");
  RunConfig cfg = fixture_config(tmp, RunMode::fixed_policy, 1, 2, {6});
  cfg.fixed_policy = Policy{0.9, 1.0};
  RunOptions opts;
  opts.dump_mix = true;
  run_train(cfg, opts);
  const std::string lines = slurp(tmp.file("out/mix_seed6.jsonl"));
  REQUIRE(!lines.empty());
  std::istringstream in(lines);
  std::string line;
  std::size_t parsed = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    REQUIRE(j.contains("i"));
    REQUIRE(j.contains("j"));
    REQUIRE(j.contains("kept"));
    REQUIRE(j.contains("lambda"));
    REQUIRE(j.contains("c"));
    REQUIRE(j["c"].get<double>() >= 0.0);
    REQUIRE(j["c"].get<double>() <= 1.0);
    ++parsed;
  }
  REQUIRE(parsed > 0);
}
