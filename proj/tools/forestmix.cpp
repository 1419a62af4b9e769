// Command-line front end: ingest-check, train, search, transfer, eval,
// export. One JSON config file drives a run; flags override single fields.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "forestmix/parallel.hpp"
#include "forestmix/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::string explore_seed;
  bool verify = false;
  bool dump_mix = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* config = cmd->add_option("--config", args.config_path, "run config json");
  if (needs_config) config->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seeds, "override the config seed list");
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_flag("--verify", args.verify, "re-derive every report value from the dumps");
  cmd->add_flag("--dump-mix", args.dump_mix, "write mix records as json lines");
  cmd->add_option("--explore-seed", args.explore_seed,
                  "explore seeding: top-half (default) or best-only")
      ->check(CLI::IsMember({"top-half", "best-only"}));
  cmd->add_option("--threads", args.threads, "worker thread budget (0 = all cores)");
}

forestmix::RunConfig make_config(const CommonArgs& args, forestmix::RunMode expected) {
  forestmix::RunConfig cfg = forestmix::load_config(args.config_path);
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.explore_seed == "top-half") cfg.explore_seed = forestmix::ExploreSeedMode::top_half;
  if (args.explore_seed == "best-only") cfg.explore_seed = forestmix::ExploreSeedMode::best_only;
  if (args.threads > 0) forestmix::thread_budget() = args.threads;
  if (expected == forestmix::RunMode::search || expected == forestmix::RunMode::transfer) {
    cfg.mode = expected;
  }
  cfg.validate();
  return cfg;
}

forestmix::RunOptions make_options(const CommonArgs& args) {
  forestmix::RunOptions opts;
  opts.verify = args.verify;
  opts.dump_mix = args.dump_mix;
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep forest cascades with learned sample-mixing schedules"};
  app.require_subcommand(1);

  CommonArgs train_args, search_args, transfer_args;
  std::string ingest_csv, ingest_schema, ingest_missing = "impute";
  std::string transfer_schedule;
  bool transfer_allow_mismatch = false;
  std::string eval_model, eval_csv, eval_schema, eval_out = "runs/eval", eval_missing = "impute";
  bool eval_verify = false;
  std::string export_model, export_json_path;
  bool export_trees = false;

  auto* ingest = app.add_subcommand("ingest-check", "validate a csv + schema pair");
  ingest->add_option("--csv", ingest_csv, "dataset csv")->required()->check(CLI::ExistingFile);
  ingest->add_option("--schema", ingest_schema, "schema json sidecar")
      ->required()
      ->check(CLI::ExistingFile);
  ingest->add_option("--missing", ingest_missing, "impute or reject")
      ->check(CLI::IsMember({"impute", "reject"}));

  auto* train = app.add_subcommand("train", "train per config (vanilla or fixed-policy)");
  add_common(train, train_args, true);

  auto* search = app.add_subcommand("search", "learn an augmentation policy schedule");
  add_common(search, search_args, true);

  auto* transfer = app.add_subcommand("transfer", "apply a saved schedule to a fresh cascade");
  add_common(transfer, transfer_args, true);
  transfer->add_option("--schedule", transfer_schedule, "schedule json from a search run")
      ->required()
      ->check(CLI::ExistingFile);
  transfer->add_flag("--allow-grid-mismatch", transfer_allow_mismatch,
                     "accept a schedule whose grid differs from the config grid");

  auto* eval = app.add_subcommand("eval", "score a saved model on a dataset");
  eval->add_option("--model", eval_model, "model container")->required()->check(CLI::ExistingFile);
  eval->add_option("--csv", eval_csv, "dataset csv")->required()->check(CLI::ExistingFile);
  eval->add_option("--schema", eval_schema, "schema json sidecar")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "output directory");
  eval->add_option("--missing", eval_missing, "impute or reject")
      ->check(CLI::IsMember({"impute", "reject"}));
  eval->add_flag("--verify", eval_verify, "re-derive report values from the dumps");

  auto* exp = app.add_subcommand("export", "dump a model's structure as json");
  exp->add_option("--model", export_model, "model container")
      ->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--json", export_json_path, "output path (stdout when omitted)");
  exp->add_flag("--trees", export_trees, "include full per-node tree dumps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto missing = ingest_missing == "reject" ? forestmix::MissingPolicy::reject
                                                      : forestmix::MissingPolicy::impute;
      std::cout << forestmix::run_ingest_check(ingest_csv, ingest_schema, missing).dump(2)
                << "\n";
    } else if (*train) {
      auto cfg = make_config(train_args, forestmix::RunMode::vanilla);
      forestmix::require(cfg.mode == forestmix::RunMode::vanilla ||
                             cfg.mode == forestmix::RunMode::fixed_policy,
                         forestmix::Errc::config_error,
                         "train needs mode vanilla or fixed-policy in the config");
      const auto report = forestmix::run_train(cfg, make_options(train_args));
      std::cout << report.dump(2) << "\n";
    } else if (*search) {
      auto cfg = make_config(search_args, forestmix::RunMode::search);
      const auto report = forestmix::run_search(cfg, make_options(search_args));
      std::cout << report.dump(2) << "\n";
    } else if (*transfer) {
      auto cfg = make_config(transfer_args, forestmix::RunMode::transfer);
      auto opts = make_options(transfer_args);
      opts.allow_grid_mismatch = transfer_allow_mismatch;
      const auto report = forestmix::run_transfer(cfg, transfer_schedule, opts);
      std::cout << report.dump(2) << "\n";
    } else if (*eval) {
      const auto missing = eval_missing == "reject" ? forestmix::MissingPolicy::reject
                                                    : forestmix::MissingPolicy::impute;
      forestmix::RunOptions opts;
      opts.verify = eval_verify;
      const auto report =
          forestmix::run_eval(eval_model, eval_csv, eval_schema, eval_out, missing, opts);
      std::cout << report.dump(2) << "\n";
    } else if (*exp) {
      const auto dump = forestmix::run_export(export_model, export_trees);
      if (export_json_path.empty()) {
        std::cout << dump.dump(2) << "\n";
      } else {
        forestmix::detail::write_json_file(export_json_path, dump);
        std::cout << "wrote " << export_json_path << "\n";
      }
    }
  } catch (const forestmix::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
