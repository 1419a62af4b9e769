// Minimal library walkthrough: build a dataset in memory, train a short
// cascade with a fixed mixing policy, compare the checkpoint ensemble with
// the cv-selected layer, then learn a schedule and transfer it.

#include <cstdio>

#include "forestmix/cascade.hpp"
#include "forestmix/search.hpp"

using namespace forestmix;

namespace {

Dataset toy_dataset(int n, std::uint64_t seed) {
  const int d = 8, C = 3;
  Rng rng(seed);
  Matrix X(static_cast<std::size_t>(n), d);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    const int c = r % C;
    labels[static_cast<std::size_t>(r)] = c;
    for (int j = 0; j < d; ++j) {
      const double base = j < 4 ? 1.2 * (c - 1) * (j + 1) / 4.0 : 0.0;
      X(static_cast<std::size_t>(r), static_cast<std::size_t>(j)) = base + rng.normal();
    }
  }
  Schema schema;
  for (int j = 0; j < d; ++j) {
    schema.columns.push_back({"f" + std::to_string(j), ColumnKind::continuous, {}});
  }
  schema.columns.push_back({"y", ColumnKind::categorical, {"lo", "mid", "hi"}});
  schema.label_column = "y";

  Dataset ds;
  ds.schema = schema;
  ds.class_names = schema.class_names();
  ds.Y = Matrix(static_cast<std::size_t>(n), C);
  for (int r = 0; r < n; ++r) {
    ds.Y(static_cast<std::size_t>(r), static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])) = 1.0;
  }
  ds.X = std::move(X);
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace

int main() {
  const Dataset train = toy_dataset(240, 1);
  const Dataset val = toy_dataset(90, 2);
  const Dataset test = toy_dataset(90, 3);

  CascadeParams params;
  params.group.forest.n_trees = 20;
  params.max_layers = 4;

  // fixed mixing policy on every layer
  CascadeModel model;
  for (int layer = 0; layer < 4; ++layer) {
    train_layer(model, train.X, train.Y, train.labels, Policy{0.4, 1.0}, params,
                derive_seed(7, "layer", static_cast<std::uint64_t>(layer)));
  }
  const double ce = accuracy(predict_checkpoint_ensemble(model, test.X), test.labels);
  const int chosen = select_output_layer_cv(model, val.X, val.labels);
  const double cv = accuracy(predict_at_layer(model, test.X, chosen), test.labels);
  std::printf("fixed policy: checkpoint ensemble %.3f, cv-selected layer %d %.3f\n", ce, chosen,
              cv);

  // schedule learning on a small grid, then transfer with bigger forests
  SearchParams sp;
  sp.grid.probs = {0.1, 0.4, 0.7};
  sp.grid.mags = {0.5, 1.0, 2.0};
  sp.population = 4;
  sp.cascade = params;
  sp.cascade.group.forest.n_trees = 8;
  const SearchResult found = run_schedule_search(train, val, sp, 11);
  std::printf("searched schedule (val %.3f):", found.best.score);
  std::vector<Policy> schedule;
  for (const GridIndex& g : found.best.schedule) {
    const Policy p = sp.grid.at(g.pi, g.mi);
    schedule.push_back(p);
    std::printf(" (%.1f,%.2f)", p.prob, p.mag);
  }
  std::printf("\n");

  CascadeParams big = params;
  big.group.forest.n_trees = 32;
  const CascadeModel transferred = apply_schedule(schedule, train, big, 13);
  const double tacc = accuracy(predict_checkpoint_ensemble(transferred, test.X), test.labels);
  std::printf("transferred schedule at 32 trees/forest: %.3f test accuracy\n", tacc);
  return 0;
}
