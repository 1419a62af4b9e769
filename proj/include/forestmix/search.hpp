#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forestmix/cascade.hpp"
#include "forestmix/dataset.hpp"
#include "forestmix/matrix.hpp"
#include "forestmix/metrics.hpp"

namespace forestmix {

// Discrete policy search space: probabilities x magnitudes.
struct PolicyGrid {
  std::vector<double> probs;
  std::vector<double> mags;

  int prob_count() const { return static_cast<int>(probs.size()); }
  int mag_count() const { return static_cast<int>(mags.size()); }
  int cells() const { return prob_count() * mag_count(); }

  Policy at(int pi, int mi) const {
    require(pi >= 0 && pi < prob_count() && mi >= 0 && mi < mag_count(),
            Errc::index_out_of_grid, "grid index (" + std::to_string(pi) + "," +
                std::to_string(mi) + ") outside " + std::to_string(prob_count()) + "x" +
                std::to_string(mag_count()));
    return Policy{probs[static_cast<std::size_t>(pi)], mags[static_cast<std::size_t>(mi)]};
  }

  void validate() const {
    require(cells() >= 2, Errc::config_error, "grid needs at least 2 cells");
    for (std::size_t i = 0; i < probs.size(); ++i) {
      require(probs[i] >= 0.0 && probs[i] <= 1.0, Errc::config_error,
              "grid probabilities must lie in [0,1]");
      require(i == 0 || probs[i] > probs[i - 1], Errc::config_error,
              "grid probabilities must be strictly increasing");
    }
    for (std::size_t i = 0; i < mags.size(); ++i) {
      require(mags[i] > 0.0, Errc::config_error, "grid magnitudes must be positive");
      require(i == 0 || mags[i] > mags[i - 1], Errc::config_error,
              "grid magnitudes must be strictly increasing");
    }
  }

  // 10 x 10 default: probabilities 0.05..0.95, magnitudes log-spaced in [0.1, 4]
  static PolicyGrid default_grid() {
    PolicyGrid g;
    for (int i = 0; i < 10; ++i) g.probs.push_back(0.05 + 0.1 * i);
    const double lo = std::log(0.1);
    const double hi = std::log(4.0);
    for (int i = 0; i < 10; ++i) g.mags.push_back(std::exp(lo + (hi - lo) * i / 9.0));
    return g;
  }
};

struct GridIndex {
  int pi = 0;
  int mi = 0;
  bool operator==(const GridIndex&) const = default;
};

// Sampling weights around a seed cell: 1/(L1 distance + 1), the seed cell
// itself excluded so drawn policies always differ from it, normalized to
// sum one.
inline Matrix neighbour_weights(GridIndex seed, const PolicyGrid& grid) {
  grid.validate();
  require(seed.pi >= 0 && seed.pi < grid.prob_count() && seed.mi >= 0 &&
              seed.mi < grid.mag_count(),
          Errc::index_out_of_grid, "seed cell outside grid");
  Matrix w(static_cast<std::size_t>(grid.prob_count()),
           static_cast<std::size_t>(grid.mag_count()));
  double total = 0.0;
  for (int x = 0; x < grid.prob_count(); ++x) {
    for (int y = 0; y < grid.mag_count(); ++y) {
      if (x == seed.pi && y == seed.mi) continue;
      const int dist = std::abs(seed.pi - x) + std::abs(seed.mi - y);
      const double weight = 1.0 / static_cast<double>(dist + 1);
      w(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = weight;
      total += weight;
    }
  }
  for (std::size_t x = 0; x < w.rows(); ++x) {
    for (double& v : w.row(x)) v /= total;
  }
  return w;
}

// Round-robins over the seed policies, drawing from each one's neighbour
// distribution and rejecting duplicates until `count` distinct cells are
// collected.
inline std::vector<GridIndex> neighbour_search(std::span<const GridIndex> seeds, int count,
                                               const PolicyGrid& grid, Rng& rng) {
  require(!seeds.empty(), Errc::empty_input, "neighbour_search needs a seed policy");
  require(count >= 0, Errc::config_error, "negative count");
  std::vector<GridIndex> distinct_seeds;
  for (const GridIndex& s : seeds) {
    if (std::find(distinct_seeds.begin(), distinct_seeds.end(), s) == distinct_seeds.end()) {
      distinct_seeds.push_back(s);
    }
  }
  require(grid.cells() - static_cast<int>(distinct_seeds.size()) >= count,
          Errc::grid_exhausted, "grid has too few non-seed cells for " +
              std::to_string(count) + " draws");

  std::vector<Matrix> cumulative;
  cumulative.reserve(seeds.size());
  for (const GridIndex& s : seeds) {
    Matrix w = neighbour_weights(s, grid);
    double run = 0.0;
    for (std::size_t x = 0; x < w.rows(); ++x) {
      for (double& v : w.row(x)) {
        run += v;
        v = run;
      }
    }
    cumulative.push_back(std::move(w));
  }

  std::vector<GridIndex> out;
  std::size_t turn = 0;
  std::uint64_t attempts = 0;
  const std::uint64_t attempt_cap =
      1000ull * static_cast<std::uint64_t>(grid.cells()) *
      static_cast<std::uint64_t>(std::max(count, 1));
  while (static_cast<int>(out.size()) < count) {
    require(attempts++ < attempt_cap, Errc::grid_exhausted,
            "neighbour sampling failed to find enough distinct cells");
    const Matrix& cum = cumulative[turn % seeds.size()];
    ++turn;
    const double u = rng.u01();
    GridIndex pick{grid.prob_count() - 1, grid.mag_count() - 1};
    [&] {
      for (int x = 0; x < grid.prob_count(); ++x) {
        for (int y = 0; y < grid.mag_count(); ++y) {
          if (u < cum(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) {
            pick = GridIndex{x, y};
            return;
          }
        }
      }
    }();
    if (std::find(out.begin(), out.end(), pick) == out.end()) out.push_back(pick);
  }
  return out;
}

struct Individual {
  CascadeModel model;
  std::vector<GridIndex> schedule;
  double score = 0.0;
};

struct Population {
  std::vector<Individual> members;  // kept sorted by score, descending
  int k = 0;                        // half the population

  std::size_t size() const { return members.size(); }
};

struct SearchCounters {
  std::uint64_t full_layer_trainings = 0;
  std::uint64_t probe_trainings = 0;
};

enum class ExploreSeedMode { top_half, best_only };

struct SearchParams {
  PolicyGrid grid = PolicyGrid::default_grid();
  int population = 8;  // 2k individuals
  CascadeParams cascade;
  double probe_tree_fraction = 0.25;
  ExploreSeedMode explore_seed = ExploreSeedMode::top_half;
  const MixSink* mix_sink = nullptr;  // audit hook, applied to every layer training
};

// Scores an individual the same way the deployed predictor runs:
// checkpoint-ensemble accuracy on the validation set.
inline double eval_individual(const Individual& ind, const Matrix& Xval,
                              std::span<const int> yval) {
  require(ind.model.n_layers() >= 1, Errc::empty_model, "individual has no trained layers");
  return accuracy(predict_checkpoint_ensemble(ind.model, Xval), yval);
}

// stable: equal scores keep their current member order
inline void sort_population(Population& pop) {
  std::stable_sort(pop.members.begin(), pop.members.end(),
                   [](const Individual& a, const Individual& b) { return a.score > b.score; });
}

// Bottom half becomes deep copies of the current best individual; their
// scores reset pending the next evaluation.
inline void exploit(Population& pop) {
  for (std::size_t i = static_cast<std::size_t>(pop.k); i < pop.size(); ++i) {
    pop.members[i].model = pop.members[0].model;
    pop.members[i].schedule = pop.members[0].schedule;
    pop.members[i].score = 0.0;
  }
}

// k fresh policies sampled around the top half's latest policies
// (or around the best individual's only, in best_only mode).
inline std::vector<GridIndex> explore(const Population& pop, const PolicyGrid& grid,
                                      Rng& rng, ExploreSeedMode mode) {
  std::vector<GridIndex> seeds;
  if (mode == ExploreSeedMode::best_only) {
    seeds.push_back(pop.members[0].schedule.back());
  } else {
    for (int i = 0; i < pop.k; ++i) {
      seeds.push_back(pop.members[static_cast<std::size_t>(i)].schedule.back());
    }
  }
  return neighbour_search(seeds, pop.k, grid, rng);
}

namespace detail {

// Layer-1 probe: trains the reduced-size forest group on mixed data and
// scores it directly; no out-of-fold fit, no layer appended anywhere.
inline double probe_first_layer(const Dataset& train, const Dataset& val,
                                const Policy& policy, const GroupParams& probe_group,
                                std::uint64_t seed) {
  const FiVector fi = FiVector::uniform(train.d());
  const AugmentResult aug = apply_policy(train.X, train.Y, policy, fi,
                                         derive_seed(seed, "probe-mix"));
  const auto group = fit_forest_group(aug.X, aug.Y, probe_group, derive_seed(seed, "probe-fit"));
  Matrix mean(val.n(), val.Y.cols());
  for (const Forest& forest : group) {
    const Matrix P = predict_forest(forest, val.X);
    for (std::size_t r = 0; r < mean.rows(); ++r) {
      const auto src = P.row(r);
      auto dst = mean.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  for (std::size_t r = 0; r < mean.rows(); ++r) {
    for (double& v : mean.row(r)) v /= static_cast<double>(group.size());
  }
  return accuracy(mean, val.labels);
}

}  // namespace detail

// Exhaustive scan of the grid for the first layer, using probe forests
// with a reduced tree count. Ties keep the lower row-major cell.
inline GridIndex grid_search_first_layer(const Dataset& train, const Dataset& val,
                                         const SearchParams& params, std::uint64_t seed,
                                         SearchCounters& counters) {
  params.grid.validate();
  GroupParams probe_group = params.cascade.group;
  probe_group.forest.n_trees = std::max(
      1, static_cast<int>(std::llround(params.cascade.group.forest.n_trees *
                                       params.probe_tree_fraction)));
  GridIndex best{0, 0};
  double best_score = -1.0;
  std::vector<double> scores(static_cast<std::size_t>(params.grid.cells()), 0.0);
  parallel_for(static_cast<std::size_t>(params.grid.cells()), [&](std::size_t cell) {
    const int pi = static_cast<int>(cell) / params.grid.mag_count();
    const int mi = static_cast<int>(cell) % params.grid.mag_count();
    scores[cell] = detail::probe_first_layer(train, val, params.grid.at(pi, mi), probe_group,
                                             derive_seed(seed, "probe-cell", cell));
  });
  counters.probe_trainings += static_cast<std::uint64_t>(params.grid.cells());
  for (int cell = 0; cell < params.grid.cells(); ++cell) {
    if (scores[static_cast<std::size_t>(cell)] > best_score) {
      best_score = scores[static_cast<std::size_t>(cell)];
      best = GridIndex{cell / params.grid.mag_count(), cell % params.grid.mag_count()};
    }
  }
  return best;
}

struct SearchResult {
  Individual best;
  SearchCounters counters;
  std::vector<double> best_score_by_layer;
};

// Population-based schedule learning. Layer 1 seeds the population with the
// grid-search winner plus 2k-1 distinct neighbours; every later layer
// exploits (bottom half cloned from the best) and explores (fresh
// neighbour policies for the clones), then every individual trains its
// next layer and the population re-ranks.
inline SearchResult run_schedule_search(const Dataset& train, const Dataset& val,
                                        const SearchParams& params, std::uint64_t seed) {
  params.grid.validate();
  require(params.population >= 2 && params.population % 2 == 0, Errc::config_error,
          "population size must be even and >= 2");
  const int two_k = params.population;
  const int max_layers = params.cascade.max_layers;
  require(max_layers >= 1, Errc::config_error, "max_layers must be >= 1");

  SearchResult result;
  Rng rng(derive_seed(seed, "search"));

  const GridIndex theta0 =
      grid_search_first_layer(train, val, params, derive_seed(seed, "grid-search"),
                              result.counters);
  std::vector<GridIndex> first(1, theta0);
  {
    const std::vector<GridIndex> companions =
        neighbour_search(std::span<const GridIndex>(&theta0, 1), two_k - 1, params.grid, rng);
    first.insert(first.end(), companions.begin(), companions.end());
  }

  Population pop;
  pop.k = two_k / 2;
  pop.members.resize(static_cast<std::size_t>(two_k));
  for (int i = 0; i < two_k; ++i) {
    Individual& ind = pop.members[static_cast<std::size_t>(i)];
    train_layer(ind.model, train.X, train.Y, train.labels,
                params.grid.at(first[static_cast<std::size_t>(i)].pi,
                               first[static_cast<std::size_t>(i)].mi),
                params.cascade, derive_seed(seed, "layer-1-slot", static_cast<std::uint64_t>(i)),
                params.mix_sink);
    result.counters.full_layer_trainings++;
    ind.schedule.push_back(first[static_cast<std::size_t>(i)]);
    ind.score = eval_individual(ind, val.X, val.labels);
  }
  sort_population(pop);
  result.best_score_by_layer.push_back(pop.members[0].score);

  for (int layer = 2; layer <= max_layers; ++layer) {
    exploit(pop);
    const std::vector<GridIndex> fresh = explore(pop, params.grid, rng, params.explore_seed);
    std::vector<GridIndex> assigned(static_cast<std::size_t>(two_k));
    for (int i = 0; i < pop.k; ++i) {
      assigned[static_cast<std::size_t>(i)] =
          pop.members[static_cast<std::size_t>(i)].schedule.back();
    }
    for (int i = 0; i < pop.k; ++i) {
      assigned[static_cast<std::size_t>(pop.k + i)] = fresh[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < two_k; ++i) {
      Individual& ind = pop.members[static_cast<std::size_t>(i)];
      train_layer(ind.model, train.X, train.Y, train.labels,
                  params.grid.at(assigned[static_cast<std::size_t>(i)].pi,
                                 assigned[static_cast<std::size_t>(i)].mi),
                  params.cascade,
                  derive_seed(seed, "layer-slot",
                              static_cast<std::uint64_t>(layer) * 1024ull +
                                  static_cast<std::uint64_t>(i)),
                  params.mix_sink);
      result.counters.full_layer_trainings++;
      ind.schedule.push_back(assigned[static_cast<std::size_t>(i)]);
      ind.score = eval_individual(ind, val.X, val.labels);
    }
    sort_population(pop);
    result.best_score_by_layer.push_back(pop.members[0].score);
  }

  result.best = std::move(pop.members[0]);
  return result;
}

// Trains a fresh cascade under a fixed schedule; the schedule length, not
// params.max_layers, decides the depth.
inline CascadeModel apply_schedule_with_sink(std::span<const Policy> schedule,
                                             const Dataset& train, const CascadeParams& params,
                                             std::uint64_t seed, const MixSink* sink) {
  require(!schedule.empty(), Errc::config_error, "empty schedule");
  CascadeParams p = params;
  p.max_layers = static_cast<int>(schedule.size());
  CascadeModel model;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    train_layer(model, train.X, train.Y, train.labels, schedule[i], p,
                derive_seed(seed, "schedule-layer", i + 1), sink);
  }
  return model;
}

inline CascadeModel apply_schedule(std::span<const Policy> schedule, const Dataset& train,
                                   const CascadeParams& params, std::uint64_t seed) {
  return apply_schedule_with_sink(schedule, train, params, seed, nullptr);
}

}  // namespace forestmix
