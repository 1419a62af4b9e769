#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "forestmix/serialize.hpp"
#include "support/synth.hpp"

using namespace forestmix;

namespace {

Forest trained_forest(ForestKind kind, std::uint64_t seed) {
  const Dataset ds = synth::make_blobs(60, 5, 3, 3, 1.4, 0.1, 91);
  ForestParams p;
  p.n_trees = 8;
  p.kind = kind;
  p.tree.min_samples_leaf = 2;
  return fit_forest(ds.X, ds.Y, p, seed);
}

CascadeModel trained_model() {
  const Dataset ds = synth::make_blobs(55, 4, 2, 3, 1.3, 0.1, 92);
  CascadeParams params;
  params.group.forest.n_trees = 4;
  params.group.forest.tree.min_samples_leaf = 2;
  params.max_layers = 3;
  params.oof_folds = 3;
  CascadeModel model;
  for (int i = 0; i < 2; ++i) {
    train_layer(model, ds.X, ds.Y, ds.labels, Policy{0.4, 1.0}, params,
                derive_seed(17, "layer", static_cast<std::uint64_t>(i)));
  }
  model.schema_hash = ds.schema.hash();
  model.class_names = ds.class_names;
  return model;
}

}  // namespace

TEST_CASE("forest round-trips bit-exactly through the binary container") {
  for (ForestKind kind : {ForestKind::bagged, ForestKind::extra}) {
    const Forest forest = trained_forest(kind, 7);
    std::stringstream buf;
    save_forest(buf, forest);
    const Forest back = load_forest(buf);
    std::ostringstream first, second;
    save_forest(first, forest);
    save_forest(second, back);
    REQUIRE(first.str() == second.str());
    // loaded forest predicts identically
    const Matrix probe(3, 5, 0.25);
    REQUIRE(predict_forest(forest, probe) == predict_forest(back, probe));
  }
}

TEST_CASE("corrupt magic and version are rejected") {
  const Forest forest = trained_forest(ForestKind::bagged, 3);
  std::stringstream buf;
  save_forest(buf, forest);
  std::string bytes = buf.str();
  bytes[0] = 'X';
  std::istringstream bad(bytes);
  REQUIRE_THROWS_MATCHES(load_forest(bad), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::io_error;
                         }));

  std::stringstream buf2;
  save_forest(buf2, forest);
  std::string bytes2 = buf2.str();
  bytes2[8] = 99;  // version field
  std::istringstream bad2(bytes2);
  REQUIRE_THROWS_MATCHES(load_forest(bad2), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::io_error;
                         }));
}

TEST_CASE("truncated streams are refused") {
  const Forest forest = trained_forest(ForestKind::extra, 5);
  std::stringstream buf;
  save_forest(buf, forest);
  const std::string bytes = buf.str();
  std::istringstream half(bytes.substr(0, bytes.size() / 2));
  REQUIRE_THROWS_MATCHES(load_forest(half), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::io_error;
                         }));
}

TEST_CASE("model container preserves structure, metadata, and predictions") {
  const CascadeModel model = trained_model();
  std::stringstream buf;
  const nlohmann::json config{{"note", "fixture"}};
  save_model(buf, model, config);
  nlohmann::json config_back;
  const CascadeModel back = load_model(buf, &config_back);
  REQUIRE(config_back == config);
  REQUIRE(back.d == model.d);
  REQUIRE(back.C == model.C);
  REQUIRE(back.F == model.F);
  REQUIRE(back.schema_hash == model.schema_hash);
  REQUIRE(back.class_names == model.class_names);
  REQUIRE(back.n_layers() == model.n_layers());
  for (int i = 0; i < back.n_layers(); ++i) {
    const Layer& a = model.layers[static_cast<std::size_t>(i)];
    const Layer& b = back.layers[static_cast<std::size_t>(i)];
    REQUIRE(a.input_width == b.input_width);
    REQUIRE(a.policy.prob == b.policy.prob);
    REQUIRE(a.policy.mag == b.policy.mag);
    REQUIRE(a.fi_used.values == b.fi_used.values);
    REQUIRE(a.fi_pooled.values == b.fi_pooled.values);
  }
  const Matrix probe(4, 4, 0.5);
  REQUIRE(predict_checkpoint_ensemble(model, probe) ==
          predict_checkpoint_ensemble(back, probe));
}

TEST_CASE("saving the same model twice is byte-identical") {
  const CascadeModel model = trained_model();
  std::ostringstream a, b;
  save_model(a, model, nlohmann::json::object());
  save_model(b, model, nlohmann::json::object());
  REQUIRE(a.str() == b.str());
}

TEST_CASE("json dump exposes the structural facts") {
  const CascadeModel model = trained_model();
  const nlohmann::json j = model_to_json(model);
  REQUIRE(j["d"] == 4);
  REQUIRE(j["classes"] == 2);
  REQUIRE(j["layers"].size() == 2);
  REQUIRE(j["layers"][0]["forests"].size() == 2);
  const nlohmann::json full = model_to_json(model, true);
  REQUIRE(full["layers"][0]["forests"][0].contains("trees"));
  // parses back as json after dump
  const auto round = nlohmann::json::parse(full.dump());
  REQUIRE(round == full);
}
