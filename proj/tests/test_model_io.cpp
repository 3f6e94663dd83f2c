#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <string>

#include "csqr/common.hpp"
#include "csqr/density_network.hpp"
#include "csqr/model_io.hpp"

using namespace csqr;
using nlohmann::json;

namespace {

QuantileModel sample_model() {
  QuantileModel m;
  m.grid = build_grid(6);
  m.recipe = build_recipe({{9, 25}, true, {}}, BBox{0, 0, 1, 1}, 3);
  m.scaler = ResponseScaler{-1.5, 2.5, 0.01};
  m.params = glorot_init(m.recipe.feature_length(), {5}, 6, 77);
  m.meta.seed = 42;
  m.meta.epochs = 13;
  m.meta.final_nll = -0.123456789012345;
  m.meta.train_rows = 321;
  m.meta.learning_rate = 1e-3;
  m.meta.batch_size = 256;
  return m;
}

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("serialize/deserialize round trip is bit exact") {
  const QuantileModel a = sample_model();
  const std::string text = serialize_model(a);
  const QuantileModel b = deserialize_model(text);

  CHECK(b.grid.basis_count == a.grid.basis_count);
  CHECK(b.recipe.covariate_count == a.recipe.covariate_count);
  CHECK(b.recipe.include_coordinates == a.recipe.include_coordinates);
  CHECK(b.recipe.coord_bbox.xmin == a.recipe.coord_bbox.xmin);
  CHECK(b.recipe.coord_bbox.ymax == a.recipe.coord_bbox.ymax);
  REQUIRE(b.recipe.grids.size() == a.recipe.grids.size());
  for (std::size_t g = 0; g < a.recipe.grids.size(); ++g) {
    CHECK(b.recipe.grids[g].side == a.recipe.grids[g].side);
    CHECK(b.recipe.grids[g].bandwidth == a.recipe.grids[g].bandwidth);
    REQUIRE(b.recipe.grids[g].nodes.size() == a.recipe.grids[g].nodes.size());
    for (std::size_t i = 0; i < a.recipe.grids[g].nodes.size(); ++i) {
      CHECK(b.recipe.grids[g].nodes[i].x == a.recipe.grids[g].nodes[i].x);
      CHECK(b.recipe.grids[g].nodes[i].y == a.recipe.grids[g].nodes[i].y);
    }
  }
  CHECK(b.scaler.y_min == a.scaler.y_min);
  CHECK(b.scaler.y_max == a.scaler.y_max);
  CHECK(b.scaler.margin == a.scaler.margin);
  CHECK(b.meta.seed == a.meta.seed);
  CHECK(b.meta.epochs == a.meta.epochs);
  CHECK(b.meta.final_nll == a.meta.final_nll);
  CHECK(b.meta.train_rows == a.meta.train_rows);
  CHECK(b.meta.learning_rate == a.meta.learning_rate);
  CHECK(b.meta.batch_size == a.meta.batch_size);
  REQUIRE(b.params.weights.size() == a.params.weights.size());
  for (std::size_t l = 0; l < a.params.weights.size(); ++l) {
    CHECK(b.params.weights[l] == a.params.weights[l]);
    CHECK(b.params.biases[l] == a.params.biases[l]);
  }
  // Serialization of the reloaded model reproduces the exact bytes.
  CHECK(serialize_model(b) == text);
}

TEST_CASE("save_model/load_model go through the filesystem") {
  const QuantileModel a = sample_model();
  const std::string path = temp_path("csqr_model_io_test.json");
  save_model(a, path);
  const QuantileModel b = load_model(path);
  CHECK(serialize_model(b) == serialize_model(a));
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_model(path), data_error);
  CHECK_THROWS_AS(save_model(a, "/nonexistent_dir_zz/m.json"), data_error);
}

TEST_CASE("format tag is checked before anything else") {
  json j = json::parse(serialize_model(sample_model()));
  j["format"] = "csqr-v2";
  CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                       doctest::Contains("unsupported model format"),
                       data_error);
  j.erase("format");
  CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                       doctest::Contains("format tag"), data_error);
}

TEST_CASE("invalid JSON is reported as a data error") {
  CHECK_THROWS_WITH_AS(deserialize_model("{ not json"),
                       doctest::Contains("not valid JSON"), data_error);
  CHECK_THROWS_AS(deserialize_model(""), data_error);
}

TEST_CASE("dimension tampering is caught") {
  const std::string text = serialize_model(sample_model());

  SUBCASE("recipe no longer matches the network input") {
    json j = json::parse(text);
    j["recipe"]["covariate_count"] = 4;
    CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                         doctest::Contains("feature length"), data_error);
  }
  SUBCASE("basis count no longer matches the network output") {
    json j = json::parse(text);
    j["grid"]["basis_count"] = 7;
    CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                         doctest::Contains("basis count"), data_error);
  }
  SUBCASE("ragged weight rows") {
    json j = json::parse(text);
    j["network"]["layers"][0]["weights"][1].erase(0);
    CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                         doctest::Contains("ragged"), data_error);
  }
  SUBCASE("bias length mismatch") {
    json j = json::parse(text);
    j["network"]["layers"][0]["bias"].erase(0);
    CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                         doctest::Contains("bias length"), data_error);
  }
  SUBCASE("layer chain break") {
    json j = json::parse(text);
    j["network"]["layers"][1]["weights"][0].push_back("0");
    CHECK_THROWS_AS(deserialize_model(j.dump()), data_error);
  }
  SUBCASE("node grid size mismatch") {
    json j = json::parse(text);
    j["recipe"]["grids"][0]["nodes"].erase(0);
    CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                         doctest::Contains("side^2"), data_error);
  }
  SUBCASE("missing sections") {
    json j = json::parse(text);
    j.erase("scaler");
    CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                         doctest::Contains("malformed model file"), data_error);
  }
}

TEST_CASE("non-finite parameters and empty ranges are rejected") {
  QuantileModel bad = sample_model();
  bad.params.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(deserialize_model(serialize_model(bad)),
                       doctest::Contains("non-finite"), data_error);

  QuantileModel flat = sample_model();
  flat.scaler.y_min = flat.scaler.y_max;
  CHECK_THROWS_WITH_AS(deserialize_model(serialize_model(flat)),
                       doctest::Contains("response range"), data_error);
}

TEST_CASE("numeric JSON literals are accepted where strings are written") {
  json j = json::parse(serialize_model(sample_model()));
  j["scaler"]["y_min"] = -1.5;  // raw number instead of formatted string
  const QuantileModel m = deserialize_model(j.dump());
  CHECK(m.scaler.y_min == -1.5);
  j["scaler"]["y_min"] = json::array();
  CHECK_THROWS_WITH_AS(deserialize_model(j.dump()),
                       doctest::Contains("not numeric"), data_error);
}
