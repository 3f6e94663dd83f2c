#include "csqr/model_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "csqr/common.hpp"

namespace csqr {

using nlohmann::json;

// Doubles cross the JSON boundary as strings produced by format_double;
// nlohmann's own number output is round-trip safe too, but strings make
// the byte-stability contract independent of the library's dtoa.
static json num(double v) { return format_double(v); }

static double as_num(const json& j, const std::string& name) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return parse_double(j.get<std::string>(), name);
  throw data_error("model field '" + name + "' is not numeric");
}

static json point_json(Point p) { return json::array({num(p.x), num(p.y)}); }

std::string serialize_model(const QuantileModel& model) {
  json j;
  j["format"] = kModelFormatTag;
  j["grid"]["basis_count"] = model.grid.basis_count;

  json recipe;
  recipe["covariate_count"] = model.recipe.covariate_count;
  recipe["include_coordinates"] = model.recipe.include_coordinates;
  recipe["coord_bbox"] = {{"xmin", num(model.recipe.coord_bbox.xmin)},
                          {"ymin", num(model.recipe.coord_bbox.ymin)},
                          {"xmax", num(model.recipe.coord_bbox.xmax)},
                          {"ymax", num(model.recipe.coord_bbox.ymax)}};
  json grids = json::array();
  for (const auto& g : model.recipe.grids) {
    json jg;
    jg["resolution_index"] = g.resolution_index;
    jg["side"] = g.side;
    jg["bandwidth"] = num(g.bandwidth);
    json nodes = json::array();
    for (const auto& nd : g.nodes) nodes.push_back(point_json(nd));
    jg["nodes"] = std::move(nodes);
    grids.push_back(std::move(jg));
  }
  recipe["grids"] = std::move(grids);
  j["recipe"] = std::move(recipe);

  j["scaler"] = {{"y_min", num(model.scaler.y_min)},
                 {"y_max", num(model.scaler.y_max)},
                 {"margin", num(model.scaler.margin)}};
  j["meta"] = {{"seed", model.meta.seed},
               {"epochs", model.meta.epochs},
               {"final_nll", num(model.meta.final_nll)},
               {"train_rows", model.meta.train_rows},
               {"learning_rate", num(model.meta.learning_rate)},
               {"batch_size", model.meta.batch_size}};

  json layers = json::array();
  for (std::size_t l = 0; l < model.params.weights.size(); ++l) {
    const auto& w = model.params.weights[l];
    json rows = json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(num(w(r, c)));
      rows.push_back(std::move(row));
    }
    json bias = json::array();
    for (Eigen::Index r = 0; r < model.params.biases[l].size(); ++r)
      bias.push_back(num(model.params.biases[l][r]));
    layers.push_back(json{{"weights", std::move(rows)}, {"bias", std::move(bias)}});
  }
  j["network"]["layers"] = std::move(layers);

  return j.dump(2) + "\n";
}

QuantileModel deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.contains("format") || !j["format"].is_string())
    throw data_error("model file lacks a format tag");
  if (j["format"].get<std::string>() != kModelFormatTag)
    throw data_error("unsupported model format '" +
                     j["format"].get<std::string>() + "' (expected " +
                     kModelFormatTag + ")");
  try {
    QuantileModel model;
    model.grid = build_grid(j.at("grid").at("basis_count").get<int>());

    const json& jr = j.at("recipe");
    model.recipe.covariate_count = jr.at("covariate_count").get<int>();
    model.recipe.include_coordinates = jr.at("include_coordinates").get<bool>();
    const json& bb = jr.at("coord_bbox");
    model.recipe.coord_bbox = BBox{as_num(bb.at("xmin"), "xmin"),
                                   as_num(bb.at("ymin"), "ymin"),
                                   as_num(bb.at("xmax"), "xmax"),
                                   as_num(bb.at("ymax"), "ymax")};
    for (const json& jg : jr.at("grids")) {
      NodeGrid g;
      g.resolution_index = jg.at("resolution_index").get<int>();
      g.side = jg.at("side").get<int>();
      g.bandwidth = as_num(jg.at("bandwidth"), "bandwidth");
      for (const json& nd : jg.at("nodes"))
        g.nodes.push_back(Point{as_num(nd.at(0), "node.x"),
                                as_num(nd.at(1), "node.y")});
      if (static_cast<int>(g.nodes.size()) != g.side * g.side)
        throw data_error("node grid size does not match side^2");
      model.recipe.grids.push_back(std::move(g));
    }

    const json& sc = j.at("scaler");
    model.scaler = ResponseScaler{as_num(sc.at("y_min"), "y_min"),
                                  as_num(sc.at("y_max"), "y_max"),
                                  as_num(sc.at("margin"), "margin")};

    const json& mt = j.at("meta");
    model.meta.seed = mt.at("seed").get<std::uint64_t>();
    model.meta.epochs = mt.at("epochs").get<int>();
    model.meta.final_nll = as_num(mt.at("final_nll"), "final_nll");
    model.meta.train_rows = mt.at("train_rows").get<int>();
    model.meta.learning_rate = as_num(mt.at("learning_rate"), "learning_rate");
    model.meta.batch_size = mt.at("batch_size").get<int>();

    for (const json& jl : j.at("network").at("layers")) {
      const json& rows = jl.at("weights");
      const auto nr = static_cast<Eigen::Index>(rows.size());
      if (nr == 0) throw data_error("empty weight matrix in model file");
      const auto nc = static_cast<Eigen::Index>(rows.at(0).size());
      Eigen::MatrixXd w(nr, nc);
      for (Eigen::Index r = 0; r < nr; ++r) {
        const json& row = rows.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != nc)
          throw data_error("ragged weight matrix in model file");
        for (Eigen::Index c = 0; c < nc; ++c)
          w(r, c) = as_num(row.at(static_cast<std::size_t>(c)), "weight");
      }
      const json& jb = jl.at("bias");
      if (static_cast<Eigen::Index>(jb.size()) != nr)
        throw data_error("bias length does not match weight rows");
      Eigen::VectorXd b(nr);
      for (Eigen::Index r = 0; r < nr; ++r)
        b[r] = as_num(jb.at(static_cast<std::size_t>(r)), "bias");
      model.params.weights.push_back(std::move(w));
      model.params.biases.push_back(std::move(b));
    }
    if (model.params.weights.empty())
      throw data_error("model file has no network layers");

    // Dimension chain checks.
    if (model.params.input_dim() != model.recipe.feature_length())
      throw data_error("network input does not match recipe feature length");
    if (model.params.output_dim() != model.grid.basis_count)
      throw data_error("network output does not match basis count");
    for (std::size_t l = 1; l < model.params.weights.size(); ++l)
      if (model.params.weights[l].cols() != model.params.weights[l - 1].rows())
        throw data_error("network layer dimensions do not chain");
    if (!model.params.finite())
      throw data_error("model file contains non-finite parameters");
    if (!(model.scaler.y_min < model.scaler.y_max))
      throw data_error("model scaler has empty response range");
    return model;
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const QuantileModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open '" + path + "' for writing");
  out << serialize_model(model);
  if (!out) throw data_error("failed writing model to '" + path + "'");
}

QuantileModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace csqr
