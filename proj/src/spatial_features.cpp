#include "csqr/spatial_features.hpp"

#include <cmath>
#include <stdexcept>

namespace csqr {

double wendland(double h) {
  if (h < 0.0) {
    throw std::domain_error("wendland: scaled distance must be nonnegative");
  }
  if (h >= 1.0) return 0.0;
  const double u = 1.0 - h;
  const double u2 = u * u;
  const double u6 = u2 * u2 * u2;
  return u6 * (35.0 * h * h + 18.0 * h + 3.0) / 3.0;
}

NodeGrid make_node_grid(int node_count, const BBox& box, double bandwidth) {
  const int side = static_cast<int>(std::lround(std::sqrt(node_count)));
  if (node_count < 4 || side * side != node_count) {
    throw config_error("node count " + std::to_string(node_count) +
                       " is not a perfect square >= 4");
  }
  if (!(bandwidth > 0.0)) {
    throw config_error("node-grid bandwidth must be positive");
  }
  NodeGrid grid;
  grid.side = side;
  grid.bandwidth = bandwidth;
  grid.nodes.reserve(static_cast<std::size_t>(node_count));
  for (int iy = 0; iy < side; ++iy) {
    for (int ix = 0; ix < side; ++ix) {
      grid.nodes.push_back(
          {box.xmin + box.width() * ix / (side - 1),
           box.ymin + box.height() * iy / (side - 1)});
    }
  }
  return grid;
}

int FeatureRecipe::spatial_feature_count() const {
  int total = 0;
  for (const auto& g : grids) total += g.node_count();
  return total;
}

int FeatureRecipe::feature_length() const {
  return 1 + covariate_count + (include_coordinates ? 2 : 0) +
         spatial_feature_count();
}

void spatial_feature_block(Point scaled, const NodeGrid& grid,
                           std::span<double> out) {
  for (std::size_t j = 0; j < grid.nodes.size(); ++j) {
    out[j] = wendland(distance(scaled, grid.nodes[j]) / grid.bandwidth);
  }
}

std::vector<double> spatial_features(Point scaled,
                                     std::span<const NodeGrid> grids) {
  std::size_t total = 0;
  for (const auto& g : grids) total += static_cast<std::size_t>(g.node_count());
  std::vector<double> out(total);
  std::size_t offset = 0;
  for (const auto& g : grids) {
    spatial_feature_block(scaled, g,
                          std::span<double>(out).subspan(
                              offset, static_cast<std::size_t>(g.node_count())));
    offset += static_cast<std::size_t>(g.node_count());
  }
  return out;
}

void assemble_features(double t, std::span<const double> x, Point raw_s,
                       const FeatureRecipe& recipe, std::span<double> out) {
  if (static_cast<int>(x.size()) != recipe.covariate_count ||
      static_cast<int>(out.size()) != recipe.feature_length()) {
    throw std::invalid_argument("feature assembly dimension mismatch");
  }
  std::size_t pos = 0;
  out[pos++] = t;
  for (double v : x) out[pos++] = v;
  const Point scaled = scale_point(recipe.coord_bbox, raw_s);
  if (recipe.include_coordinates) {
    out[pos++] = scaled.x;
    out[pos++] = scaled.y;
  }
  for (const auto& g : recipe.grids) {
    spatial_feature_block(scaled, g,
                          out.subspan(pos, static_cast<std::size_t>(g.node_count())));
    pos += static_cast<std::size_t>(g.node_count());
  }
}

FeatureRecipe build_recipe(const RecipeConfig& config, const BBox& data_bbox,
                           int covariate_count) {
  if (covariate_count < 0) {
    throw config_error("negative covariate count");
  }
  if (!config.bandwidth_override.empty() &&
      config.bandwidth_override.size() != config.node_counts.size()) {
    throw config_error("bandwidth override must match the resolution count");
  }
  FeatureRecipe recipe;
  recipe.covariate_count = covariate_count;
  recipe.include_coordinates = config.include_coordinates;
  recipe.coord_bbox = data_bbox;
  const BBox unit;
  double previous = 0.0;
  for (std::size_t m = 0; m < config.node_counts.size(); ++m) {
    const int side =
        static_cast<int>(std::lround(std::sqrt(config.node_counts[m])));
    const double bandwidth = config.bandwidth_override.empty()
                                 ? 2.5 / (side - 1)
                                 : config.bandwidth_override[m];
    NodeGrid grid = make_node_grid(config.node_counts[m], unit, bandwidth);
    grid.resolution_index = static_cast<int>(m) + 1;
    if (m > 0 && !(grid.bandwidth < previous)) {
      throw config_error("bandwidths must strictly decrease with resolution");
    }
    previous = grid.bandwidth;
    recipe.grids.push_back(std::move(grid));
  }
  return recipe;
}

}  // namespace csqr
