#pragma once

#include <span>
#include <vector>

#include "csqr/common.hpp"

namespace csqr {

// Wendland compactly supported radial basis, (1-h)^6 (35h^2 + 18h + 3) / 3
// on [0,1] and 0 beyond; h is the node distance scaled by the bandwidth.
double wendland(double h);

// Square lattice of radial-basis nodes at one resolution.
struct NodeGrid {
  int resolution_index = 1;  // m, 1-based; bandwidths decrease with m
  int side = 0;              // sqrt(p)
  double bandwidth = 0.0;    // delta_m, in scaled coordinate units
  std::vector<Point> nodes;  // side*side, row-major, spans the bbox

  int node_count() const { return side * side; }
};

// node_count must be a perfect square >= 4; nodes span the bbox inclusively.
NodeGrid make_node_grid(int node_count, const BBox& box, double bandwidth);

// Everything needed to turn a raw observation (t, x, s) into the network
// input: covariate block, optional scaled coordinates, and the Wendland
// blocks per resolution.  Coordinates are min-max scaled by coord_bbox
// before distances are taken, so node grids always live on the unit square.
struct FeatureRecipe {
  int covariate_count = 0;
  bool include_coordinates = false;
  BBox coord_bbox;
  std::vector<NodeGrid> grids;

  int spatial_feature_count() const;
  // 1 (treatment) + covariates + coordinates + spatial features.
  int feature_length() const;
};

// Wendland block at one resolution for an already-scaled location.
void spatial_feature_block(Point scaled, const NodeGrid& grid,
                           std::span<double> out);

// Concatenated blocks over all resolutions.
std::vector<double> spatial_features(Point scaled,
                                     std::span<const NodeGrid> grids);

// Full feature vector [t, x..., (s1, s2)?, phi(s)...] for a raw location.
void assemble_features(double t, std::span<const double> x, Point raw_s,
                       const FeatureRecipe& recipe, std::span<double> out);

// Declarative description of a recipe, independent of the data domain.
// node_counts per resolution (e.g. {9}, {9,25}, {9,25,49}); an empty
// bandwidth_override applies the 2.5 x lattice-spacing rule.
struct RecipeConfig {
  std::vector<int> node_counts;
  bool include_coordinates = false;
  std::vector<double> bandwidth_override;
};

FeatureRecipe build_recipe(const RecipeConfig& config, const BBox& data_bbox,
                           int covariate_count);

}  // namespace csqr
