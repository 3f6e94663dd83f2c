#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "csqr/common.hpp"

namespace csqr {

// Column-oriented observational dataset.  Required columns: y, t (0/1),
// lon, lat; covariates are any further numeric columns.  Simulated data
// additionally carries the oracle block (rep, h1..h3, u) used only for
// evaluation against the generating truth.
struct Dataset {
  std::vector<std::string> covariate_names;

  std::vector<double> y;
  std::vector<double> t;
  std::vector<double> lon;
  std::vector<double> lat;
  std::vector<std::vector<double>> x;  // one column per covariate

  bool has_oracle = false;
  std::vector<int> rep;
  std::array<std::vector<double>, 3> h;
  std::vector<double> u;

  std::size_t size() const { return y.size(); }
  int covariate_count() const { return static_cast<int>(x.size()); }
  Point location(std::size_t i) const { return {lon[i], lat[i]}; }
  std::vector<double> covariate_row(std::size_t i) const;

  BBox coord_bbox() const;
};

// Row subset preserving the given order.
Dataset select_rows(const Dataset& data, std::span<const int> rows);

// Observations sharing one exact coordinate pair.
struct LocationGroup {
  Point location;
  std::vector<int> rows;
};

// Groups in order of first appearance; coordinates compared exactly.
std::vector<LocationGroup> group_by_location(const Dataset& data);

// CSV, UTF-8, header row, '.' decimal separator.  Reader auto-detects
// covariate columns; missing required columns raise a data_error naming
// the column.  with_oracle controls whether rep/h/u columns are written.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const std::string& path, const Dataset& data,
                       bool with_oracle);

}  // namespace csqr
