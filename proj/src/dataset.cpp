#include "csqr/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace csqr {

std::vector<double> Dataset::covariate_row(std::size_t i) const {
  std::vector<double> row(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) row[j] = x[j][i];
  return row;
}

BBox Dataset::coord_bbox() const {
  if (lon.empty()) throw data_error("empty dataset has no bounding box");
  BBox box{lon[0], lat[0], lon[0], lat[0]};
  for (std::size_t i = 1; i < lon.size(); ++i) {
    box.xmin = std::min(box.xmin, lon[i]);
    box.xmax = std::max(box.xmax, lon[i]);
    box.ymin = std::min(box.ymin, lat[i]);
    box.ymax = std::max(box.ymax, lat[i]);
  }
  return box;
}

Dataset select_rows(const Dataset& data, std::span<const int> rows) {
  Dataset out;
  out.covariate_names = data.covariate_names;
  out.has_oracle = data.has_oracle;
  out.x.resize(data.x.size());
  auto take = [&rows](const std::vector<double>& col) {
    std::vector<double> sub;
    sub.reserve(rows.size());
    for (int r : rows) sub.push_back(col[static_cast<std::size_t>(r)]);
    return sub;
  };
  out.y = take(data.y);
  out.t = take(data.t);
  out.lon = take(data.lon);
  out.lat = take(data.lat);
  for (std::size_t j = 0; j < data.x.size(); ++j) out.x[j] = take(data.x[j]);
  if (data.has_oracle) {
    out.rep.reserve(rows.size());
    for (int r : rows) out.rep.push_back(data.rep[static_cast<std::size_t>(r)]);
    for (int j = 0; j < 3; ++j) out.h[j] = take(data.h[j]);
    out.u = take(data.u);
  }
  return out;
}

std::vector<LocationGroup> group_by_location(const Dataset& data) {
  std::vector<LocationGroup> groups;
  std::map<std::pair<double, double>, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto key = std::make_pair(data.lon[i], data.lat[i]);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      groups.push_back({{data.lon[i], data.lat[i]}, {static_cast<int>(i)}});
    } else {
      groups[it->second].rows.push_back(static_cast<int>(i));
    }
  }
  return groups;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);

  // Column roles by name; anything unrecognized is a covariate.
  int col_y = -1, col_t = -1, col_lon = -1, col_lat = -1, col_rep = -1,
      col_u = -1;
  std::array<int, 3> col_h{-1, -1, -1};
  std::vector<int> covariate_cols;
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    const int ci = static_cast<int>(c);
    if (name == "y") col_y = ci;
    else if (name == "t") col_t = ci;
    else if (name == "lon") col_lon = ci;
    else if (name == "lat") col_lat = ci;
    else if (name == "rep") col_rep = ci;
    else if (name == "u") col_u = ci;
    else if (name == "h1") col_h[0] = ci;
    else if (name == "h2") col_h[1] = ci;
    else if (name == "h3") col_h[2] = ci;
    else {
      covariate_cols.push_back(ci);
      data.covariate_names.push_back(name);
    }
  }
  for (const auto& [col, name] :
       {std::pair{col_y, "y"}, {col_t, "t"}, {col_lon, "lon"},
        {col_lat, "lat"}}) {
    if (col < 0) {
      throw data_error("dataset '" + path + "' is missing required column '" +
                       std::string(name) + "'");
    }
  }
  data.has_oracle = col_u >= 0 && col_h[0] >= 0 && col_h[1] >= 0 &&
                    col_h[2] >= 0 && col_rep >= 0;
  data.x.resize(covariate_cols.size());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw data_error("row " + std::to_string(line_no) + " of '" + path +
                       "' has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    }
    auto num = [&](int col) {
      return parse_double(fields[static_cast<std::size_t>(col)],
                          "column '" + header[static_cast<std::size_t>(col)] +
                              "', row " + std::to_string(line_no));
    };
    data.y.push_back(num(col_y));
    const double t = num(col_t);
    if (t != 0.0 && t != 1.0) {
      throw data_error("column 't' must be 0 or 1 (row " +
                       std::to_string(line_no) + ")");
    }
    data.t.push_back(t);
    data.lon.push_back(num(col_lon));
    data.lat.push_back(num(col_lat));
    for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
      data.x[j].push_back(num(covariate_cols[j]));
    }
    if (data.has_oracle) {
      data.rep.push_back(static_cast<int>(num(col_rep)));
      for (int j = 0; j < 3; ++j) data.h[j].push_back(num(col_h[j]));
      data.u.push_back(num(col_u));
    }
  }
  return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data,
                       bool with_oracle) {
  if (with_oracle && !data.has_oracle) {
    throw data_error("dataset carries no oracle columns to write");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write dataset file '" + path + "'");
  if (with_oracle) out << "rep,";
  out << "lon,lat,y,t";
  for (const auto& name : data.covariate_names) out << ',' << name;
  if (with_oracle) out << ",h1,h2,h3,u";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (with_oracle) out << data.rep[i] << ',';
    out << format_double(data.lon[i]) << ',' << format_double(data.lat[i])
        << ',' << format_double(data.y[i]) << ','
        << format_double(data.t[i]);
    for (const auto& col : data.x) out << ',' << format_double(col[i]);
    if (with_oracle) {
      for (int j = 0; j < 3; ++j) out << ',' << format_double(data.h[j][i]);
      out << ',' << format_double(data.u[i]);
    }
    out << '\n';
  }
  if (!out) throw data_error("failed writing dataset file '" + path + "'");
}

}  // namespace csqr
