#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csqr/eval_harness.hpp"

namespace csqr {

// One cell of the long-format report CSV
// (variant,adjusted,scenario,tau,lon,lat,metric,mean,sd).  Curve rows have
// no location; the adjusted column carries the coverage rho (0 when the
// variant is unadjusted).
struct ReportRow {
  int variant = 1;
  double adjusted = 0.0;
  int scenario = 1;
  double tau = 0.5;
  std::optional<Point> location;
  std::string metric;  // "response_rmise" | "sqte_rmise"
  double mean = 0.0;
  double sd = 0.0;
};

std::vector<ReportRow> report_rows(const RmiseReport& report);
void write_report_csv(const std::string& path, const RmiseReport& report);
std::vector<ReportRow> read_report_csv(const std::string& path);

// Standalone SVG renderings; all numeric output is shortest round-trip
// formatted, so identical inputs give identical bytes.
//
// Curves: log10(mean) RMISE against tau, one series per (variant,
// adjusted), with a +-1.96 sd/sqrt(replicates) band.
std::string svg_curves(std::span<const ReportRow> rows,
                       const std::string& metric, int replicates,
                       const std::string& title);

// Map panels at one tau: per series a lattice of circles with area scaled
// by the mean RMISE (the paper's "point size proportional to" encoding).
std::string svg_map(std::span<const ReportRow> rows, const std::string& metric,
                    double tau, const std::string& title);

}  // namespace csqr
