#include "csqr/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace csqr {

std::vector<ReportRow> report_rows(const RmiseReport& report) {
  std::vector<ReportRow> rows;
  const auto T = report.tau_grid.size();
  const auto P = report.locations.size();
  for (std::size_t v = 0; v < report.variants.size(); ++v) {
    const auto& variant = report.variants[v];
    ReportRow base;
    base.variant = variant.id;
    base.adjusted = variant.adjusted ? variant.coverage : 0.0;
    base.scenario = report.scenario;
    for (std::size_t ti = 0; ti < T; ++ti) {
      ReportRow r = base;
      r.tau = report.tau_grid[ti];
      r.metric = "response_rmise";
      r.mean = report.response_curve_mean[v][ti];
      r.sd = report.response_curve_sd[v][ti];
      rows.push_back(r);
      r.metric = "sqte_rmise";
      r.mean = report.sqte_curve_mean[v][ti];
      r.sd = report.sqte_curve_sd[v][ti];
      rows.push_back(r);
    }
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t ti = 0; ti < T; ++ti) {
        ReportRow r = base;
        r.tau = report.tau_grid[ti];
        r.location = report.locations[p];
        r.metric = "response_rmise";
        r.mean = report.response_map_mean[v](static_cast<Eigen::Index>(p),
                                             static_cast<Eigen::Index>(ti));
        r.sd = report.response_map_sd[v](static_cast<Eigen::Index>(p),
                                         static_cast<Eigen::Index>(ti));
        rows.push_back(r);
        r.metric = "sqte_rmise";
        r.mean = report.sqte_map_rmise[v](static_cast<Eigen::Index>(p),
                                          static_cast<Eigen::Index>(ti));
        r.sd = report.sqte_map_sd[v](static_cast<Eigen::Index>(p),
                                     static_cast<Eigen::Index>(ti));
        rows.push_back(r);
      }
    }
  }
  return rows;
}

void write_report_csv(const std::string& path, const RmiseReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open '" + path + "' for writing");
  out << "variant,adjusted,scenario,tau,lon,lat,metric,mean,sd\n";
  for (const ReportRow& r : report_rows(report)) {
    out << r.variant << ',' << format_double(r.adjusted) << ',' << r.scenario
        << ',' << format_double(r.tau) << ',';
    if (r.location) out << format_double(r.location->x);
    out << ',';
    if (r.location) out << format_double(r.location->y);
    out << ',' << r.metric << ',' << format_double(r.mean) << ','
        << format_double(r.sd) << '\n';
  }
  if (!out) throw data_error("failed writing '" + path + "'");
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::vector<ReportRow> read_report_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open report file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty report file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "variant,adjusted,scenario,tau,lon,lat,metric,mean,sd")
    throw data_error("unexpected report header: " + line);
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9)
      throw data_error("report line " + std::to_string(lineno) + " has " +
                       std::to_string(f.size()) + " fields, expected 9");
    ReportRow r;
    r.variant = static_cast<int>(parse_double(f[0], "variant"));
    r.adjusted = parse_double(f[1], "adjusted");
    r.scenario = static_cast<int>(parse_double(f[2], "scenario"));
    r.tau = parse_double(f[3], "tau");
    if (!f[4].empty() != !f[5].empty())
      throw data_error("report line " + std::to_string(lineno) +
                       ": lon/lat must both be present or both empty");
    if (!f[4].empty())
      r.location = Point{parse_double(f[4], "lon"), parse_double(f[5], "lat")};
    r.metric = f[6];
    r.mean = parse_double(f[7], "mean");
    r.sd = parse_double(f[8], "sd");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw data_error("report file has no data rows");
  return rows;
}

namespace {

// Pixel coordinates are rounded to 1/100 so the SVG stays readable; the
// rounding is itself deterministic.
std::string px(double v) { return format_double(std::round(v * 100.0) / 100.0); }

std::string series_color(int variant) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e"};
  return palette[(variant - 1) % 5];
}

std::string series_label(int variant, double adjusted) {
  std::string label = "Model " + std::to_string(variant);
  if (adjusted > 0.0) label += " AD " + format_double(adjusted);
  return label;
}

double log10_clamped(double v) { return std::log10(std::max(v, 1e-12)); }

struct SeriesKey {
  int variant;
  double adjusted;
  bool operator<(const SeriesKey& o) const {
    if (variant != o.variant) return variant < o.variant;
    return adjusted < o.adjusted;
  }
};

void svg_open(std::ostringstream& s, int w, int h) {
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
    << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
}

void svg_text(std::ostringstream& s, double x, double y,
              const std::string& anchor, int size, const std::string& text) {
  s << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" text-anchor=\""
    << anchor << "\" font-family=\"sans-serif\" font-size=\"" << size << "\">"
    << text << "</text>\n";
}

}  // namespace

std::string svg_curves(std::span<const ReportRow> rows,
                       const std::string& metric, int replicates,
                       const std::string& title) {
  if (replicates < 1) throw config_error("replicates must be positive");
  std::map<SeriesKey, std::map<double, std::pair<double, double>>> series;
  for (const ReportRow& r : rows) {
    if (r.metric != metric || r.location) continue;
    series[{r.variant, r.adjusted}][r.tau] = {r.mean, r.sd};
  }
  if (series.empty())
    throw data_error("no curve rows for metric '" + metric + "'");

  const int W = 720, H = 480;
  const double L = 70, R = 540, T = 48, B = 430;
  double tau_min = 1.0, tau_max = 0.0;
  double y_min = 1e300, y_max = -1e300;
  for (const auto& [key, points] : series) {
    for (const auto& [tau, ms] : points) {
      tau_min = std::min(tau_min, tau);
      tau_max = std::max(tau_max, tau);
      const double lg = log10_clamped(ms.first);
      y_min = std::min(y_min, lg);
      y_max = std::max(y_max, lg);
    }
  }
  if (!(tau_max > tau_min)) {
    tau_min -= 0.05;
    tau_max += 0.05;
  }
  if (!(y_max > y_min)) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;
  const auto sx = [&](double tau) {
    return L + (R - L) * (tau - tau_min) / (tau_max - tau_min);
  };
  const auto sy = [&](double lg) {
    return B - (B - T) * (lg - y_min) / (y_max - y_min);
  };

  std::ostringstream s;
  svg_open(s, W, H);
  svg_text(s, (L + R) / 2, 24, "middle", 15, title);

  // Axes and ticks.
  s << "<line x1=\"" << px(L) << "\" y1=\"" << px(B) << "\" x2=\"" << px(R)
    << "\" y2=\"" << px(B) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << px(L) << "\" y1=\"" << px(T) << "\" x2=\"" << px(L)
    << "\" y2=\"" << px(B) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tau = tau_min + (tau_max - tau_min) * i / 4.0;
    const double x = sx(tau);
    s << "<line x1=\"" << px(x) << "\" y1=\"" << px(B) << "\" x2=\"" << px(x)
      << "\" y2=\"" << px(B + 5) << "\" stroke=\"black\"/>\n";
    svg_text(s, x, B + 20, "middle", 11,
             format_double(std::round(tau * 100.0) / 100.0));
    const double lg = y_min + (y_max - y_min) * i / 4.0;
    const double y = sy(lg);
    s << "<line x1=\"" << px(L - 5) << "\" y1=\"" << px(y) << "\" x2=\""
      << px(L) << "\" y2=\"" << px(y) << "\" stroke=\"black\"/>\n";
    svg_text(s, L - 9, y + 4, "end", 11,
             format_double(std::round(lg * 100.0) / 100.0));
  }
  svg_text(s, (L + R) / 2, B + 40, "middle", 12, "tau");
  s << "<text x=\"" << px(18) << "\" y=\"" << px((T + B) / 2)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
    << " transform=\"rotate(-90 " << px(18) << ' ' << px((T + B) / 2)
    << ")\">log10 RMISE</text>\n";

  // Confidence bands first so lines draw on top.
  const double half_width = 1.96 / std::sqrt(static_cast<double>(replicates));
  for (const auto& [key, points] : series) {
    std::ostringstream up, down;
    for (const auto& [tau, ms] : points) {
      const double hi =
          std::clamp(log10_clamped(ms.first + half_width * ms.second), y_min,
                     y_max);
      up << px(sx(tau)) << ',' << px(sy(hi)) << ' ';
    }
    for (auto it = points.rbegin(); it != points.rend(); ++it) {
      const double lo =
          std::clamp(log10_clamped(it->second.first -
                                   half_width * it->second.second),
                     y_min, y_max);
      down << px(sx(it->first)) << ',' << px(sy(lo)) << ' ';
    }
    s << "<polygon points=\"" << up.str() << down.str() << "\" fill=\""
      << series_color(key.variant) << "\" fill-opacity=\"0.15\" "
      << "stroke=\"none\"/>\n";
  }
  for (const auto& [key, points] : series) {
    s << "<polyline fill=\"none\" stroke=\"" << series_color(key.variant)
      << "\" stroke-width=\"1.8\"";
    if (key.adjusted > 0.0) s << " stroke-dasharray=\"6 3\"";
    s << " points=\"";
    for (const auto& [tau, ms] : points)
      s << px(sx(tau)) << ',' << px(sy(log10_clamped(ms.first))) << ' ';
    s << "\"/>\n";
  }

  // Legend.
  double ly = T + 10;
  for (const auto& [key, points] : series) {
    s << "<line x1=\"" << px(R + 16) << "\" y1=\"" << px(ly - 4) << "\" x2=\""
      << px(R + 44) << "\" y2=\"" << px(ly - 4) << "\" stroke=\""
      << series_color(key.variant) << "\" stroke-width=\"1.8\"";
    if (key.adjusted > 0.0) s << " stroke-dasharray=\"6 3\"";
    s << "/>\n";
    svg_text(s, R + 50, ly, "start", 11,
             series_label(key.variant, key.adjusted));
    ly += 18;
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_map(std::span<const ReportRow> rows, const std::string& metric,
                    double tau, const std::string& title) {
  struct Cell {
    Point loc;
    double mean;
  };
  std::map<SeriesKey, std::vector<Cell>> panels;
  double v_min = 1e300, v_max = -1e300;
  double lon_min = 1e300, lon_max = -1e300, lat_min = 1e300, lat_max = -1e300;
  for (const ReportRow& r : rows) {
    if (r.metric != metric || !r.location || r.tau != tau) continue;
    panels[{r.variant, r.adjusted}].push_back({*r.location, r.mean});
    v_min = std::min(v_min, r.mean);
    v_max = std::max(v_max, r.mean);
    lon_min = std::min(lon_min, r.location->x);
    lon_max = std::max(lon_max, r.location->x);
    lat_min = std::min(lat_min, r.location->y);
    lat_max = std::max(lat_max, r.location->y);
  }
  if (panels.empty())
    throw data_error("no map rows for metric '" + metric + "' at tau " +
                     format_double(tau));
  if (!(lon_max > lon_min)) lon_max = lon_min + 1.0;
  if (!(lat_max > lat_min)) lat_max = lat_min + 1.0;

  std::set<int> variant_ids;
  std::set<double> adjust_levels;
  for (const auto& [key, cells] : panels) {
    variant_ids.insert(key.variant);
    adjust_levels.insert(key.adjusted);
  }
  const int cols = static_cast<int>(variant_ids.size());
  const int nrows = static_cast<int>(adjust_levels.size());
  const int panel = 200, gap = 14, top = 56, left = 16;
  const int W = left * 2 + cols * panel + (cols - 1) * gap;
  const int H = top + nrows * (panel + 34);

  std::ostringstream s;
  svg_open(s, W, H);
  svg_text(s, W / 2.0, 26, "middle", 15, title);

  const auto radius = [&](double v) {
    if (!(v_max > v_min)) return 4.0;
    return 1.5 + 6.5 * (v - v_min) / (v_max - v_min);
  };

  int row_idx = 0;
  for (double adj : adjust_levels) {
    int col_idx = 0;
    for (int id : variant_ids) {
      const auto it = panels.find({id, adj});
      const double x0 = left + col_idx * (panel + gap);
      const double y0 = top + row_idx * (panel + 34);
      if (it != panels.end()) {
        svg_text(s, x0 + panel / 2.0, y0 - 6, "middle", 12,
                 series_label(id, adj));
        s << "<rect x=\"" << px(x0) << "\" y=\"" << px(y0) << "\" width=\""
          << panel << "\" height=\"" << panel
          << "\" fill=\"none\" stroke=\"#999999\"/>\n";
        const double inner = 14;
        for (const Cell& c : it->second) {
          const double cx = x0 + inner +
                            (panel - 2 * inner) * (c.loc.x - lon_min) /
                                (lon_max - lon_min);
          const double cy = y0 + panel - inner -
                            (panel - 2 * inner) * (c.loc.y - lat_min) /
                                (lat_max - lat_min);
          s << "<circle cx=\"" << px(cx) << "\" cy=\"" << px(cy) << "\" r=\""
            << px(radius(c.mean)) << "\" fill=\"" << series_color(id)
            << "\" fill-opacity=\"0.6\"/>\n";
        }
      }
      ++col_idx;
    }
    ++row_idx;
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace csqr
