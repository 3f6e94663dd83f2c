#include "csqr/spline_basis.hpp"

#include <stdexcept>

#include "csqr/common.hpp"

namespace csqr {

SplineGrid build_grid(int basis_count) {
  if (basis_count < 2) {
    throw config_error("spline basis needs at least 2 functions, got " +
                       std::to_string(basis_count));
  }
  SplineGrid grid;
  grid.basis_count = basis_count;
  grid.knots.resize(static_cast<std::size_t>(basis_count) + SplineGrid::kOrder);
  // knots[0..1] = 0, knots[K..K+1] = 1, interior equally spaced.
  const int intervals = basis_count - 1;
  grid.knots[0] = 0.0;
  for (int j = 0; j <= intervals; ++j) {
    grid.knots[static_cast<std::size_t>(j) + 1] =
        static_cast<double>(j) / intervals;
  }
  grid.knots.back() = 1.0;
  return grid;
}

namespace {

inline void check_index(const SplineGrid& grid, int k) {
  if (k < 1 || k > grid.basis_count) {
    throw std::out_of_range("spline basis index " + std::to_string(k) +
                            " outside [1," + std::to_string(grid.basis_count) +
                            "]");
  }
}

}  // namespace

double eval_m(const SplineGrid& grid, int k, double y) {
  check_index(grid, k);
  const double t0 = grid.knots[static_cast<std::size_t>(k) - 1];
  const double t1 = grid.knots[static_cast<std::size_t>(k)];
  const double t2 = grid.knots[static_cast<std::size_t>(k) + 1];
  if (y < t0 || y > t2) return 0.0;
  const double span = t2 - t0;
  // The final basis has t1 == t2 == 1; evaluate its rising piece at y == 1.
  if (y < t1 || (y == 1.0 && t1 == 1.0)) {
    return 2.0 * (y - t0) / (span * (t1 - t0));
  }
  const double w = t2 - t1;
  if (w <= 0.0) return 0.0;
  return 2.0 * (t2 - y) / (span * w);
}

double eval_i(const SplineGrid& grid, int k, double y) {
  check_index(grid, k);
  const double t0 = grid.knots[static_cast<std::size_t>(k) - 1];
  const double t1 = grid.knots[static_cast<std::size_t>(k)];
  const double t2 = grid.knots[static_cast<std::size_t>(k) + 1];
  if (y <= t0) return 0.0;
  if (y >= t2) return 1.0;
  const double span = t2 - t0;
  if (y < t1) {
    const double d = y - t0;
    return d * d / (span * (t1 - t0));
  }
  const double d = t2 - y;
  return 1.0 - d * d / (span * (t2 - t1));
}

void eval_all(const SplineGrid& grid, double y, std::span<double> m_out,
              std::span<double> i_out) {
  for (int k = 1; k <= grid.basis_count; ++k) {
    m_out[static_cast<std::size_t>(k) - 1] = eval_m(grid, k, y);
    i_out[static_cast<std::size_t>(k) - 1] = eval_i(grid, k, y);
  }
}

}  // namespace csqr
