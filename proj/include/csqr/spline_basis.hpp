#pragma once

#include <span>
#include <vector>

namespace csqr {

// Second-order M-spline / I-spline basis on [0,1] with equally spaced
// interior knots and order-many duplicated boundary knots (Ramsay 1988).
// M_k is a nonnegative piecewise-linear density integrating to one;
// I_k(y) = int_0^y M_k is its CDF.
struct SplineGrid {
  static constexpr int kOrder = 2;

  int basis_count = 0;        // K
  std::vector<double> knots;  // length K + kOrder
};

// K >= 2 basis functions; throws config_error otherwise.
SplineGrid build_grid(int basis_count);

// k is 1-based in [1, K].  Outside [0,1] the value is 0; at interior knots
// evaluation is right-continuous (order 2 is continuous anyway); at y = 1
// the upper-boundary basis returns its left limit so the mixture stays a
// density on the closed interval.
double eval_m(const SplineGrid& grid, int k, double y);

// Closed-form integral of eval_m; 0 below the support, 1 above it.
double eval_i(const SplineGrid& grid, int k, double y);

// All K values of both bases in one pass; out spans must have size K.
void eval_all(const SplineGrid& grid, double y, std::span<double> m_out,
              std::span<double> i_out);

}  // namespace csqr
