#ifndef MRPERC_CRITICAL_CURVE_HPP
#define MRPERC_CRITICAL_CURVE_HPP

// q_c(p) as the root of rho(p, q) = 1, where rho is the Perron-Frobenius
// eigenvalue of the window chain's mean matrix.

#include <vector>

#include "mrperc/spectral.hpp"
#include "mrperc/tree_model.hpp"

namespace mrperc {

inline constexpr double kDefaultQcTol = 1e-10;
// p above 1/d - kBoundaryEps is treated as p > 1/d.
inline constexpr double kBoundaryEps = 1e-12;
// rho within this of 1 at q = d^{-k} means the upper end is the root.
inline constexpr double kCriticalRhoTol = 1e-9;

struct CurvePoint {
  double p = 0.0;
  double q_c = 0.0;
  double lower_bound = 0.0;      // max(0, (1 - dp) / d^k)
  double gap = 0.0;              // q_c - lower_bound
  double rho_residual = 0.0;     // |rho(p, q_c) - 1|
  double bisection_width = 0.0;
  int eigen_solves = 0;
};

struct AsymptoticsRow {
  int k = 0;
  double q_c = 0.0;
  double s_k = 0.0;     // d^{2k} (q_c - (1 - pd)/d^k)
  double s_star = 0.0;
  double residual = 0.0;
};

struct RhoOptions {
  PfOptions pf;
  unsigned threads = 1;
};

double rho(double p, double q, const TreeParams& params, const RhoOptions& opts = {});

// Spectral solve with an optional warm start; exposes the eigenvectors.
SpectralResult<double> rho_full(double p, double q, const TreeParams& params,
                                const RhoOptions& opts = {},
                                const SpectralResult<double>* warm = nullptr);

double lower_bound(double p, const TreeParams& params);

// Bisection on sign(rho - 1) over [0, d^{-k}]. Throws ConsistencyError if the
// bracket fails.
CurvePoint qc(double p, const TreeParams& params, double tol = kDefaultQcTol,
              const RhoOptions& opts = {});

struct Sweep {
  std::vector<CurvePoint> points;
  bool strictly_decreasing = true;  // over the points with q_c > 0, plus the first zero
};
Sweep qc_sweep(const std::vector<double>& grid, const TreeParams& params,
               double tol = kDefaultQcTol, const RhoOptions& opts = {});

// (1 - pd)^2 p^2 d / (1 - p^2 d); DomainError unless p^2 d < 1.
double s_star(double p, int d);

std::vector<AsymptoticsRow> asymptotics_table(double p, int d, int k_min, int k_max,
                                              double tol = kDefaultQcTol,
                                              const RhoOptions& opts = {});

}  // namespace mrperc

#endif  // MRPERC_CRITICAL_CURVE_HPP
