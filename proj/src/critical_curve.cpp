#include "mrperc/critical_curve.hpp"

#include <cmath>
#include <string>

#include "mrperc/errors.hpp"
#include "mrperc/window_chain.hpp"

namespace mrperc {

SpectralResult<double> rho_full(double p, double q, const TreeParams& params,
                                const RhoOptions& opts, const SpectralResult<double>* warm) {
  const WindowChain chain(params, PercParams::make(p, q));
  const OffspringMatrix M = chain.build_M(opts.threads);
  return pf_eigen(M, opts.pf, warm);
}

double rho(double p, double q, const TreeParams& params, const RhoOptions& opts) {
  return rho_full(p, q, params, opts).rho;
}

double lower_bound(double p, const TreeParams& params) {
  const double lb = (1.0 - static_cast<double>(params.d()) * p) / static_cast<double>(params.long_fanout());
  return lb > 0.0 ? lb : 0.0;
}

CurvePoint qc(double p, const TreeParams& params, double tol, const RhoOptions& opts) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("qc: p must lie in [0,1]");
  if (!(tol > 0.0)) throw ParameterError("qc: tol must be positive");
  CurvePoint pt;
  pt.p = p;
  pt.lower_bound = lower_bound(p, params);
  const double d = static_cast<double>(params.d());
  if (p > 1.0 / d - kBoundaryEps) {
    pt.q_c = 0.0;
    pt.gap = pt.q_c - pt.lower_bound;
    return pt;
  }

  // At q = 0 only short edges remain and rho = pd < 1; the matrix is
  // reducible there, so that end of the bracket is not solved numerically.
  double lo = 0.0;
  double hi = 1.0 / static_cast<double>(params.long_fanout());
  SpectralResult<double> warm = rho_full(p, hi, params, opts);
  ++pt.eigen_solves;
  // At p = 0, q = d^{-k} is exactly critical; allow for rounding there.
  if (warm.rho < 1.0 - kCriticalRhoTol) {
    throw ConsistencyError("qc: rho(p, d^{-k}) = " + std::to_string(warm.rho) +
                           " < 1, the bracket [0, d^{-k}] does not contain q_c");
  }
  if (warm.rho <= 1.0 + kCriticalRhoTol) {
    pt.q_c = hi;
    pt.rho_residual = std::abs(warm.rho - 1.0);
    pt.gap = pt.q_c - pt.lower_bound;
    return pt;
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    warm = rho_full(p, mid, params, opts, &warm);
    ++pt.eigen_solves;
    if (warm.rho > 1.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  pt.q_c = 0.5 * (lo + hi);
  pt.bisection_width = hi - lo;
  pt.rho_residual = std::abs(rho_full(p, pt.q_c, params, opts, &warm).rho - 1.0);
  ++pt.eigen_solves;
  pt.gap = pt.q_c - pt.lower_bound;
  return pt;
}

Sweep qc_sweep(const std::vector<double>& grid, const TreeParams& params, double tol,
               const RhoOptions& opts) {
  Sweep sweep;
  for (double p : grid) sweep.points.push_back(qc(p, params, tol, opts));
  for (std::size_t i = 1; i < sweep.points.size(); ++i) {
    const CurvePoint& a = sweep.points[i - 1];
    const CurvePoint& b = sweep.points[i];
    if (a.q_c <= 0.0) continue;  // zero region: nothing left to decrease
    if (!(b.p > a.p && b.q_c < a.q_c)) sweep.strictly_decreasing = false;
  }
  return sweep;
}

double s_star(double p, int d) {
  const double p2d = p * p * d;
  if (!(p2d < 1.0)) throw DomainError("s_star requires p^2 d < 1");
  const double a = 1.0 - p * d;
  return a * a * p2d / (1.0 - p2d);
}

std::vector<AsymptoticsRow> asymptotics_table(double p, int d, int k_min, int k_max, double tol,
                                              const RhoOptions& opts) {
  if (k_min < 2 || k_max < k_min) throw ParameterError("asymptotics_table: need 2 <= k_min <= k_max");
  if (!(p * d < 1.0)) throw DomainError("asymptotics_table requires pd < 1");
  const double star = s_star(p, d);
  std::vector<AsymptoticsRow> rows;
  for (int k = k_min; k <= k_max; ++k) {
    const TreeParams params(d, k);
    // Fail before any work if the chain does not fit.
    WindowChain(params, PercParams::make(p, 0.0));
    AsymptoticsRow row;
    row.k = k;
    row.q_c = qc(p, params, tol, opts).q_c;
    const double dk = static_cast<double>(params.long_fanout());
    row.s_k = dk * dk * (row.q_c - (1.0 - p * d) / dk);
    row.s_star = star;
    row.residual = std::abs(row.s_k - star);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mrperc
