#include "mrperc/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "mrperc/errors.hpp"
#include "mrperc/parallel.hpp"

namespace mrperc {

namespace {

constexpr VertexKey kHatRootKey = 0x13198A2E03707344ULL;

VertexKey hat_key(const VertexPath& v) { return key_of(v, kHatRootKey); }

}  // namespace

PhiMap::PhiMap(const TreeParams& params) : params_(params) {
  if (params.long_fanout() > static_cast<std::uint64_t>(1) << 30) {
    throw CapExceeded("PhiMap: d^k too large for wide-tree digits");
  }
}

bool PhiMap::is_long(int digit) const {
  if (digit < 1 || digit > wide_degree()) {
    throw ParameterError("wide digit " + std::to_string(digit) + " outside [1, " +
                         std::to_string(wide_degree()) + "]");
  }
  return digit > params_.d();
}

VertexPath PhiMap::phi(int digit) const {
  if (!is_long(digit)) return VertexPath{digit};
  return long_selector_path(static_cast<std::uint64_t>(digit - params_.d() - 1), params_);
}

VertexPath PhiMap::Phi(const VertexPath& wide) const {
  VertexPath out;
  for (int digit : wide.digits) out = concat(out, phi(digit));
  return out;
}

int PhiMap::image_height(const VertexPath& wide) const {
  int h = 0;
  for (int digit : wide.digits) h += is_long(digit) ? params_.k() : 1;
  return h;
}

bool RandomHatConfig::open(const VertexPath& tail, int digit) const {
  const double u = philox_uniform(seed_, hat_key(tail),
                                  (std::uint64_t{static_cast<std::uint32_t>(EdgeKind::Hat)} << 32) ^
                                      static_cast<std::uint64_t>(digit));
  return u < (phi_.is_long(digit) ? perc_.q : perc_.p);
}

bool OmegaBar::open(const VertexPath& tail, int digit) const {
  if (tail.is_root()) return true;
  if (phi_.is_long(tail.digits.front())) return true;
  // Below a short child of the root: short-kind edges up to wide height k.
  return !phi_.is_long(digit) && height(tail) + 1 <= phi_.params().k();
}

std::uint64_t slab_leaf_total(const TreeParams& params) {
  std::uint64_t total = 0;
  for (int h = 2 * params.k(); h < 3 * params.k(); ++h) {
    std::uint64_t level = 1;
    for (int j = 0; j < h; ++j) level *= static_cast<std::uint64_t>(params.d());
    total += level;
  }
  return total;
}

std::uint64_t leaf_count_Z(const TreeParams& params, const EdgeOracle& oracle) {
  const int k = params.k();
  std::set<VertexPath> seen{root()};
  std::vector<std::pair<VertexPath, VertexKey>> stack{{root(), kRootKey}};
  std::uint64_t leaves = 0;
  auto visit = [&](VertexPath w, VertexKey key) {
    if (!seen.insert(w).second) return;
    if (height(w) >= 2 * k) {
      ++leaves;
    } else {
      stack.emplace_back(std::move(w), key);
    }
  };
  while (!stack.empty()) {
    auto [v, key] = std::move(stack.back());
    stack.pop_back();
    for (int j = 1; j <= params.d(); ++j) {
      if (oracle.short_open(key, j)) visit(child(v, j), child_key(key, j));
    }
    for (std::uint64_t s = 0; s < params.long_fanout(); ++s) {
      if (oracle.long_open(key, s)) {
        visit(concat(v, long_selector_path(s, params)), long_child_key(key, s, params));
      }
    }
  }
  return leaves;
}

std::uint64_t leaf_count_Zhat(const PhiMap& phi, const HatConfig& config) {
  const int k = phi.params().k();
  std::vector<std::pair<VertexPath, int>> stack{{root(), 0}};
  std::uint64_t leaves = 0;
  while (!stack.empty()) {
    auto [v, h] = std::move(stack.back());
    stack.pop_back();
    for (int digit = 1; digit <= phi.wide_degree(); ++digit) {
      if (!config.open(v, digit)) continue;
      const int hr = h + (phi.is_long(digit) ? k : 1);
      if (hr >= 2 * k) {
        ++leaves;
      } else {
        stack.emplace_back(child(v, digit), hr);
      }
    }
  }
  return leaves;
}

int hat_root_degree(const PhiMap& phi, const HatConfig& config) {
  int n = 0;
  for (int digit = 1; digit <= phi.wide_degree(); ++digit) n += config.open(root(), digit);
  return n;
}

HatExploration explore_hat_to_C(const PhiMap& phi, const HatConfig& config) {
  const int k = phi.params().k();
  std::set<VertexPath> C{root()};
  HatExploration out;
  out.explored.push_back(root());

  // Closure from `starts` over edges of one kind; returns the non-conflict
  // wide vertices added.
  auto closure = [&](const std::vector<VertexPath>& starts, bool long_kind) {
    std::vector<VertexPath> added;
    std::vector<VertexPath> stack = starts;
    while (!stack.empty()) {
      VertexPath v = std::move(stack.back());
      stack.pop_back();
      if (phi.image_height(v) >= 2 * k) continue;  // leaf: no slab edges out
      for (int digit = 1; digit <= phi.wide_degree(); ++digit) {
        if (phi.is_long(digit) != long_kind || !config.open(v, digit)) continue;
        VertexPath r = child(v, digit);
        out.explored.push_back(r);
        if (!C.insert(phi.Phi(r)).second) {
          out.conflicts.push_back(std::move(r));
          continue;
        }
        added.push_back(r);
        stack.push_back(std::move(r));
      }
    }
    return added;
  };

  std::vector<VertexPath> step1 = closure({root()}, false);
  step1.insert(step1.begin(), root());
  const std::vector<VertexPath> step2 = closure(step1, true);
  const std::vector<VertexPath> step3 = closure(step2, false);
  closure(step3, true);

  out.cluster.assign(C.begin(), C.end());
  for (const auto& v : out.cluster) {
    if (height(v) >= 2 * k && height(v) < 3 * k) ++out.leaves;
  }
  std::sort(out.explored.begin(), out.explored.end());
  std::sort(out.conflicts.begin(), out.conflicts.end());
  return out;
}

// --- Finite coupling -----------------------------------------------------------

namespace {

void check_pmf(const Eigen::VectorXd& P, const char* name) {
  if ((P.array() < 0.0).any() || !P.allFinite()) {
    throw ParameterError(std::string(name) + " has a negative or non-finite mass");
  }
  if (std::abs(P.sum() - 1.0) > 1e-12) {
    throw ParameterError(std::string(name) + " sums to " + std::to_string(P.sum()) + ", not 1");
  }
}

}  // namespace

CouplingTable finite_coupling(const Eigen::VectorXd& P1, const Eigen::VectorXd& P2,
                              Eigen::Index x_bar) {
  if (P1.size() != P2.size() || P1.size() == 0) throw ParameterError("finite_coupling: size mismatch");
  if (x_bar < 0 || x_bar >= P1.size()) throw ParameterError("finite_coupling: x_bar out of range");
  check_pmf(P1, "P1");
  check_pmf(P2, "P2");
  const double spread = (P1 - P2).cwiseAbs().sum();
  if (!(spread < P1[x_bar])) {
    throw FeasibilityError("finite_coupling: sum |P1 - P2| = " + std::to_string(spread) +
                           " is not below P1(x_bar) = " + std::to_string(P1[x_bar]));
  }
  const Eigen::VectorXd m = P1.cwiseMin(P2);
  const Eigen::Index n = P1.size();
  CouplingTable t{P1, P2, Eigen::MatrixXd::Zero(n, n), x_bar};
  for (Eigen::Index x = 0; x < n; ++x) {
    if (x == x_bar) continue;
    t.J(x, x) = m[x];
    t.J(x, x_bar) = P1[x] - m[x];
    t.J(x_bar, x) = P2[x] - m[x];
  }
  const double excess = (P1 - m).sum();
  t.J(x_bar, x_bar) = P1[x_bar] - excess + (P2[x_bar] - m[x_bar]);
  return t;
}

CouplingAudit audit_coupling(const CouplingTable& table) {
  CouplingAudit a;
  const Eigen::VectorXd rows = table.J.rowwise().sum();
  const Eigen::VectorXd cols = table.J.colwise().sum().transpose();
  a.max_marginal_error = std::max((rows - table.P1).cwiseAbs().maxCoeff(),
                                  (cols - table.P2).cwiseAbs().maxCoeff());
  a.min_entry = table.J.minCoeff();
  for (Eigen::Index x = 0; x < table.J.rows(); ++x) {
    for (Eigen::Index y = 0; y < table.J.cols(); ++y) {
      if (x != y && x != table.x_bar && y != table.x_bar) a.off_support_mass += std::abs(table.J(x, y));
    }
  }
  return a;
}

// --- Stochastic dominance ---------------------------------------------------------

DominanceReport compare_survival(const Histogram& lower, const Histogram& upper) {
  if (lower.total == 0 || upper.total == 0) throw DomainError("compare_survival: empty sample");
  std::int64_t top = 0;
  if (!lower.counts.empty()) top = std::max(top, lower.counts.rbegin()->first);
  if (!upper.counts.empty()) top = std::max(top, upper.counts.rbegin()->first);
  auto survival = [](const Histogram& h, std::int64_t t) {
    std::uint64_t at_least = 0;
    for (auto it = h.counts.lower_bound(t); it != h.counts.end(); ++it) at_least += it->second;
    return proportion(at_least, h.total);
  };
  DominanceReport report;
  for (std::int64_t t = 0; t <= top; ++t) {
    const Estimate z = survival(lower, t);
    const Estimate zh = survival(upper, t);
    DominanceRow row{t, z.value, z.se, zh.value, zh.se, 0.0};
    const double diff = z.value - zh.value;
    const double se = std::sqrt(z.se * z.se + zh.se * zh.se);
    if (se > 0.0) {
      row.violation_sigma = diff / se;
    } else if (diff > 0.0) {
      row.violation_sigma = std::numeric_limits<double>::infinity();
    }
    report.max_violation_sigma = std::max(report.max_violation_sigma, row.violation_sigma);
    report.rows.push_back(row);
  }
  report.dominated = report.max_violation_sigma <= kDominanceSigma;
  return report;
}

Histogram sample_Z(const TreeParams& params, PercParams perc, std::uint64_t trials,
                   std::uint64_t seed, unsigned threads) {
  return run_trials<Histogram>(trials, threads, [&](std::uint64_t t, Histogram& acc) {
    const EdgeOracle oracle(derive_seed(seed, t), perc);
    acc.add(static_cast<std::int64_t>(leaf_count_Z(params, oracle)));
  });
}

Histogram sample_Zhat(const PhiMap& phi, PercParams perc, std::uint64_t trials, std::uint64_t seed,
                      unsigned threads) {
  return run_trials<Histogram>(trials, threads, [&](std::uint64_t t, Histogram& acc) {
    const RandomHatConfig config(phi, derive_seed(seed, t), perc);
    acc.add(static_cast<std::int64_t>(leaf_count_Zhat(phi, config)));
  });
}

DominanceReport dominance_test(const TreeParams& params, double p, double q, double delta,
                               std::uint64_t trials, std::uint64_t seed, unsigned threads) {
  if (trials == 0) throw ParameterError("dominance_test: trials must be >= 1");
  if (!(delta >= 0.0) || !(q - delta >= 0.0)) {
    throw ParameterError("dominance_test: need delta >= 0 and q - delta >= 0");
  }
  const PhiMap phi(params);
  const Histogram z = sample_Z(params, PercParams::make(p, q), trials, derive_seed(seed, 1), threads);
  const Histogram zh =
      sample_Zhat(phi, PercParams::make(p, q - delta), trials, derive_seed(seed, 2), threads);
  return compare_survival(z, zh);
}

}  // namespace mrperc
