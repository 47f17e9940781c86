#ifndef MRPERC_MTBP_HPP
#define MRPERC_MTBP_HPP

// Finite-type Galton-Watson processes: stepping, survival estimates, the two
// law transformations used for the extinction/survival criteria, and the
// window-chain instance. Also the Monte Carlo diagnostics for the limit
// behaviour of X_n and for clusters conditioned to be large.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mrperc/errors.hpp"
#include "mrperc/percolation.hpp"
#include "mrperc/population.hpp"
#include "mrperc/rng.hpp"
#include "mrperc/stats.hpp"
#include "mrperc/window_chain.hpp"

namespace mrperc {

using ExactPmf = std::vector<std::pair<Population, double>>;

// Exact pmfs are carried through transformations only up to this support size.
inline constexpr std::size_t kMaxPmfSupport = 10'000;

class OffspringLaw {
 public:
  // Adds the offspring of `count` individuals of one type to `out`.
  using Sampler = std::function<void(TypeId, std::uint64_t, CounterRng&, Population&)>;
  // Exact offspring pmf of one individual; nullopt when not available.
  using PmfFn = std::function<std::optional<ExactPmf>(TypeId)>;

  OffspringLaw() = default;
  explicit OffspringLaw(Sampler sampler, PmfFn pmf = {})
      : sampler_(std::move(sampler)), pmf_(std::move(pmf)) {}

  // Law given by an exact pmf per type; sampling inverts the cdf.
  static OffspringLaw from_pmf(std::map<TypeId, ExactPmf> table);

  void sample_into(TypeId a, std::uint64_t count, CounterRng& rng, Population& out) const {
    sampler_(a, count, rng, out);
  }
  Population sample(TypeId a, CounterRng& rng) const {
    Population out;
    sampler_(a, 1, rng, out);
    return out;
  }
  bool has_pmf() const noexcept { return static_cast<bool>(pmf_); }
  std::optional<ExactPmf> pmf(TypeId a) const { return pmf_ ? pmf_(a) : std::nullopt; }

 private:
  Sampler sampler_;
  PmfFn pmf_;
};

// Independent offspring for every individual, summed. Throws CapExceeded if
// the result exceeds `cap` individuals.
Population step(const Population& pop, const OffspringLaw& law, CounterRng& rng,
                std::uint64_t cap = kDefaultPopulationCap);

// Fraction of runs with a nonzero population after `generations` steps.
// Trial t uses CounterRng(derive_seed(seed, t)).
Estimate survival_mc(const OffspringLaw& law, const Population& initial, std::uint64_t trials,
                     int generations, std::uint64_t seed = kDefaultSeed, unsigned threads = 1,
                     std::uint64_t cap = kDefaultPopulationCap);

// Offspring of types in I are replaced at once by their own offspring.
OffspringLaw collapse_I(const OffspringLaw& law, std::set<TypeId> I);

// Single-type law: draw chi from the law at a_star and emit
// sum_a lambda(a) chi(a) children of type a_star. Requires lambda(a_star) = 1;
// types missing from lambda raise DomainError when met.
OffspringLaw lambda_collapse(const OffspringLaw& law, TypeId a_star,
                             std::map<TypeId, std::uint64_t> lambda);

struct CriteriaValues {
  double lhs_a = 0.0;  // M(a*,a*) + sum_{a in I} M(a*,a) M(a,a*)
  double lhs_b = 0.0;  // sum_{a not in I} M(a*,a) l(a) + sum_{a in I} sum_b M(a*,a) M(a,b) l(b)
};

// Indices refer to rows/columns of M; lambda has one weight per column.
CriteriaValues criteria(const Eigen::SparseMatrix<double, Eigen::RowMajor>& M, Eigen::Index a_star,
                        const std::set<Eigen::Index>& I, const Eigen::VectorXd& lambda);
CriteriaValues criteria(const Eigen::MatrixXd& M, Eigen::Index a_star,
                        const std::set<Eigen::Index>& I, const Eigen::VectorXd& lambda);

// The window chain as an OffspringLaw over window bitmasks. Exact pmfs are
// available while child pmfs can be enumerated.
OffspringLaw window_chain_law(const WindowChain& chain);

// --- Limit diagnostics for X_n ------------------------------------------

// Layer sizes X_0..X_{n_max} of trial t.
using XSampler = std::function<std::vector<std::uint64_t>(std::uint64_t trial, int n_max)>;

// X_n read off the window chain (initial type from the root-window law).
XSampler chain_x_sampler(const WindowChain& chain, std::uint64_t seed = kDefaultSeed);
// X_n from layered exploration of the percolation cluster.
XSampler layer_x_sampler(const TreeParams& params, PercParams perc,
                         std::uint64_t seed = kDefaultSeed);

struct GrowthReport {
  std::vector<Estimate> mean_x;  // E[X_n], n = 0..n_max
  std::uint64_t trials = 0;
  // E[X_{n+1}] / E[X_n]; zero where E[X_n] = 0.
  double ratio(int n) const;
};

GrowthReport growth_profile(const XSampler& sampler, int n_max, std::uint64_t trials,
                            unsigned threads = 1);

struct ConditionalReport {
  std::vector<int> horizons;
  std::vector<Histogram> law;  // X_n given X_n != 0, one per horizon
  std::vector<std::uint64_t> survivors;
  std::uint64_t trials = 0;
};

ConditionalReport conditional_laws(const XSampler& sampler, const std::vector<int>& horizons,
                                   std::uint64_t trials, unsigned threads = 1);

// --- Clusters conditioned to be large --------------------------------------

inline constexpr double kMinAcceptanceRate = 1e-5;

struct NeighbourhoodReport {
  std::map<std::string, std::uint64_t> classes;  // certificate -> count
  std::map<std::string, std::string> examples;   // certificate -> readable shape
  Histogram root_degree;                         // number of cluster neighbours of o
  std::uint64_t attempts = 0;
  std::uint64_t accepted = 0;
  double acceptance_rate() const {
    return attempts ? static_cast<double>(accepted) / static_cast<double>(attempts) : 0.0;
  }
};

// Rejection sampling of clusters with more than n vertices; for each accepted
// cluster the radius-m ball around o in the unoriented cluster graph is
// reduced to an isomorphism certificate. Throws FeasibilityError if the
// acceptance rate falls below kMinAcceptanceRate.
NeighbourhoodReport conditioned_cluster_sample(const TreeParams& params, PercParams perc,
                                               std::uint64_t n, int m, std::uint64_t attempts,
                                               std::uint64_t seed = kDefaultSeed,
                                               unsigned threads = 1);

// Colour-refinement certificate of a rooted graph given as adjacency lists,
// vertex 0 the root. Complete for trees.
std::string rooted_certificate(const std::vector<std::vector<int>>& adjacency);

// Total-variation distance between two certificate laws.
double tv_distance(const std::map<std::string, std::uint64_t>& a,
                   const std::map<std::string, std::uint64_t>& b);

}  // namespace mrperc

#endif  // MRPERC_MTBP_HPP
