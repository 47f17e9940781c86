#ifndef MRPERC_PERCOLATION_HPP
#define MRPERC_PERCOLATION_HPP

// Bond percolation on the multi-range tree: short edges open with
// probability p, long edges with probability q, all independent.
//
// Edge states are never stored. An edge is identified by (tail vertex key,
// kind, selector) and its uniform variable is a counter-based hash of that
// key under the realization seed, so every exploration that touches the same
// edge under the same seed sees the same state.

#include <cstdint>
#include <vector>

#include "mrperc/population.hpp"
#include "mrperc/rng.hpp"
#include "mrperc/stats.hpp"
#include "mrperc/tree_model.hpp"

namespace mrperc {

inline constexpr std::uint64_t kDefaultClusterCap = 10'000'000;

struct PercParams {
  double p = 0.0;
  double q = 0.0;

  // Throws ParameterError unless both lie in [0, 1].
  static PercParams make(double p, double q);
};

// 64-bit identity of a vertex, chained digit by digit from the root.
using VertexKey = std::uint64_t;

inline constexpr VertexKey kRootKey = 0x243F6A8885A308D3ULL;

constexpr VertexKey child_key(VertexKey parent, int digit) noexcept {
  return mix64(parent ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(digit)));
}

VertexKey key_of(const VertexPath& v, VertexKey from = kRootKey);
VertexKey long_child_key(VertexKey tail, std::uint64_t selector, const TreeParams& params);

enum class EdgeKind : std::uint32_t { Short = 1, Long = 2, Hat = 3 };

class EdgeOracle {
 public:
  EdgeOracle(std::uint64_t seed, PercParams perc) : seed_(seed), perc_(perc) {}

  std::uint64_t seed() const noexcept { return seed_; }
  const PercParams& perc() const noexcept { return perc_; }

  // Same edge uniforms, different opening probabilities (monotone coupling).
  EdgeOracle with_params(PercParams perc) const { return EdgeOracle(seed_, perc); }

  double uniform(VertexKey tail, EdgeKind kind, std::uint64_t selector) const noexcept {
    return philox_uniform(seed_, tail,
                          (std::uint64_t{static_cast<std::uint32_t>(kind)} << 32) ^ selector);
  }
  bool short_open(VertexKey tail, int digit) const noexcept {
    return uniform(tail, EdgeKind::Short, static_cast<std::uint64_t>(digit)) < perc_.p;
  }
  bool long_open(VertexKey tail, std::uint64_t selector) const noexcept {
    return uniform(tail, EdgeKind::Long, selector) < perc_.q;
  }

 private:
  std::uint64_t seed_;
  PercParams perc_;
};

// --- Layered exploration -------------------------------------------------

struct LayerStats {
  std::vector<std::uint64_t> x;  // x[n] = cluster vertices at height n
  bool truncated_alive = false;  // some vertex within the top k layers
};

// Cluster of the start set (a window below the root, default {o}) explored one
// height at a time up to n_max. Throws CapExceeded past `cap` vertices.
LayerStats explore_layers(const TreeParams& params, const EdgeOracle& oracle, int n_max,
                          Window start = root_window(),
                          std::uint64_t cap = kDefaultClusterCap);

// Full vertex set of the cluster of `starts`, explored in height order and
// restricted to heights <= max_height. Exploration stops early once more than
// `stop_above` vertices are known and every height <= complete_height is
// finished; `stopped_early` reports that. Throws CapExceeded past `cap`.
struct ClusterSample {
  std::vector<VertexPath> vertices;  // sorted
  bool stopped_early = false;
};
ClusterSample explore_cluster(const TreeParams& params, const EdgeOracle& oracle,
                              const std::vector<VertexPath>& starts, int max_height,
                              std::uint64_t stop_above = kDefaultClusterCap,
                              int complete_height = 0,
                              std::uint64_t cap = kDefaultClusterCap);

// Survival proxy: fraction of clusters with a vertex at height in
// [depth-k+1, depth]. Trial t uses seed derive_seed(seed, t).
Estimate estimate_survival(const TreeParams& params, PercParams perc, std::uint64_t trials,
                           int depth, std::uint64_t seed = kDefaultSeed,
                           unsigned threads = 1);

// --- First branching representation (short clusters, long boundaries) ----

struct AdmissibleSet {
  VertexPath base;
  Window rel_type;  // slot 0 (the base itself) is always set

  std::vector<VertexPath> members(const TreeParams& params) const;
  friend auto operator<=>(const AdmissibleSet&, const AdmissibleSet&) = default;
};

// Vertices reachable from B through open short edges, B included. Sorted.
// Throws CapExceeded past `cap` vertices.
std::vector<VertexPath> short_cluster(const std::vector<VertexPath>& B, const TreeParams& params,
                                      const EdgeOracle& oracle,
                                      std::uint64_t cap = kDefaultClusterCap);

// Endpoints of open long edges leaving a short cluster, minus the cluster.
std::vector<VertexPath> long_boundary(const std::vector<VertexPath>& short_cl,
                                      const TreeParams& params, const EdgeOracle& oracle);

// Partition of a long boundary into admissible classes: u and v are related
// when some member w has both in its subtree. Throws ConsistencyError if two
// members in ancestor relation are k or more levels apart.
std::vector<AdmissibleSet> decompose(const std::vector<VertexPath>& long_bd,
                                     const TreeParams& params);

struct FirstStep {
  std::vector<VertexPath> short_cluster;
  std::vector<VertexPath> long_boundary;
  std::vector<AdmissibleSet> children;
};

// One generation of the first representation applied to an admissible set.
FirstStep first_step(const AdmissibleSet& B, const TreeParams& params, const EdgeOracle& oracle,
                     std::uint64_t cap = kDefaultClusterCap);

// Per-generation type counts, generations 0..generations.
std::vector<Population> simulate_Z_first(const AdmissibleSet& start, const TreeParams& params,
                                         const EdgeOracle& oracle, int generations,
                                         std::uint64_t cap = kDefaultClusterCap);

// Expected number of long-boundary vertices v of {o} whose subtree contains
// v.A within the long boundary. Requires pd < 1.
double exact_Mbar(Window A, PercParams perc, const TreeParams& params);

// Expected short-cluster size of a two-element type. Requires pd < 1.
double exact_mean_short_cluster_pair(Window A, PercParams perc, const TreeParams& params);

// Monte Carlo estimates of the two mean-matrix criteria for the first
// representation started from {o}, with q = (1-pd)/d^k + s/d^{2k}:
//   lhs_a = M(o,o) + sum_{|B|=2} M(o,B) M(B,o)
//   lhs_b = sum_{|B|!=2} M(o,B)|B| + sum_{|B|=2} sum_B' M(o,B) M(B,B')|B'|
struct CriteriaEstimate {
  double q = 0.0;
  Estimate lhs_a;
  Estimate lhs_b;
};
double q_from_s(double p, double s, const TreeParams& params);
CriteriaEstimate criteria_eval(const TreeParams& params, double p, double s,
                               std::uint64_t trials, std::uint64_t seed = kDefaultSeed,
                               unsigned threads = 1);

}  // namespace mrperc

#endif  // MRPERC_PERCOLATION_HPP
