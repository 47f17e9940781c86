#ifndef MRPERC_COUPLING_HPP
#define MRPERC_COUPLING_HPP

// Finite slabs of the multi-range tree and of the (d + d^k)-ary tree, the
// digit map between them, leaf counts, the conflict-aware exploration that
// builds a multi-range cluster from a configuration on the wide tree, and a
// finite coupling of two pmfs through a distinguished outcome.
//
// Wide-tree digits are 1-based in [1, d + d^k]; digit j <= d stands for the
// short step j, digit d + m + 1 for the m-th long selector (lexicographic).

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "mrperc/percolation.hpp"
#include "mrperc/stats.hpp"
#include "mrperc/tree_model.hpp"

namespace mrperc {

class PhiMap {
 public:
  explicit PhiMap(const TreeParams& params);

  const TreeParams& params() const noexcept { return params_; }
  int wide_degree() const noexcept { return static_cast<int>(params_.d() + params_.long_fanout()); }
  bool is_long(int digit) const;
  // phi(digit): a single short digit or a block of k digits.
  VertexPath phi(int digit) const;
  // Digit-block concatenation.
  VertexPath Phi(const VertexPath& wide) const;
  // h(Phi(v)) without building the path.
  int image_height(const VertexPath& wide) const;

 private:
  TreeParams params_;
};

// Edge states on the wide slab. `tail` is a wide-tree vertex.
class HatConfig {
 public:
  virtual ~HatConfig() = default;
  virtual bool open(const VertexPath& tail, int digit) const = 0;
};

// Independent edges: short-kind digits open with probability p, long-kind
// with q. Uniforms come from the counter-based hash under `seed`.
class RandomHatConfig final : public HatConfig {
 public:
  RandomHatConfig(const PhiMap& phi, std::uint64_t seed, PercParams perc)
      : phi_(phi), seed_(seed), perc_(perc) {}
  bool open(const VertexPath& tail, int digit) const override;

 private:
  const PhiMap& phi_;
  std::uint64_t seed_;
  PercParams perc_;
};

// The distinguished configuration: every root edge open, everything open
// below the root's long children, and below the root's short children only
// short-kind edges whose head has wide height <= k.
class OmegaBar final : public HatConfig {
 public:
  explicit OmegaBar(const PhiMap& phi) : phi_(phi) {}
  bool open(const VertexPath& tail, int digit) const override;

 private:
  const PhiMap& phi_;
};

// Leaves of the slab on the multi-range tree: heights in [2k, 3k). Edges
// count only from tails of height < 2k.
std::uint64_t slab_leaf_total(const TreeParams& params);

// Reachable leaves in the multi-range slab under `oracle`.
std::uint64_t leaf_count_Z(const TreeParams& params, const EdgeOracle& oracle);

// Reachable leaves of the wide slab (tails with h(Phi) < 2k, leaves with
// 2k <= h(Phi) < 3k).
std::uint64_t leaf_count_Zhat(const PhiMap& phi, const HatConfig& config);

// Out-degree of the wide root under `config`.
int hat_root_degree(const PhiMap& phi, const HatConfig& config);

struct HatExploration {
  std::vector<VertexPath> cluster;     // C, sorted
  std::vector<VertexPath> explored;    // wide vertices reached, conflicts included
  std::vector<VertexPath> conflicts;   // wide vertices whose image was already in C
  std::uint64_t leaves = 0;            // Z(C): members of C with 2k <= h < 3k
};

// Four rounds: short closure from the root, long closure, short closure from
// the new vertices, long closure from those. A wide vertex whose image is
// already in C is a conflict and is not expanded.
HatExploration explore_hat_to_C(const PhiMap& phi, const HatConfig& config);

// --- Finite coupling -----------------------------------------------------------

struct CouplingTable {
  Eigen::VectorXd P1;
  Eigen::VectorXd P2;
  Eigen::MatrixXd J;  // J(x, y) = P(X = x, Y = y)
  Eigen::Index x_bar = 0;
};

// Throws FeasibilityError unless sum |P1 - P2| < P1(x_bar); ParameterError if
// either input is not a pmf.
CouplingTable finite_coupling(const Eigen::VectorXd& P1, const Eigen::VectorXd& P2,
                              Eigen::Index x_bar);

struct CouplingAudit {
  double max_marginal_error = 0.0;
  double min_entry = 0.0;
  double off_support_mass = 0.0;  // mass outside {X=Y} u {X=x_bar} u {Y=x_bar}
};
CouplingAudit audit_coupling(const CouplingTable& table);

// --- Stochastic dominance ---------------------------------------------------------

struct DominanceRow {
  std::int64_t threshold = 0;
  double surv_Z = 0.0;
  double se_Z = 0.0;
  double surv_Zhat = 0.0;
  double se_Zhat = 0.0;
  double violation_sigma = 0.0;  // (surv_Z - surv_Zhat) / combined SE
};

struct DominanceReport {
  std::vector<DominanceRow> rows;
  double max_violation_sigma = 0.0;
  bool dominated = true;  // no threshold above kDominanceSigma
};

inline constexpr double kDominanceSigma = 3.0;

// Compares P(lower >= t) against P(upper >= t) for t = 0..max observed.
DominanceReport compare_survival(const Histogram& lower, const Histogram& upper);

// Samples Z(C_{p,q}) and Zhat(C^_{p,q-delta}) independently, `trials` each.
DominanceReport dominance_test(const TreeParams& params, double p, double q, double delta,
                               std::uint64_t trials, std::uint64_t seed = kDefaultSeed,
                               unsigned threads = 1);

// Empirical law of Zhat at (p, q), for self-comparison and checks.
Histogram sample_Zhat(const PhiMap& phi, PercParams perc, std::uint64_t trials,
                      std::uint64_t seed = kDefaultSeed, unsigned threads = 1);
Histogram sample_Z(const TreeParams& params, PercParams perc, std::uint64_t trials,
                   std::uint64_t seed = kDefaultSeed, unsigned threads = 1);

}  // namespace mrperc

#endif  // MRPERC_COUPLING_HPP
