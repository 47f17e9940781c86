#ifndef MRPERC_WINDOW_CHAIN_HPP
#define MRPERC_WINDOW_CHAIN_HPP

// Second branching representation: the type of a vertex v is the trace of
// the cluster on the height-(k-1) slab below v.
//
// One-step law for child v.i of a vertex with window A:
//   * a slot u of height <= k-2 is set iff i.u is in A;
//   * a slot u of height k-1 is a vertex never queried before. It joins the
//     cluster through its short edge (needs i.parent(u) in A) or its long
//     edge from v (needs o in A), so it is set independently with
//     probability 1 - (1 - p a(u)) (1 - q b).

#include <Eigen/SparseCore>

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "mrperc/percolation.hpp"
#include "mrperc/population.hpp"
#include "mrperc/rng.hpp"
#include "mrperc/tree_model.hpp"

namespace mrperc {

// The exact chain has 2^W - 1 types.
inline constexpr int kMaxChainSlots = 20;
// Largest top layer d^{k-1} for which child pmfs are enumerated.
inline constexpr int kMaxEnumeratedTopSlots = 16;
inline constexpr std::uint64_t kDefaultPopulationCap = 100'000'000;

struct WindowTransition {
  int child = 1;                  // i in [1, d]
  Window fixed;                   // deterministic part, slots of height <= k-2
  std::vector<double> top_prob;   // pi(u) for u = top_begin, top_begin+1, ...
};

using WindowPmf = std::vector<std::pair<Window, double>>;  // sorted by window

using OffspringMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Row/column index of a nonempty window in the mean matrix.
inline Eigen::Index window_index(Window w) { return static_cast<Eigen::Index>(w.bits - 1); }
inline Window window_at(Eigen::Index i) { return Window{static_cast<std::uint64_t>(i) + 1}; }

class WindowChain {
 public:
  // Throws CapExceeded when the window has more than kMaxChainSlots slots.
  WindowChain(const TreeParams& params, PercParams perc);

  const TreeParams& params() const noexcept { return params_; }
  const PercParams& perc() const noexcept { return perc_; }
  std::uint64_t type_count() const noexcept { return (std::uint64_t{1} << params_.slot_count()) - 1; }
  int top_count() const noexcept { return static_cast<int>(params_.pow_d(params_.k() - 1)); }

  WindowTransition child_law(Window A, int i) const;

  // Full pmf of the child window, the empty window included. Throws
  // CapExceeded when d^{k-1} > kMaxEnumeratedTopSlots.
  WindowPmf child_window_dist(Window A, int i) const;

  // Law of the cluster trace on the root's window. Supported on rooted
  // subtrees; the empty window has mass zero and is not listed.
  WindowPmf initial_window_dist() const;

  Window sample_child(Window A, int i, CounterRng& rng) const;
  Window sample_initial(CounterRng& rng) const;

  // Number of children with each window among `count` copies of child i of
  // type A. Empty windows are dropped.
  void add_children(Window A, int i, std::uint64_t count, CounterRng& rng, Population& out) const;

  // Exact mean offspring matrix over all nonempty windows. Rows are filled
  // independently on `threads` workers; the result does not depend on it.
  OffspringMatrix build_M(unsigned threads = 1) const;

 private:
  TreeParams params_;
  PercParams perc_;
  // low_src_[i-1][u]: slot of i.u for slots u of height <= k-2.
  std::vector<std::vector<int>> low_src_;
  // top_src_[i-1][j]: slot of i.parent(u) for the j-th top slot u.
  std::vector<std::vector<int>> top_src_;
};

// Writes row_window_hex,col_window_hex,rate rows, row-major, columns sorted.
void write_matrix_csv(std::ostream& os, const OffspringMatrix& M);

struct ChainRun {
  std::vector<Population> generations;
  std::vector<std::uint64_t> x;  // x[n] = sum over windows containing o
};

// Count-based simulation: individuals of the same type are split
// binomially slot by slot, which is equivalent to sampling each individual.
// `initial` empty means draw the initial type from initial_window_dist.
ChainRun simulate_window_chain(const WindowChain& chain, CounterRng& rng, int generations,
                               Window initial = Window{},
                               std::uint64_t cap = kDefaultPopulationCap);

}  // namespace mrperc

#endif  // MRPERC_WINDOW_CHAIN_HPP
