#include "mrperc/window_chain.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "mrperc/errors.hpp"
#include "mrperc/parallel.hpp"

namespace mrperc {

namespace {

constexpr std::uint64_t bit(int slot) { return std::uint64_t{1} << slot; }

// Child pmf pieces in enumeration-friendly form.
struct ChildOutcomes {
  std::uint64_t fixed = 0;       // low part plus top slots with pi = 1
  std::uint64_t random = 0;      // top slots with 0 < pi < 1
  std::vector<double> probs;     // probs[r]: r-th submask of `random` in ascending order
};

ChildOutcomes outcomes_of(const WindowTransition& law, const TreeParams& params) {
  ChildOutcomes out;
  out.fixed = law.fixed.bits;
  out.probs.assign(1, 1.0);
  for (std::size_t j = 0; j < law.top_prob.size(); ++j) {
    const double pi = law.top_prob[j];
    const int slot = params.top_begin() + static_cast<int>(j);
    if (pi >= 1.0) {
      out.fixed |= bit(slot);
    } else if (pi > 0.0) {
      // Higher slots are higher bits, so the new bit doubles the table with
      // the "set" half after the "unset" half.
      out.random |= bit(slot);
      const std::size_t half = out.probs.size();
      out.probs.resize(2 * half);
      for (std::size_t r = 0; r < half; ++r) {
        out.probs[half + r] = out.probs[r] * pi;
        out.probs[r] *= 1.0 - pi;
      }
    }
  }
  return out;
}

void check_probability(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ParameterError(std::string(name) + " must lie in [0,1], got " + std::to_string(x));
  }
}

}  // namespace

WindowChain::WindowChain(const TreeParams& params, PercParams perc) : params_(params), perc_(perc) {
  check_probability(perc.p, "p");
  check_probability(perc.q, "q");
  if (params.slot_count() > kMaxChainSlots) {
    throw CapExceeded("window chain needs " + std::to_string(params.slot_count()) +
                      " slots for d=" + std::to_string(params.d()) + ", k=" +
                      std::to_string(params.k()) + "; the exact chain is capped at " +
                      std::to_string(kMaxChainSlots));
  }
  const int d = params.d();
  const int top = params.top_begin();
  low_src_.assign(static_cast<std::size_t>(d), std::vector<int>(static_cast<std::size_t>(top)));
  top_src_.assign(static_cast<std::size_t>(d),
                  std::vector<int>(static_cast<std::size_t>(params.slot_count() - top)));
  for (int i = 1; i <= d; ++i) {
    for (int u = 0; u < top; ++u) {
      low_src_[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(u)] =
          slot_index(concat(VertexPath{i}, slot_vertex(u, params)), params);
    }
    for (int u = top; u < params.slot_count(); ++u) {
      top_src_[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(u - top)] =
          slot_index(concat(VertexPath{i}, parent(slot_vertex(u, params))), params);
    }
  }
}

WindowTransition WindowChain::child_law(Window A, int i) const {
  if (i < 1 || i > params_.d()) throw ParameterError("child index outside [1, d]");
  const auto& low = low_src_[static_cast<std::size_t>(i - 1)];
  const auto& tops = top_src_[static_cast<std::size_t>(i - 1)];
  WindowTransition law;
  law.child = i;
  for (std::size_t u = 0; u < low.size(); ++u) {
    if (A.has(low[u])) law.fixed.bits |= bit(static_cast<int>(u));
  }
  const double b = A.has_root() ? perc_.q : 0.0;
  law.top_prob.resize(tops.size());
  for (std::size_t j = 0; j < tops.size(); ++j) {
    const double a = A.has(tops[j]) ? perc_.p : 0.0;
    law.top_prob[j] = 1.0 - (1.0 - a) * (1.0 - b);
  }
  return law;
}

WindowPmf WindowChain::child_window_dist(Window A, int i) const {
  if (A.empty()) throw DomainError("child_window_dist: parent window must be nonempty");
  if (top_count() > kMaxEnumeratedTopSlots) {
    throw CapExceeded("child_window_dist: top layer of " + std::to_string(top_count()) +
                      " slots exceeds the enumeration cap of " +
                      std::to_string(kMaxEnumeratedTopSlots) + "; use sample_child");
  }
  const ChildOutcomes oc = outcomes_of(child_law(A, i), params_);
  WindowPmf pmf;
  pmf.reserve(oc.probs.size());
  std::uint64_t s = 0;
  for (std::size_t r = 0; r < oc.probs.size(); ++r) {
    pmf.emplace_back(Window{oc.fixed | s}, oc.probs[r]);
    s = (s - oc.random) & oc.random;
  }
  return pmf;
}

WindowPmf WindowChain::initial_window_dist() const {
  const double p = perc_.p;
  const int d = params_.d();
  const int W = params_.slot_count();
  WindowPmf pmf;
  // Depth-first over slots in heap order; slot s may join only if its parent
  // did, and every slab child of a member that stays out costs (1-p).
  struct Frame {
    int slot;
    std::uint64_t bits;
    double prob;
  };
  std::vector<Frame> stack{{1, 1, 1.0}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    while (f.slot < W && !(f.bits & bit((f.slot - 1) / d))) ++f.slot;
    if (f.slot >= W) {
      if (f.prob > 0.0) pmf.emplace_back(Window{f.bits}, f.prob);
      continue;
    }
    stack.push_back({f.slot + 1, f.bits, f.prob * (1.0 - p)});
    stack.push_back({f.slot + 1, f.bits | bit(f.slot), f.prob * p});
  }
  std::sort(pmf.begin(), pmf.end());
  return pmf;
}

Window WindowChain::sample_child(Window A, int i, CounterRng& rng) const {
  const WindowTransition law = child_law(A, i);
  Window w = law.fixed;
  for (std::size_t j = 0; j < law.top_prob.size(); ++j) {
    if (rng.uniform() < law.top_prob[j]) w.bits |= bit(params_.top_begin() + static_cast<int>(j));
  }
  return w;
}

Window WindowChain::sample_initial(CounterRng& rng) const {
  std::uint64_t bits = 1;
  for (int s = 1; s < params_.slot_count(); ++s) {
    if ((bits & bit((s - 1) / params_.d())) && rng.uniform() < perc_.p) bits |= bit(s);
  }
  return Window{bits};
}

void WindowChain::add_children(Window A, int i, std::uint64_t count, CounterRng& rng,
                               Population& out) const {
  if (count == 0) return;
  const WindowTransition law = child_law(A, i);
  struct Group {
    std::size_t next;
    std::uint64_t bits;
    std::uint64_t count;
  };
  std::vector<Group> stack{{0, law.fixed.bits, count}};
  while (!stack.empty()) {
    Group g = stack.back();
    stack.pop_back();
    while (g.next < law.top_prob.size()) {
      const double pi = law.top_prob[g.next];
      const std::uint64_t slot_bit = bit(params_.top_begin() + static_cast<int>(g.next));
      ++g.next;
      if (pi <= 0.0) continue;
      if (pi >= 1.0) {
        g.bits |= slot_bit;
        continue;
      }
      std::binomial_distribution<std::uint64_t> split(g.count, pi);
      const std::uint64_t with = split(rng);
      if (with > 0 && with < g.count) stack.push_back({g.next, g.bits | slot_bit, with});
      if (with == g.count) {
        g.bits |= slot_bit;
      } else {
        g.count -= with;
      }
    }
    if (g.bits != 0) out[g.bits] += g.count;
  }
}

OffspringMatrix WindowChain::build_M(unsigned threads) const {
  const auto rows = static_cast<std::uint64_t>(type_count());
  if (top_count() > kMaxEnumeratedTopSlots) {
    throw CapExceeded("build_M: top layer of " + std::to_string(top_count()) +
                      " slots exceeds the enumeration cap of " +
                      std::to_string(kMaxEnumeratedTopSlots));
  }
  constexpr std::uint64_t kRowBlock = 1024;
  struct Block {
    std::vector<int> row_nnz;
    std::vector<int> cols;
    std::vector<double> vals;
  };
  std::vector<Block> blocks((rows + kRowBlock - 1) / kRowBlock);
  const int d = params_.d();

  parallel_blocks(rows, kRowBlock, threads, [&](std::uint64_t b, std::uint64_t begin, std::uint64_t end) {
    Block& blk = blocks[b];
    std::vector<std::pair<std::uint64_t, double>> merged;
    std::vector<std::pair<std::uint64_t, double>> scratch;
    std::vector<std::pair<std::uint64_t, double>> one;
    for (std::uint64_t r = begin; r < end; ++r) {
      const Window A{r + 1};
      merged.clear();
      for (int i = 1; i <= d; ++i) {
        const ChildOutcomes oc = outcomes_of(child_law(A, i), params_);
        one.clear();
        std::uint64_t s = 0;
        for (std::size_t k = 0; k < oc.probs.size(); ++k) {
          const std::uint64_t w = oc.fixed | s;
          if (w != 0 && oc.probs[k] > 0.0) one.emplace_back(w, oc.probs[k]);
          s = (s - oc.random) & oc.random;
        }
        scratch.clear();
        std::size_t x = 0;
        std::size_t y = 0;
        while (x < merged.size() || y < one.size()) {
          if (y == one.size() || (x < merged.size() && merged[x].first < one[y].first)) {
            scratch.push_back(merged[x++]);
          } else if (x == merged.size() || one[y].first < merged[x].first) {
            scratch.push_back(one[y++]);
          } else {
            scratch.emplace_back(merged[x].first, merged[x].second + one[y].second);
            ++x;
            ++y;
          }
        }
        merged.swap(scratch);
      }
      blk.row_nnz.push_back(static_cast<int>(merged.size()));
      for (const auto& [w, v] : merged) {
        blk.cols.push_back(static_cast<int>(w - 1));
        blk.vals.push_back(v);
      }
    }
  });

  std::uint64_t nnz = 0;
  for (const auto& blk : blocks) nnz += blk.vals.size();
  if (nnz > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    throw CapExceeded("build_M: " + std::to_string(nnz) + " nonzeros exceed the index range");
  }
  OffspringMatrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
  M.resizeNonZeros(static_cast<Eigen::Index>(nnz));
  int* outer = M.outerIndexPtr();
  int* inner = M.innerIndexPtr();
  double* values = M.valuePtr();
  int pos = 0;
  std::uint64_t row = 0;
  outer[0] = 0;
  for (auto& blk : blocks) {
    std::copy(blk.cols.begin(), blk.cols.end(), inner + pos);
    std::copy(blk.vals.begin(), blk.vals.end(), values + pos);
    for (int c : blk.row_nnz) {
      pos += c;
      outer[++row] = pos;
    }
    blk = Block{};
  }
  return M;
}

void write_matrix_csv(std::ostream& os, const OffspringMatrix& M) {
  os << "row_window_hex,col_window_hex,rate\n";
  char buf[96];
  for (Eigen::Index r = 0; r < M.outerSize(); ++r) {
    for (OffspringMatrix::InnerIterator it(M, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%s,%s,%.17g\n", to_hex(window_at(r)).c_str(),
                    to_hex(window_at(it.col())).c_str(), it.value());
      os << buf;
    }
  }
}

ChainRun simulate_window_chain(const WindowChain& chain, CounterRng& rng, int generations,
                               Window initial, std::uint64_t cap) {
  if (generations < 0) throw ParameterError("simulate_window_chain: generations must be >= 0");
  ChainRun run;
  const Window start = initial.empty() ? chain.sample_initial(rng) : initial;
  Population pop{{start.bits, 1}};
  auto x_of = [](const Population& p) {
    std::uint64_t x = 0;
    for (const auto& [type, count] : p) {
      if (type & 1u) x += count;
    }
    return x;
  };
  run.generations.push_back(pop);
  run.x.push_back(x_of(pop));
  for (int n = 0; n < generations; ++n) {
    if (pop.empty()) {
      run.x.push_back(0);
      run.generations.emplace_back();
      continue;
    }
    Population next;
    for (const auto& [type, count] : pop) {
      for (int i = 1; i <= chain.params().d(); ++i) chain.add_children(Window{type}, i, count, rng, next);
    }
    const std::uint64_t size = total_size(next);
    if (size > cap) {
      throw CapExceeded("simulate_window_chain: population " + std::to_string(size) +
                        " exceeds the cap of " + std::to_string(cap));
    }
    pop = std::move(next);
    run.x.push_back(x_of(pop));
    run.generations.push_back(pop);
  }
  return run;
}

}  // namespace mrperc
