#include "mrperc/percolation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "mrperc/errors.hpp"
#include "mrperc/parallel.hpp"

namespace mrperc {

PercParams PercParams::make(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0)) {
    throw ParameterError("percolation parameters must lie in [0,1] (p=" + std::to_string(p) +
                         ", q=" + std::to_string(q) + ")");
  }
  return {p, q};
}

VertexKey key_of(const VertexPath& v, VertexKey from) {
  VertexKey key = from;
  for (int digit : v.digits) key = child_key(key, digit);
  return key;
}

VertexKey long_child_key(VertexKey tail, std::uint64_t selector, const TreeParams& params) {
  // Digits of the selector, most significant first.
  const auto d = static_cast<std::uint64_t>(params.d());
  std::uint64_t scale = params.pow_d(params.k() - 1);
  VertexKey key = tail;
  for (int pos = 0; pos < params.k(); ++pos) {
    key = child_key(key, static_cast<int>(selector / scale % d) + 1);
    scale /= d;
  }
  return key;
}

// --- Layered exploration -------------------------------------------------

LayerStats explore_layers(const TreeParams& params, const EdgeOracle& oracle, int n_max,
                          Window start, std::uint64_t cap) {
  if (n_max < 0) throw ParameterError("explore_layers: n_max must be >= 0");
  const int k = params.k();
  const int d = params.d();
  const std::uint64_t fanout = params.long_fanout();
  const bool any_short = oracle.perc().p > 0.0;
  const bool any_long = oracle.perc().q > 0.0;

  // pending[h % (k+1)] collects vertices of height h before it is processed.
  std::vector<std::vector<VertexKey>> pending(static_cast<std::size_t>(k + 1));
  for (int s = 0; s < params.slot_count(); ++s) {
    if (!start.has(s)) continue;
    const int h = slot_height(s, params);
    if (h <= n_max) pending[static_cast<std::size_t>(h)].push_back(key_of(slot_vertex(s, params)));
  }

  LayerStats stats;
  stats.x.assign(static_cast<std::size_t>(n_max + 1), 0);
  std::uint64_t total = 0;
  int empty_run = 0;
  for (int n = 0; n <= n_max; ++n) {
    auto& layer = pending[static_cast<std::size_t>(n % (k + 1))];
    std::sort(layer.begin(), layer.end());
    layer.erase(std::unique(layer.begin(), layer.end()), layer.end());
    stats.x[static_cast<std::size_t>(n)] = layer.size();
    total += layer.size();
    if (total > cap) {
      throw CapExceeded("explore_layers: cluster exceeded " + std::to_string(cap) + " vertices");
    }
    if (layer.empty()) {
      // k empty layers in a row: nothing can be reached any more.
      if (++empty_run >= k) break;
      continue;
    }
    empty_run = 0;
    auto& next = pending[static_cast<std::size_t>((n + 1) % (k + 1))];
    auto& far = pending[static_cast<std::size_t>((n + k) % (k + 1))];
    for (const VertexKey v : layer) {
      if (any_short && n + 1 <= n_max) {
        for (int j = 1; j <= d; ++j) {
          if (oracle.short_open(v, j)) next.push_back(child_key(v, j));
        }
      }
      if (any_long && n + k <= n_max) {
        for (std::uint64_t s = 0; s < fanout; ++s) {
          if (oracle.long_open(v, s)) far.push_back(long_child_key(v, s, params));
        }
      }
    }
    layer.clear();
  }
  for (int n = std::max(0, n_max - k + 1); n <= n_max; ++n) {
    if (stats.x[static_cast<std::size_t>(n)] > 0) stats.truncated_alive = true;
  }
  return stats;
}

namespace {

struct Node {
  VertexPath path;
  VertexKey key;
};

}  // namespace

ClusterSample explore_cluster(const TreeParams& params, const EdgeOracle& oracle,
                              const std::vector<VertexPath>& starts, int max_height,
                              std::uint64_t stop_above, int complete_height,
                              std::uint64_t cap) {
  const int k = params.k();
  const auto ring = static_cast<std::size_t>(k + 1);
  std::vector<std::vector<Node>> pending(ring);
  int lowest = max_height + 1;
  for (const auto& v : starts) {
    validate(v, params);
    if (height(v) > max_height) continue;
    lowest = std::min(lowest, height(v));
  }
  // Start vertices may sit anywhere; seed them in height order as the sweep
  // reaches them.
  std::vector<VertexPath> seeds = starts;
  std::sort(seeds.begin(), seeds.end(), [](const VertexPath& a, const VertexPath& b) {
    return height(a) != height(b) ? height(a) < height(b) : a < b;
  });
  std::size_t next_seed = 0;

  ClusterSample sample;
  int empty_run = 0;
  for (int h = lowest; h <= max_height; ++h) {
    auto& layer = pending[static_cast<std::size_t>(h) % ring];
    while (next_seed < seeds.size() && height(seeds[next_seed]) == h) {
      layer.push_back({seeds[next_seed], key_of(seeds[next_seed])});
      ++next_seed;
    }
    if (layer.empty()) {
      if (++empty_run >= k && next_seed == seeds.size()) break;
      continue;
    }
    empty_run = 0;
    std::sort(layer.begin(), layer.end(), [](const Node& a, const Node& b) { return a.path < b.path; });
    layer.erase(std::unique(layer.begin(), layer.end(),
                            [](const Node& a, const Node& b) { return a.path == b.path; }),
                layer.end());
    auto& next = pending[static_cast<std::size_t>(h + 1) % ring];
    auto& far = pending[static_cast<std::size_t>(h + k) % ring];
    for (const Node& node : layer) {
      sample.vertices.push_back(node.path);
      if (h + 1 <= max_height) {
        for (int j = 1; j <= params.d(); ++j) {
          if (oracle.short_open(node.key, j)) next.push_back({child(node.path, j), child_key(node.key, j)});
        }
      }
      if (h + k <= max_height) {
        for (std::uint64_t s = 0; s < params.long_fanout(); ++s) {
          if (oracle.long_open(node.key, s)) {
            far.push_back({concat(node.path, long_selector_path(s, params)),
                           long_child_key(node.key, s, params)});
          }
        }
      }
    }
    layer.clear();
    if (sample.vertices.size() > cap) {
      throw CapExceeded("explore_cluster: cluster exceeded " + std::to_string(cap) + " vertices");
    }
    if (sample.vertices.size() > stop_above && h >= complete_height) {
      sample.stopped_early = true;
      break;
    }
  }
  std::sort(sample.vertices.begin(), sample.vertices.end());
  return sample;
}

Estimate estimate_survival(const TreeParams& params, PercParams perc, std::uint64_t trials,
                           int depth, std::uint64_t seed, unsigned threads) {
  if (trials == 0) throw ParameterError("estimate_survival: trials must be >= 1");
  if (depth < params.k()) throw ParameterError("estimate_survival: depth must be >= k");
  struct Count {
    std::uint64_t alive = 0;
    void merge(const Count& o) { alive += o.alive; }
  };
  const Count total = run_trials<Count>(trials, threads, [&](std::uint64_t t, Count& acc) {
    const EdgeOracle oracle(derive_seed(seed, t), perc);
    if (explore_layers(params, oracle, depth).truncated_alive) ++acc.alive;
  });
  return proportion(total.alive, trials);
}

// --- First representation -------------------------------------------------

std::vector<VertexPath> AdmissibleSet::members(const TreeParams& params) const {
  std::vector<VertexPath> out;
  for (const auto& rel : window_members(rel_type, params)) out.push_back(concat(base, rel));
  return out;
}

std::vector<VertexPath> short_cluster(const std::vector<VertexPath>& B, const TreeParams& params,
                                      const EdgeOracle& oracle, std::uint64_t cap) {
  if (B.empty()) throw ParameterError("short_cluster: start set must be nonempty");
  std::vector<VertexPath> out;
  std::vector<Node> stack;
  for (const auto& v : B) stack.push_back({v, key_of(v)});
  // Short edges form a tree, so two distinct start vertices can only reach a
  // common vertex if one is an ancestor of the other; dedupe at the end.
  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    for (int j = 1; j <= params.d(); ++j) {
      if (oracle.short_open(node.key, j)) stack.push_back({child(node.path, j), child_key(node.key, j)});
    }
    out.push_back(std::move(node.path));
    if (out.size() > cap) {
      throw CapExceeded("short_cluster: exceeded " + std::to_string(cap) +
                        " vertices (short clusters are infinite with positive probability when pd >= 1)");
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<VertexPath> long_boundary(const std::vector<VertexPath>& short_cl,
                                      const TreeParams& params, const EdgeOracle& oracle) {
  std::vector<VertexPath> out;
  if (oracle.perc().q <= 0.0) return out;
  for (const auto& v : short_cl) {
    const VertexKey key = key_of(v);
    for (std::uint64_t s = 0; s < params.long_fanout(); ++s) {
      if (!oracle.long_open(key, s)) continue;
      VertexPath w = concat(v, long_selector_path(s, params));
      if (!std::binary_search(short_cl.begin(), short_cl.end(), w)) out.push_back(std::move(w));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<AdmissibleSet> decompose(const std::vector<VertexPath>& long_bd,
                                     const TreeParams& params) {
  std::vector<VertexPath> members = long_bd;
  std::sort(members.begin(), members.end(), [](const VertexPath& a, const VertexPath& b) {
    return height(a) != height(b) ? height(a) < height(b) : a < b;
  });
  members.erase(std::unique(members.begin(), members.end()), members.end());

  std::unordered_map<VertexKey, std::size_t> index_of;
  std::vector<VertexKey> keys(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    keys[i] = key_of(members[i]);
    index_of.emplace(keys[i], i);
  }

  std::vector<std::size_t> uf(members.size());
  std::iota(uf.begin(), uf.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  };

  for (std::size_t i = 0; i < members.size(); ++i) {
    const VertexPath& u = members[i];
    VertexKey prefix_key = kRootKey;
    for (int m = 0; m < height(u); ++m) {
      const auto it = index_of.find(prefix_key);
      if (it != index_of.end()) {
        if (height(u) - m >= params.k()) {
          throw ConsistencyError("decompose: " + to_string(u) + " lies " +
                                 std::to_string(height(u) - m) + " levels below " +
                                 to_string(members[it->second]) + " (must be < k)");
        }
        // Members are sorted by height, so the ancestor's root stays minimal.
        uf[find(i)] = find(it->second);
      }
      prefix_key = child_key(prefix_key, u.digits[static_cast<std::size_t>(m)]);
    }
  }

  // Group by representative; the representative is the shallowest member.
  std::vector<AdmissibleSet> classes;
  std::unordered_map<std::size_t, std::size_t> class_of;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const std::size_t r = find(i);
    auto [it, inserted] = class_of.emplace(r, classes.size());
    if (inserted) classes.push_back({members[r], Window{}});
    AdmissibleSet& cls = classes[it->second];
    if (!is_prefix(cls.base, members[i])) {
      throw ConsistencyError("decompose: class with base " + to_string(cls.base) +
                             " contains non-descendant " + to_string(members[i]));
    }
    cls.rel_type.bits |= std::uint64_t{1} << slot_index(strip_prefix(cls.base, members[i]), params);
  }
  std::sort(classes.begin(), classes.end());
  return classes;
}

FirstStep first_step(const AdmissibleSet& B, const TreeParams& params, const EdgeOracle& oracle,
                     std::uint64_t cap) {
  FirstStep step;
  step.short_cluster = short_cluster(B.members(params), params, oracle, cap);
  step.long_boundary = long_boundary(step.short_cluster, params, oracle);
  step.children = decompose(step.long_boundary, params);
  return step;
}

std::vector<Population> simulate_Z_first(const AdmissibleSet& start, const TreeParams& params,
                                         const EdgeOracle& oracle, int generations,
                                         std::uint64_t cap) {
  if (generations < 0) throw ParameterError("simulate_Z_first: generations must be >= 0");
  std::vector<Population> out;
  std::vector<AdmissibleSet> current{start};
  out.push_back(Population{{start.rel_type.bits, 1}});
  for (int g = 0; g < generations; ++g) {
    std::vector<AdmissibleSet> next;
    Population pop;
    for (const auto& B : current) {
      for (auto& child_set : first_step(B, params, oracle, cap).children) {
        ++pop[child_set.rel_type.bits];
        next.push_back(std::move(child_set));
      }
    }
    out.push_back(std::move(pop));
    current = std::move(next);
  }
  return out;
}

// --- Closed forms -------------------------------------------------------------

namespace {

void require_subcritical_short(PercParams perc, const TreeParams& params) {
  if (perc.p * params.d() >= 1.0) {
    throw DomainError("closed form requires pd < 1 (p=" + std::to_string(perc.p) +
                      ", d=" + std::to_string(params.d()) + ")");
  }
}

}  // namespace

double exact_Mbar(Window A, PercParams perc, const TreeParams& params) {
  require_subcritical_short(perc, params);
  if (!A.has_root()) throw DomainError("exact_Mbar: type must contain the root slot");
  const int h = window_height(A, params);
  const double dk = static_cast<double>(params.long_fanout());
  return (1.0 - std::pow(perc.p, params.k() - h)) * dk * std::pow(perc.q, A.size()) *
         std::pow(perc.p, h) / (1.0 - perc.p * params.d());
}

double exact_mean_short_cluster_pair(Window A, PercParams perc, const TreeParams& params) {
  require_subcritical_short(perc, params);
  if (A.size() != 2 || !A.has_root()) {
    throw DomainError("exact_mean_short_cluster_pair: type must have exactly two slots, one the root");
  }
  return (2.0 - std::pow(perc.p, window_height(A, params))) / (1.0 - perc.p * params.d());
}

double q_from_s(double p, double s, const TreeParams& params) {
  const double dk = static_cast<double>(params.long_fanout());
  return (1.0 - p * params.d()) / dk + s / (dk * dk);
}

CriteriaEstimate criteria_eval(const TreeParams& params, double p, double s,
                               std::uint64_t trials, std::uint64_t seed, unsigned threads) {
  if (p * params.d() >= 1.0) throw DomainError("criteria_eval requires pd < 1");
  if (trials == 0) throw ParameterError("criteria_eval: trials must be >= 1");
  const double q = q_from_s(p, s, params);
  const PercParams perc = PercParams::make(p, q);

  struct Acc {
    MeanAccumulator a;
    MeanAccumulator b;
    void merge(const Acc& o) {
      a.merge(o.a);
      b.merge(o.b);
    }
  };
  const AdmissibleSet origin{root(), root_window()};
  const Acc total = run_trials<Acc>(trials, threads, [&](std::uint64_t t, Acc& acc) {
    const EdgeOracle oracle(derive_seed(seed, t), perc);
    std::uint64_t lhs_a = 0;
    std::uint64_t lhs_b = 0;
    for (const auto& child_set : first_step(origin, params, oracle).children) {
      const int size = child_set.rel_type.size();
      if (size != 2) {
        lhs_b += static_cast<std::uint64_t>(size);
        if (child_set.rel_type == root_window()) ++lhs_a;
        continue;
      }
      for (const auto& grandchild : first_step(child_set, params, oracle).children) {
        lhs_b += static_cast<std::uint64_t>(grandchild.rel_type.size());
        if (grandchild.rel_type == root_window()) ++lhs_a;
      }
    }
    acc.a.add(static_cast<double>(lhs_a));
    acc.b.add(static_cast<double>(lhs_b));
  });
  return {q, total.a.estimate(), total.b.estimate()};
}

}  // namespace mrperc
