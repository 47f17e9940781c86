#include "mrperc/mtbp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <random>

#include "mrperc/parallel.hpp"

namespace mrperc {

namespace {

// Convolution of two pmfs over populations; nullopt past kMaxPmfSupport.
std::optional<ExactPmf> convolve(const ExactPmf& a, const ExactPmf& b) {
  std::map<Population, double> acc;
  for (const auto& [pa, wa] : a) {
    for (const auto& [pb, wb] : b) {
      Population sum = pa;
      add_to(sum, pb);
      acc[std::move(sum)] += wa * wb;
      if (acc.size() > kMaxPmfSupport) return std::nullopt;
    }
  }
  return ExactPmf(acc.begin(), acc.end());
}

const ExactPmf& unit_pmf() {
  static const ExactPmf unit{{Population{}, 1.0}};
  return unit;
}

}  // namespace

OffspringLaw OffspringLaw::from_pmf(std::map<TypeId, ExactPmf> table) {
  for (const auto& [type, pmf] : table) {
    double total = 0.0;
    for (const auto& [pop, w] : pmf) {
      if (!(w >= 0.0)) throw ParameterError("offspring pmf has a negative mass");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ParameterError("offspring pmf of type " + std::to_string(type) + " sums to " +
                           std::to_string(total));
    }
  }
  auto shared = std::make_shared<const std::map<TypeId, ExactPmf>>(std::move(table));
  auto lookup = [shared](TypeId a) -> const ExactPmf& {
    const auto it = shared->find(a);
    if (it == shared->end()) throw DomainError("no offspring law for type " + std::to_string(a));
    return it->second;
  };
  Sampler sampler = [lookup](TypeId a, std::uint64_t count, CounterRng& rng, Population& out) {
    const ExactPmf& pmf = lookup(a);
    if (count > 4 * pmf.size()) {
      // multinomial split by conditional binomials
      std::uint64_t left = count;
      double rest = 1.0;
      for (std::size_t j = 0; j + 1 < pmf.size() && left > 0; ++j) {
        const double w = pmf[j].second;
        std::uint64_t n = 0;
        if (w >= rest) {
          n = left;
        } else if (w > 0.0) {
          std::binomial_distribution<std::uint64_t> split(left, w / rest);
          n = split(rng);
        }
        if (n) add_to(out, pmf[j].first, n);
        left -= n;
        rest -= w;
      }
      if (left) add_to(out, pmf.back().first, left);
      return;
    }
    for (std::uint64_t c = 0; c < count; ++c) {
      double u = rng.uniform();
      std::size_t pick = pmf.size() - 1;
      for (std::size_t j = 0; j < pmf.size(); ++j) {
        if (u < pmf[j].second) {
          pick = j;
          break;
        }
        u -= pmf[j].second;
      }
      add_to(out, pmf[pick].first);
    }
  };
  PmfFn pmf = [lookup](TypeId a) -> std::optional<ExactPmf> { return lookup(a); };
  return OffspringLaw(std::move(sampler), std::move(pmf));
}

Population step(const Population& pop, const OffspringLaw& law, CounterRng& rng, std::uint64_t cap) {
  Population next;
  for (const auto& [type, count] : pop) {
    if (count) law.sample_into(type, count, rng, next);
  }
  const std::uint64_t size = total_size(next);
  if (size > cap) {
    throw CapExceeded("step: population " + std::to_string(size) + " exceeds the cap of " +
                      std::to_string(cap));
  }
  for (auto it = next.begin(); it != next.end();) {
    it = it->second == 0 ? next.erase(it) : std::next(it);
  }
  return next;
}

Estimate survival_mc(const OffspringLaw& law, const Population& initial, std::uint64_t trials,
                     int generations, std::uint64_t seed, unsigned threads, std::uint64_t cap) {
  if (trials == 0) throw ParameterError("survival_mc: trials must be >= 1");
  if (generations < 0) throw ParameterError("survival_mc: generations must be >= 0");
  struct Count {
    std::uint64_t alive = 0;
    void merge(const Count& o) { alive += o.alive; }
  };
  const Count total = run_trials<Count>(trials, threads, [&](std::uint64_t t, Count& acc) {
    CounterRng rng(derive_seed(seed, t));
    Population pop = initial;
    for (int g = 0; g < generations && total_size(pop) > 0; ++g) pop = step(pop, law, rng, cap);
    if (total_size(pop) > 0) ++acc.alive;
  });
  return proportion(total.alive, trials);
}

OffspringLaw collapse_I(const OffspringLaw& law, std::set<TypeId> I) {
  if (I.empty()) return law;
  auto members = std::make_shared<const std::set<TypeId>>(std::move(I));
  OffspringLaw::Sampler sampler = [law, members](TypeId a, std::uint64_t count, CounterRng& rng,
                                                 Population& out) {
    Population first;
    law.sample_into(a, count, rng, first);
    for (const auto& [b, c] : first) {
      if (members->count(b)) {
        law.sample_into(b, c, rng, out);
      } else {
        out[b] += c;
      }
    }
  };
  OffspringLaw::PmfFn pmf;
  if (law.has_pmf()) {
    pmf = [law, members](TypeId a) -> std::optional<ExactPmf> {
      const auto base = law.pmf(a);
      if (!base) return std::nullopt;
      std::map<Population, double> acc;
      for (const auto& [eta, w] : *base) {
        Population kept;
        ExactPmf replaced = unit_pmf();
        for (const auto& [b, c] : eta) {
          if (!members->count(b)) {
            kept[b] += c;
            continue;
          }
          const auto sub = law.pmf(b);
          if (!sub) return std::nullopt;
          for (std::uint64_t j = 0; j < c; ++j) {
            auto next = convolve(replaced, *sub);
            if (!next) return std::nullopt;
            replaced = std::move(*next);
          }
        }
        for (const auto& [pop, v] : replaced) {
          Population total = kept;
          add_to(total, pop);
          acc[std::move(total)] += w * v;
          if (acc.size() > kMaxPmfSupport) return std::nullopt;
        }
      }
      return ExactPmf(acc.begin(), acc.end());
    };
  }
  return OffspringLaw(std::move(sampler), std::move(pmf));
}

OffspringLaw lambda_collapse(const OffspringLaw& law, TypeId a_star,
                             std::map<TypeId, std::uint64_t> lambda) {
  const auto it = lambda.find(a_star);
  if (it == lambda.end() || it->second != 1) {
    throw DomainError("lambda_collapse: lambda(a_star) must equal 1");
  }
  auto weights = std::make_shared<const std::map<TypeId, std::uint64_t>>(std::move(lambda));
  auto weigh = [weights](const Population& chi) {
    std::uint64_t n = 0;
    for (const auto& [b, c] : chi) {
      const auto w = weights->find(b);
      if (w == weights->end()) throw DomainError("lambda_collapse: no weight for type " + std::to_string(b));
      n += w->second * c;
    }
    return n;
  };
  OffspringLaw::Sampler sampler = [law, a_star, weigh](TypeId a, std::uint64_t count, CounterRng& rng,
                                                       Population& out) {
    if (a != a_star) throw DomainError("lambda_collapse: single-type law queried at another type");
    Population chi;
    law.sample_into(a_star, count, rng, chi);
    const std::uint64_t n = weigh(chi);
    if (n) out[a_star] += n;
  };
  OffspringLaw::PmfFn pmf;
  if (law.has_pmf()) {
    pmf = [law, a_star, weigh](TypeId a) -> std::optional<ExactPmf> {
      if (a != a_star) throw DomainError("lambda_collapse: single-type law queried at another type");
      const auto base = law.pmf(a_star);
      if (!base) return std::nullopt;
      std::map<std::uint64_t, double> acc;
      for (const auto& [chi, w] : *base) acc[weigh(chi)] += w;
      ExactPmf out;
      for (const auto& [n, w] : acc) {
        out.emplace_back(n ? Population{{a_star, n}} : Population{}, w);
      }
      return out;
    };
  }
  return OffspringLaw(std::move(sampler), std::move(pmf));
}

namespace {

template <class RowFn>
CriteriaValues criteria_impl(Eigen::Index n, Eigen::Index a_star, const std::set<Eigen::Index>& I,
                             const Eigen::VectorXd& lambda, RowFn&& row) {
  if (a_star < 0 || a_star >= n) throw DomainError("criteria: a_star out of range");
  if (I.count(a_star)) throw DomainError("criteria: a_star must not belong to I");
  if (lambda.size() != n) throw DomainError("criteria: lambda must have one weight per type");
  CriteriaValues out;
  row(a_star, [&](Eigen::Index a, double m_sa) {
    if (a == a_star) out.lhs_a += m_sa;
    if (!I.count(a)) {
      out.lhs_b += m_sa * lambda[a];
      return;
    }
    row(a, [&](Eigen::Index b, double m_ab) {
      if (b == a_star) out.lhs_a += m_sa * m_ab;
      out.lhs_b += m_sa * m_ab * lambda[b];
    });
  });
  return out;
}

}  // namespace

CriteriaValues criteria(const Eigen::SparseMatrix<double, Eigen::RowMajor>& M, Eigen::Index a_star,
                        const std::set<Eigen::Index>& I, const Eigen::VectorXd& lambda) {
  if (M.rows() != M.cols()) throw DomainError("criteria: matrix must be square");
  return criteria_impl(M.rows(), a_star, I, lambda, [&M](Eigen::Index r, auto&& visit) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(M, r); it; ++it) {
      visit(it.col(), it.value());
    }
  });
}

CriteriaValues criteria(const Eigen::MatrixXd& M, Eigen::Index a_star,
                        const std::set<Eigen::Index>& I, const Eigen::VectorXd& lambda) {
  if (M.rows() != M.cols()) throw DomainError("criteria: matrix must be square");
  return criteria_impl(M.rows(), a_star, I, lambda, [&M](Eigen::Index r, auto&& visit) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      if (M(r, c) != 0.0) visit(c, M(r, c));
    }
  });
}

OffspringLaw window_chain_law(const WindowChain& chain) {
  auto shared = std::make_shared<const WindowChain>(chain);
  OffspringLaw::Sampler sampler = [shared](TypeId a, std::uint64_t count, CounterRng& rng,
                                           Population& out) {
    for (int i = 1; i <= shared->params().d(); ++i) shared->add_children(Window{a}, i, count, rng, out);
  };
  OffspringLaw::PmfFn pmf = [shared](TypeId a) -> std::optional<ExactPmf> {
    if (shared->top_count() > kMaxEnumeratedTopSlots) return std::nullopt;
    ExactPmf acc = unit_pmf();
    for (int i = 1; i <= shared->params().d(); ++i) {
      ExactPmf child;
      for (const auto& [w, prob] : shared->child_window_dist(Window{a}, i)) {
        child.emplace_back(w.empty() ? Population{} : Population{{w.bits, 1}}, prob);
      }
      auto next = convolve(acc, child);
      if (!next) return std::nullopt;
      acc = std::move(*next);
    }
    return acc;
  };
  return OffspringLaw(std::move(sampler), std::move(pmf));
}

// --- Limit diagnostics -------------------------------------------------------

XSampler chain_x_sampler(const WindowChain& chain, std::uint64_t seed) {
  auto shared = std::make_shared<const WindowChain>(chain);
  return [shared, seed](std::uint64_t t, int n_max) {
    CounterRng rng(derive_seed(seed, t));
    return simulate_window_chain(*shared, rng, n_max).x;
  };
}

XSampler layer_x_sampler(const TreeParams& params, PercParams perc, std::uint64_t seed) {
  return [params, perc, seed](std::uint64_t t, int n_max) {
    return explore_layers(params, EdgeOracle(derive_seed(seed, t), perc), n_max).x;
  };
}

double GrowthReport::ratio(int n) const {
  const double a = mean_x.at(static_cast<std::size_t>(n)).value;
  return a > 0.0 ? mean_x.at(static_cast<std::size_t>(n + 1)).value / a : 0.0;
}

GrowthReport growth_profile(const XSampler& sampler, int n_max, std::uint64_t trials,
                            unsigned threads) {
  if (trials == 0) throw ParameterError("growth_profile: trials must be >= 1");
  if (n_max < 0) throw ParameterError("growth_profile: n_max must be >= 0");
  struct Acc {
    std::vector<MeanAccumulator> x;
    void merge(const Acc& o) {
      if (x.empty()) x.resize(o.x.size());
      for (std::size_t n = 0; n < o.x.size(); ++n) x[n].merge(o.x[n]);
    }
  };
  const Acc total = run_trials<Acc>(trials, threads, [&](std::uint64_t t, Acc& acc) {
    if (acc.x.empty()) acc.x.resize(static_cast<std::size_t>(n_max + 1));
    const std::vector<std::uint64_t> x = sampler(t, n_max);
    for (std::size_t n = 0; n < acc.x.size(); ++n) acc.x[n].add(static_cast<double>(x[n]));
  });
  GrowthReport report;
  report.trials = trials;
  for (const auto& m : total.x) report.mean_x.push_back(m.estimate());
  return report;
}

ConditionalReport conditional_laws(const XSampler& sampler, const std::vector<int>& horizons,
                                   std::uint64_t trials, unsigned threads) {
  if (trials == 0) throw ParameterError("conditional_laws: trials must be >= 1");
  if (horizons.empty()) throw ParameterError("conditional_laws: need at least one horizon");
  if (*std::min_element(horizons.begin(), horizons.end()) < 0) {
    throw ParameterError("conditional_laws: horizons must be >= 0");
  }
  const int n_max = *std::max_element(horizons.begin(), horizons.end());
  struct Acc {
    std::vector<Histogram> law;
    void merge(const Acc& o) {
      if (law.empty()) law.resize(o.law.size());
      for (std::size_t j = 0; j < o.law.size(); ++j) law[j].merge(o.law[j]);
    }
  };
  const Acc total = run_trials<Acc>(trials, threads, [&](std::uint64_t t, Acc& acc) {
    if (acc.law.empty()) acc.law.resize(horizons.size());
    const std::vector<std::uint64_t> x = sampler(t, n_max);
    for (std::size_t j = 0; j < horizons.size(); ++j) {
      const std::uint64_t xn = x[static_cast<std::size_t>(horizons[j])];
      if (xn) acc.law[j].add(static_cast<std::int64_t>(xn));
    }
  });
  ConditionalReport report;
  report.horizons = horizons;
  report.trials = trials;
  report.law = total.law;
  if (report.law.empty()) report.law.resize(horizons.size());
  for (const auto& h : report.law) report.survivors.push_back(h.total);
  return report;
}

// --- Conditioned clusters ------------------------------------------------------

std::string rooted_certificate(const std::vector<std::vector<int>>& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<std::uint64_t> colour(n, 1);
  if (n) colour[0] = 0;
  std::size_t classes = n ? (n > 1 ? 2 : 1) : 0;
  std::vector<std::uint64_t> next(n);
  std::vector<std::uint64_t> around;
  for (std::size_t round = 0; round < n; ++round) {
    for (std::size_t v = 0; v < n; ++v) {
      around.clear();
      for (int w : adjacency[v]) around.push_back(colour[static_cast<std::size_t>(w)]);
      std::sort(around.begin(), around.end());
      std::uint64_t h = mix64(colour[v] ^ 0x51ED270B27A3B1C5ULL);
      for (std::uint64_t c : around) h = mix64(h ^ c);
      next[v] = h;
    }
    std::vector<std::uint64_t> distinct = next;
    std::sort(distinct.begin(), distinct.end());
    const auto count = static_cast<std::size_t>(std::unique(distinct.begin(), distinct.end()) - distinct.begin());
    colour.swap(next);
    if (count == classes && round > 0) break;
    classes = count;
  }
  std::uint64_t edges = 0;
  for (const auto& adj : adjacency) edges += adj.size();
  std::vector<std::uint64_t> sorted = colour;
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = mix64(n ^ (edges << 32));
  if (n) h = mix64(h ^ colour[0]);
  for (std::uint64_t c : sorted) h = mix64(h ^ c);
  char buf[64];
  std::snprintf(buf, sizeof buf, "v%zu-e%llu-%016llx", n, static_cast<unsigned long long>(edges / 2),
                static_cast<unsigned long long>(h));
  return buf;
}

double tv_distance(const std::map<std::string, std::uint64_t>& a,
                   const std::map<std::string, std::uint64_t>& b) {
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [key, c] : a) na += static_cast<double>(c);
  for (const auto& [key, c] : b) nb += static_cast<double>(c);
  if (na == 0.0 || nb == 0.0) throw DomainError("tv_distance: empty law");
  std::set<std::string> keys;
  for (const auto& kv : a) keys.insert(kv.first);
  for (const auto& kv : b) keys.insert(kv.first);
  double s = 0.0;
  for (const auto& key : keys) {
    const auto ia = a.find(key);
    const auto ib = b.find(key);
    const double pa = ia == a.end() ? 0.0 : static_cast<double>(ia->second) / na;
    const double pb = ib == b.end() ? 0.0 : static_cast<double>(ib->second) / nb;
    s += std::abs(pa - pb);
  }
  return 0.5 * s;
}

namespace {

struct BallStats {
  std::string certificate;
  std::string shape;
  std::int64_t root_degree = 0;
};

BallStats ball_of_root(const TreeParams& params, const EdgeOracle& oracle,
                       const std::vector<VertexPath>& cluster, int m) {
  const int k = params.k();
  const int reach = m * k;
  auto in_cluster = [&](const VertexPath& v) {
    return std::binary_search(cluster.begin(), cluster.end(), v);
  };
  // Unoriented neighbours of v inside the cluster.
  auto neighbours = [&](const VertexPath& v) {
    std::vector<VertexPath> out;
    const VertexKey key = key_of(v);
    for (int j = 1; j <= params.d(); ++j) {
      if (height(v) + 1 <= reach && oracle.short_open(key, j)) out.push_back(child(v, j));
    }
    for (std::uint64_t s = 0; s < params.long_fanout(); ++s) {
      if (height(v) + k <= reach && oracle.long_open(key, s)) {
        out.push_back(concat(v, long_selector_path(s, params)));
      }
    }
    if (height(v) >= 1) {
      const VertexPath up = parent(v);
      if (in_cluster(up) && oracle.short_open(key_of(up), v.digits.back())) out.push_back(up);
    }
    if (height(v) >= k) {
      const VertexPath up = ancestor_at(v, k);
      const VertexPath sel(std::vector<int>(v.digits.end() - k, v.digits.end()));
      if (in_cluster(up) && oracle.long_open(key_of(up), long_selector_index(sel, params))) {
        out.push_back(up);
      }
    }
    return out;
  };

  std::map<VertexPath, int> index{{root(), 0}};
  std::vector<VertexPath> order{root()};
  std::vector<int> dist{0};
  for (std::size_t at = 0; at < order.size(); ++at) {
    if (dist[at] == m) continue;
    for (auto& w : neighbours(order[at])) {
      if (index.emplace(w, static_cast<int>(order.size())).second) {
        order.push_back(std::move(w));
        dist.push_back(dist[at] + 1);
      }
    }
  }
  std::vector<std::vector<int>> adjacency(order.size());
  BallStats stats;
  for (std::size_t v = 0; v < order.size(); ++v) {
    for (const auto& w : neighbours(order[v])) {
      const auto it = index.find(w);
      if (it != index.end()) adjacency[v].push_back(it->second);
    }
  }
  for (auto& adj : adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  const VertexKey root_key = key_of(root());
  for (int j = 1; j <= params.d(); ++j) stats.root_degree += oracle.short_open(root_key, j);
  for (std::uint64_t s = 0; s < params.long_fanout(); ++s) stats.root_degree += oracle.long_open(root_key, s);
  stats.certificate = rooted_certificate(adjacency);
  std::uint64_t edges = 0;
  for (const auto& adj : adjacency) edges += adj.size();
  stats.shape = "vertices=" + std::to_string(order.size()) + " edges=" + std::to_string(edges / 2) +
                " root_degree=" + std::to_string(adjacency[0].size());
  return stats;
}

}  // namespace

NeighbourhoodReport conditioned_cluster_sample(const TreeParams& params, PercParams perc,
                                               std::uint64_t n, int m, std::uint64_t attempts,
                                               std::uint64_t seed, unsigned threads) {
  if (m < 0) throw ParameterError("conditioned_cluster_sample: radius must be >= 0");
  if (attempts == 0) throw ParameterError("conditioned_cluster_sample: attempts must be >= 1");
  struct Acc {
    NeighbourhoodReport report;
    void merge(const Acc& o) {
      for (const auto& [c, cnt] : o.report.classes) report.classes[c] += cnt;
      for (const auto& [c, ex] : o.report.examples) report.examples.emplace(c, ex);
      report.root_degree.merge(o.report.root_degree);
      report.attempts += o.report.attempts;
      report.accepted += o.report.accepted;
    }
  };
  constexpr int kNoHeightLimit = 1 << 28;
  const Acc total = run_trials<Acc>(attempts, threads, [&](std::uint64_t t, Acc& acc) {
    ++acc.report.attempts;
    const EdgeOracle oracle(derive_seed(seed, t), perc);
    const ClusterSample sample =
        explore_cluster(params, oracle, {root()}, kNoHeightLimit, n, m * params.k());
    if (sample.vertices.size() <= n) return;
    ++acc.report.accepted;
    const BallStats ball = ball_of_root(params, oracle, sample.vertices, m);
    ++acc.report.classes[ball.certificate];
    acc.report.examples.emplace(ball.certificate, ball.shape);
    acc.report.root_degree.add(ball.root_degree);
  });
  if (total.report.acceptance_rate() < kMinAcceptanceRate) {
    throw FeasibilityError("conditioned_cluster_sample: acceptance rate " +
                           std::to_string(total.report.acceptance_rate()) + " below " +
                           std::to_string(kMinAcceptanceRate) + " (" +
                           std::to_string(total.report.accepted) + " of " +
                           std::to_string(attempts) + " attempts)");
  }
  return total.report;
}

}  // namespace mrperc
