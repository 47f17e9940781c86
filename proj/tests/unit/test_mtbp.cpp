#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "mrperc/critical_curve.hpp"
#include "mrperc/errors.hpp"
#include "mrperc/mtbp.hpp"

using namespace mrperc;

namespace {

constexpr TypeId kA = 1;
constexpr TypeId kB = 2;

ExactPmf point(Population eta) { return {{std::move(eta), 1.0}}; }

double binom(int n, int j, double p) {
  return std::tgamma(n + 1.0) / (std::tgamma(j + 1.0) * std::tgamma(n - j + 1.0)) * std::pow(p, j) *
         std::pow(1 - p, n - j);
}

// Law of Bin(n1, p1) + Bin(n2, p2) as a vector indexed by the value.
std::vector<double> binom_sum(int n1, double p1, int n2, double p2) {
  std::vector<double> out(static_cast<std::size_t>(n1 + n2 + 1), 0.0);
  for (int a = 0; a <= n1; ++a) {
    for (int b = 0; b <= n2; ++b) out[static_cast<std::size_t>(a + b)] += binom(n1, a, p1) * binom(n2, b, p2);
  }
  return out;
}

// P(extinct by generation n | one individual of type a), by iterating the
// generating functions of an exact pmf law.
std::map<TypeId, double> extinct_by(const OffspringLaw& law, const std::set<TypeId>& types, int n) {
  std::map<TypeId, double> e;
  for (TypeId a : types) e[a] = 0.0;
  for (int g = 0; g < n; ++g) {
    std::map<TypeId, double> next;
    for (TypeId a : types) {
      double s = 0.0;
      const auto pmf = law.pmf(a);
      for (const auto& [eta, w] : *pmf) {
        double prod = w;
        for (const auto& [b, c] : eta) prod *= std::pow(e.at(b), static_cast<double>(c));
        s += prod;
      }
      next[a] = s;
    }
    e = std::move(next);
  }
  return e;
}

std::set<TypeId> windows_of_size(const TreeParams& t, int size) {
  std::set<TypeId> out;
  for (std::uint64_t w = 1; w < (std::uint64_t{1} << t.slot_count()); ++w) {
    if (Window{w}.size() == size) out.insert(w);
  }
  return out;
}

}  // namespace

TEST_CASE("step") {
  const OffspringLaw det = OffspringLaw::from_pmf({{kA, point({{kB, 2}})}, {kB, point({})}});
  CounterRng rng(1);
  CHECK(step({}, det, rng).empty());
  CHECK(step({{kA, 3}}, det, rng) == Population{{kB, 6}});
  CHECK(step({{kB, 5}}, det, rng).empty());
  CHECK_THROWS_AS(step({{kA, 10}}, det, rng, 5), CapExceeded);
  CHECK_THROWS_AS(OffspringLaw::from_pmf({{kA, {{{}, 0.4}}}}), ParameterError);

  // Bernoulli(1/2) on each of 2 children: mean 1
  const OffspringLaw bern =
      OffspringLaw::from_pmf({{kA, {{{}, 0.25}, {{{kA, 1}}, 0.5}, {{{kA, 2}}, 0.25}}}});
  MeanAccumulator m;
  for (int i = 0; i < 100000; ++i) m.add(static_cast<double>(total_size(step({{kA, 1}}, bern, rng))));
  CHECK(std::abs(m.mean() - 1.0) < 3 * m.se());
}

TEST_CASE("survival by simulation") {
  const OffspringLaw half = OffspringLaw::from_pmf({{kA, {{{}, 0.5}, {{{kA, 1}}, 0.5}}}});
  CHECK(survival_mc(half, {{kA, 1}}, 20000, 50).value < 0.01);
  const OffspringLaw two = OffspringLaw::from_pmf({{kA, point({{kA, 2}})}});
  CHECK(survival_mc(two, {{kA, 1}}, 1000, 15).value == 1.0);

  // single type Bin(2,p) + Bin(4,q), mean 1.2; oracle: P(Z_n = 0) = f^n(0)
  const double p = 0.2, q = 0.2;
  const auto law_vec = binom_sum(2, p, 4, q);
  ExactPmf pmf;
  for (std::size_t j = 0; j < law_vec.size(); ++j) {
    pmf.emplace_back(j ? Population{{kA, j}} : Population{}, law_vec[j]);
  }
  const OffspringLaw bs = OffspringLaw::from_pmf({{kA, pmf}});
  auto f = [&](double s) { return std::pow(1 - p + p * s, 2) * std::pow(1 - q + q * s, 4); };
  double root = 0.0;
  for (int g = 0; g < 100000; ++g) root = f(root);
  // horizon long enough for the limit
  int gens = 0;
  double s = 0.0;
  while (std::abs(s - root) > 1e-4) {
    s = f(s);
    ++gens;
  }
  const Estimate e = survival_mc(bs, {{kA, 1}}, 100000, gens);
  CHECK(e.value > 5 * e.se);
  CHECK(std::abs(e.value - (1 - s)) < 3 * e.se);
  CHECK(std::abs(e.value - (1 - root)) < 3 * e.se);
  CHECK(survival_mc(bs, {{kA, 1}}, 5000, gens, kDefaultSeed, 4).value ==
        survival_mc(bs, {{kA, 1}}, 5000, gens, kDefaultSeed, 1).value);
}

TEST_CASE("collapse over I") {
  const OffspringLaw ab = OffspringLaw::from_pmf({{kA, point({{kB, 1}})}, {kB, point({{kA, 2}})}});
  const OffspringLaw same = collapse_I(ab, {});
  CounterRng r1(3), r2(3);
  CHECK(same.sample(kA, r1) == ab.sample(kA, r2));
  const OffspringLaw c = collapse_I(ab, {kB});
  CounterRng rng(4);
  CHECK(c.sample(kA, rng) == Population{{kA, 2}});
  REQUIRE(c.pmf(kA).has_value());
  CHECK(*c.pmf(kA) == point({{kA, 2}}));

  // exact pmf of the collapse keeps its mean: M_c(a, .) = M(a, .) restricted + M(a, I) M(I, .)
  const TreeParams t(2, 2);
  const WindowChain chain(t, PercParams{0.2, 0.22});
  const OffspringLaw law = window_chain_law(chain);
  const std::set<TypeId> I = windows_of_size(t, 2);
  const OffspringLaw col = collapse_I(law, I);
  const Eigen::MatrixXd M = Eigen::MatrixXd(chain.build_M());
  const Eigen::Index n = M.rows();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);  // projection onto I
  for (TypeId b : I) P(window_index(Window{b}), window_index(Window{b})) = 1.0;
  const Eigen::MatrixXd expect = M * (Eigen::MatrixXd::Identity(n, n) - P) + M * P * M;
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto pmf = col.pmf(window_at(a).bits);
    REQUIRE(pmf.has_value());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    double mass = 0.0;
    for (const auto& [eta, w] : *pmf) {
      mass += w;
      for (const auto& [b, cnt] : eta) mean(window_index(Window{b})) += w * static_cast<double>(cnt);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((mean - expect.row(a).transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }

  // survival is unchanged by the collapse: exactly in the limit, and by
  // simulation at a horizon where both laws are within 1e-4 of it
  std::set<TypeId> all;
  for (std::uint64_t w = 1; w < 8; ++w) all.insert(w);
  const TypeId o = root_window().bits;
  const double lim_before = extinct_by(law, all, 4000).at(o);
  const double lim_after = extinct_by(col, all, 4000).at(o);
  CHECK(std::abs(lim_before - lim_after) < 1e-10);
  CHECK(lim_before < 1.0 - 1e-3);
  int horizon = 1;
  while (std::abs(extinct_by(law, all, horizon).at(o) - lim_before) > 1e-4) ++horizon;
  const Population start{{o, 1}};
  const Estimate before = survival_mc(law, start, 100000, horizon, 101);
  const Estimate after = survival_mc(col, start, 100000, horizon, 202);
  CHECK(before.value > 5 * before.se);
  CHECK(std::abs(before.value - (1 - extinct_by(law, all, horizon).at(o))) < 3 * before.se);
  CHECK(std::abs(before.value - after.value) < 3 * std::hypot(before.se, after.se));
  MESSAGE("collapse check horizon " << horizon << ", survival " << 1 - lim_before);
}

TEST_CASE("lambda collapse") {
  const OffspringLaw dead = OffspringLaw::from_pmf({{kA, point({})}});
  CounterRng rng(5);
  CHECK(lambda_collapse(dead, kA, {{kA, 1}}).sample(kA, rng).empty());
  const OffspringLaw ab = OffspringLaw::from_pmf({{kA, point({{kA, 1}, {kB, 1}})}});
  const OffspringLaw lc = lambda_collapse(ab, kA, {{kA, 1}, {kB, 3}});
  CHECK(lc.sample(kA, rng) == Population{{kA, 4}});
  CHECK_THROWS_AS(lambda_collapse(ab, kA, {{kA, 2}}), DomainError);
  CHECK_THROWS_AS(lambda_collapse(ab, kA, {{kA, 1}}).sample(kA, rng), DomainError);

  // mean child count = sum_a M(a*, a) lambda(a), lambda = window size
  const TreeParams t(2, 2);
  const WindowChain chain(t, PercParams{0.2, 0.25});
  std::map<TypeId, std::uint64_t> lambda;
  Eigen::VectorXd lv(7);
  for (std::uint64_t w = 1; w < 8; ++w) {
    lambda[w] = static_cast<std::uint64_t>(Window{w}.size());
    lv(window_index(Window{w})) = Window{w}.size();
  }
  const OffspringLaw single = lambda_collapse(window_chain_law(chain), root_window().bits, lambda);
  const Eigen::MatrixXd M = Eigen::MatrixXd(chain.build_M());
  const double expect = M.row(window_index(root_window())).dot(lv);
  MeanAccumulator m;
  for (int i = 0; i < 100000; ++i) m.add(static_cast<double>(total_size(single.sample(root_window().bits, rng))));
  CHECK(std::abs(m.mean() - expect) < 3 * m.se());
}

TEST_CASE("mean criteria") {
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
  const CriteriaValues z = criteria(Z, 0, {1}, ones);
  CHECK(z.lhs_a == 0.0);
  CHECK(z.lhs_b == 0.0);
  Eigen::MatrixXd D = Z;
  D(0, 0) = 1.2;
  Eigen::VectorXd lam(3);
  lam << 1, 5, 7;
  const CriteriaValues d = criteria(D, 0, {1}, lam);
  CHECK(d.lhs_a == doctest::Approx(1.2));
  CHECK(d.lhs_b == doctest::Approx(1.2));

  const TreeParams t(2, 2);
  Eigen::VectorXd card(7);
  std::set<Eigen::Index> I;
  for (std::uint64_t w = 1; w < 8; ++w) {
    card(window_index(Window{w})) = Window{w}.size();
    if (Window{w}.size() == 2) I.insert(window_index(Window{w}));
  }
  const OffspringMatrix M = WindowChain(t, PercParams{0.2, 0.25}).build_M();
  const CriteriaValues c = criteria(M, window_index(root_window()), I, card);
  CHECK(std::isfinite(c.lhs_a));
  CHECK(std::isfinite(c.lhs_b));
  CHECK(c.lhs_a <= c.lhs_b);
  const CriteriaValues cd = criteria(Eigen::MatrixXd(M), window_index(root_window()), I, card);
  CHECK(cd.lhs_a == doctest::Approx(c.lhs_a).epsilon(1e-14));
  CHECK(cd.lhs_b == doctest::Approx(c.lhs_b).epsilon(1e-14));

  // the survival branch needs no hypothesis on lambda: lhs_a > 1 => rho > 1
  // (here lhs_a = 4 q^2 (1-p)^2, so the grid runs up to q = 1)
  int conclusive = 0;
  for (double q = 0.02; q <= 1.0; q += 0.02) {
    const OffspringMatrix Mq = WindowChain(t, PercParams{0.2, q}).build_M();
    const CriteriaValues v = criteria(Mq, window_index(root_window()), I, card);
    if (v.lhs_a > 1) {
      CHECK(pf_eigen(Mq).rho > 1);
      ++conclusive;
    }
  }
  CHECK(conclusive > 0);
}

// Type b reproduces like two independent copies of a*, so lambda(b) = 2
// satisfies the domination hypothesis of the extinction branch exactly.
TEST_CASE("mean criteria where both branches apply") {
  int sub = 0, super = 0;
  // offset grid: x + 2y never lands on 1
  for (double x = 0.01; x < 1.0; x += 0.05) {
    for (double y = 0.005; x + y < 1.0; y += 0.05) {
      Eigen::Matrix2d M;  // order (a*, b)
      M << x, y, 2 * x, 2 * y;
      const double rho = pf_eigen(M).rho;
      CHECK(rho == doctest::Approx(x + 2 * y).epsilon(1e-10));
      Eigen::Vector2d lam(1, 2);
      const CriteriaValues v = criteria(Eigen::MatrixXd(M), 0, {1}, lam);
      if (v.lhs_a > 1) {
        CHECK(rho > 1);
        ++super;
      }
      if (v.lhs_b < 1) {
        CHECK(rho < 1);
        ++sub;
      }
    }
  }
  CHECK(super > 0);
  CHECK(sub > 0);

  // the same law as a process: collapsed mean x + 2y < 1 means extinction
  const double x = 0.3, y = 0.2;
  const ExactPmf a_law{{{}, 1 - x - y}, {{{kA, 1}}, x}, {{{kB, 1}}, y}};
  ExactPmf b_law;
  for (const auto& [e1, w1] : a_law) {
    for (const auto& [e2, w2] : a_law) {
      Population both = e1;
      add_to(both, e2);
      b_law.emplace_back(both, w1 * w2);
    }
  }
  const OffspringLaw law = OffspringLaw::from_pmf({{kA, a_law}, {kB, b_law}});
  MeanAccumulator m;
  CounterRng rng(17);
  const OffspringLaw single = lambda_collapse(law, kA, {{kA, 1}, {kB, 2}});
  for (int i = 0; i < 20000; ++i) m.add(static_cast<double>(total_size(single.sample(kA, rng))));
  CHECK(m.mean() < 1.0);
  CHECK(survival_mc(law, {{kA, 1}}, 20000, 100).value < 0.01);
}

TEST_CASE("growth profile and conditional laws") {
  const TreeParams t(2, 2);
  const GrowthReport g = growth_profile(layer_x_sampler(t, PercParams{0.0, 1.0}), 4, 10);
  REQUIRE(g.mean_x.size() == 5);
  CHECK(g.mean_x[2].value == 4.0);
  CHECK(g.mean_x[4].value == 16.0);
  CHECK(g.ratio(1) == 0.0);  // E[X_1] = 0

  // the two samplers agree on E[X_3]
  const PercParams perc{0.3, 0.1};
  const GrowthReport a = growth_profile(layer_x_sampler(t, perc, 1), 3, 50000);
  const GrowthReport b = growth_profile(chain_x_sampler(WindowChain(t, perc), 2), 3, 50000);
  CHECK(std::abs(a.mean_x[3].value - b.mean_x[3].value) < 3 * std::hypot(a.mean_x[3].se, b.mean_x[3].se));

  const ConditionalReport c = conditional_laws(layer_x_sampler(t, perc, 3), {1, 2}, 20000);
  REQUIRE(c.law.size() == 2);
  CHECK(c.survivors[0] == c.law[0].total);
  CHECK(c.law[0].prob(0) == 0.0);
}

TEST_CASE("rooted certificates") {
  // star and path on 3 vertices, rooted at the centre / an end
  const std::vector<std::vector<int>> star{{1, 2}, {0}, {0}};
  const std::vector<std::vector<int>> path{{1}, {0, 2}, {1}};
  const std::vector<std::vector<int>> path_mid{{1, 2}, {0}, {0}};
  CHECK(rooted_certificate(star) != rooted_certificate(path));
  CHECK(rooted_certificate(star) == rooted_certificate(path_mid));
  // relabelling
  const std::vector<std::vector<int>> t1{{1, 2}, {0, 3}, {0}, {1}};
  const std::vector<std::vector<int>> t2{{2, 1}, {0}, {0, 3}, {2}};
  CHECK(rooted_certificate(t1) == rooted_certificate(t2));
  std::map<std::string, std::uint64_t> a{{"x", 3}, {"y", 1}}, b{{"x", 1}, {"y", 3}};
  CHECK(tv_distance(a, b) == doctest::Approx(0.5));
}

TEST_CASE("conditioned neighbourhoods") {
  const TreeParams t(2, 2);
  SUBCASE("n = 0, root degree is binomial") {
    const PercParams perc{0.3, 0.2};
    const std::uint64_t n = 100000;
    const NeighbourhoodReport r = conditioned_cluster_sample(t, perc, 0, 1, n, 7);
    CHECK(r.accepted == n);
    const auto expect = binom_sum(2, perc.p, 4, perc.q);
    for (std::size_t j = 0; j < expect.size(); ++j) {
      const double se = std::sqrt(expect[j] * (1 - expect[j]) / static_cast<double>(n));
      CHECK(std::abs(r.root_degree.prob(static_cast<std::int64_t>(j)) - expect[j]) < 3 * se + 1e-12);
    }
  }
  SUBCASE("p = 0 against a single-type tree") {
    const double q = 0.25;  // critical for the 4-ary tree
    const std::uint64_t size_threshold = 20;
    const NeighbourhoodReport r = conditioned_cluster_sample(t, PercParams{0.0, q}, size_threshold, 1, 60000, 8);
    // independent Galton-Watson sampler, offspring Bin(4, q)
    std::mt19937_64 gen(12345);
    std::binomial_distribution<int> offspring(4, q);
    Histogram ref;
    while (ref.total < r.accepted) {
      const int root_deg = offspring(gen);
      std::uint64_t size = 1 + static_cast<std::uint64_t>(root_deg);
      std::uint64_t frontier = static_cast<std::uint64_t>(root_deg);
      while (frontier > 0 && size <= size_threshold) {
        --frontier;
        const int c = offspring(gen);
        size += static_cast<std::uint64_t>(c);
        frontier += static_cast<std::uint64_t>(c);
      }
      if (size > size_threshold) ref.add(root_deg);
    }
    CHECK(r.accepted > 1000);
    for (int j = 0; j <= 4; ++j) {
      const double a = r.root_degree.prob(j), b = ref.prob(j);
      const double se = std::sqrt(a * (1 - a) / static_cast<double>(r.accepted) + b * (1 - b) / static_cast<double>(ref.total));
      CHECK(std::abs(a - b) < 4 * se + 1e-12);
    }
  }
  SUBCASE("laws stabilize as the threshold grows") {
    const PercParams perc{0.2, qc(0.2, t).q_c};
    const std::uint64_t attempts = 200000;
    const auto r10 = conditioned_cluster_sample(t, perc, 10, 1, attempts, 21);
    const auto r50 = conditioned_cluster_sample(t, perc, 50, 1, attempts, 22);
    const auto r100 = conditioned_cluster_sample(t, perc, 100, 1, attempts, 23);
    CHECK(tv_distance(r50.classes, r100.classes) < tv_distance(r10.classes, r100.classes));
  }
  SUBCASE("budget") {
    CHECK_THROWS_AS(conditioned_cluster_sample(t, PercParams{0.1, 0.02}, 5000, 1, 1000, 9), FeasibilityError);
  }
}
