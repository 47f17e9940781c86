// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mrperc/cli.hpp"
#include "mrperc/coupling.hpp"
#include "mrperc/critical_curve.hpp"
#include "mrperc/mtbp.hpp"
#include "mrperc/percolation.hpp"
#include "mrperc/rng.hpp"
#include "mrperc/spectral.hpp"
#include "mrperc/stats.hpp"
#include "mrperc/window_chain.hpp"

using namespace mrperc;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects checks for one criterion with a short trace of the numbers.
struct Checker {
  Outcome o;
  std::ostringstream msg;
  void check(bool ok, const std::string& what) {
    if (!ok) o.pass = false;
    msg << (msg.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [x]");
  }
  Outcome done() {
    o.detail = msg.str();
    return o;
  }
};

std::string num(double x, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = out.pass && in_time;
  if (!ok) ++failures;
  std::printf("%s criterion %d: %s | %s | %.1f s (budget %.0f s%s)\n", ok ? "PASS" : "FAIL", id,
              title, out.detail.c_str(), secs, budget_s, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

std::string cli(const std::vector<std::string>& args, int* code = nullptr) {
  std::ostringstream out, err;
  const int rc = run_cli(args, out, err);
  if (code) *code = rc;
  return out.str();
}

// value of `key` in a flat JSON object printed by the CLI
double json_field(const std::string& text, const std::string& key) {
  const std::string tag = "\"" + key + "\": ";
  const auto pos = text.find(tag);
  if (pos == std::string::npos) throw std::runtime_error("missing field " + key);
  return std::stod(text.substr(pos + tag.size()));
}

Histogram x_law(const XSampler& sampler, int n, std::uint64_t trials) {
  Histogram h;
  for (std::uint64_t t = 0; t < trials; ++t) h.add(static_cast<std::int64_t>(sampler(t, n)[n]));
  return h;
}

}  // namespace

int main() {
  criterion(1, "boundary values of q_c", 30, [] {
    Checker c;
    const int cases[3][2] = {{2, 2}, {2, 3}, {3, 2}};
    for (const auto& dk : cases) {
      const auto t0 = std::chrono::steady_clock::now();
      int rc = 0;
      const std::string out = cli({"qc-point", "--d", std::to_string(dk[0]), "--k", std::to_string(dk[1]),
                                   "--p", "0"},
                                  &rc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const double want = std::pow(static_cast<double>(dk[0]), -dk[1]);
      const double got = json_field(out, "qc");
      c.check(rc == 0 && std::abs(got - want) < 1e-9 && secs < 10,
              "q_c(0)[" + std::to_string(dk[0]) + "," + std::to_string(dk[1]) + "]=" + num(got, 12));
    }
    int rc = 0;
    const double hi = json_field(cli({"qc-point", "--d", "2", "--k", "2", "--p", "0.6"}, &rc), "qc");
    c.check(rc == 0 && hi == 0.0, "q_c(0.6)=" + num(hi));
    return c.done();
  });

  criterion(2, "strict gap above (1-2p)/2^k", 120, [] {
    Checker c;
    double worst = 1.0;
    for (int k : {2, 3}) {
      for (double p : {0.1, 0.2, 0.3, 0.4}) {
        const double gap = qc(p, TreeParams(2, k)).q_c - (1 - 2 * p) / std::pow(2.0, k);
        worst = std::min(worst, gap);
      }
    }
    c.check(worst > 1e-4, "min gap " + num(worst));
    return c.done();
  });

  criterion(3, "two-term asymptotics, d=2 p=0.25", 600, [] {
    Checker c;
    const double sstar = 0.0357142857;
    const auto rows = asymptotics_table(0.25, 2, 2, 4);
    c.check(std::abs(rows[0].s_star - sstar) < 1e-10, "s_star=" + num(rows[0].s_star, 10));
    std::vector<double> ds, lead;
    for (const auto& r : rows) {
      const double sk = std::pow(4.0, r.k) * (r.q_c - 0.5 / std::pow(2.0, r.k));
      ds.push_back(std::abs(sk - sstar));
      lead.push_back(std::abs(std::pow(2.0, r.k) * r.q_c - 0.5));
    }
    c.check(ds[0] > ds[1] && ds[1] > ds[2],
            "|s_k-s*| = " + num(ds[0]) + ", " + num(ds[1]) + ", " + num(ds[2]));
    c.check(lead[0] > lead[1] && lead[1] > lead[2],
            "|2^k q_c-0.5| = " + num(lead[0]) + ", " + num(lead[1]) + ", " + num(lead[2]));
    return c.done();
  });

  criterion(4, "sign correspondence at (2,2,0.2)", 120, [] {
    Checker c;
    const TreeParams t(2, 2);
    const double p = 0.2;
    const double q_c = qc(p, t).q_c;
    const double lo = rho(p, q_c - 0.02, t);
    const double hi = rho(p, q_c + 0.02, t);
    c.check(lo < 1.0 && hi > 1.0, "rho " + num(lo) + " < 1 < " + num(hi));
    const Estimate below = estimate_survival(t, PercParams{p, q_c - 0.02}, 100000, 60);
    const Estimate above = estimate_survival(t, PercParams{p, q_c + 0.02}, 100000, 60);
    c.check(below.value < 0.01, "surv below " + num(below.value) + " +- " + num(below.se, 2));
    c.check(above.value > 5 * above.se, "surv above " + num(above.value) + " +- " + num(above.se, 2));
    return c.done();
  });

  criterion(5, "window chain vs direct exploration at (2,2,0.3,0.1)", 60, [] {
    Checker c;
    const TreeParams t(2, 2);
    const PercParams perc{0.3, 0.1};
    const std::uint64_t n = 100000;
    const Histogram chain = x_law(chain_x_sampler(WindowChain(t, perc), 11), 2, n);
    const Histogram direct = x_law(layer_x_sampler(t, perc, 12), 2, n);
    const double tv = tv_distance(chain, direct);
    const double bound = 4 * tv_noise_scale(chain, direct);
    c.check(tv < bound, "TV(X_2) " + num(tv) + " < " + num(bound));

    MeanAccumulator acc;
    for (std::uint64_t s = 0; s < n; ++s) {
      const EdgeOracle o(derive_seed(13, s), perc);
      acc.add(static_cast<double>(long_boundary(short_cluster({root()}, t, o), t, o).size()));
    }
    const double exact = exact_Mbar(root_window(), perc, t);
    // independent closed form at A = {o}: d^k q (1 - p^k) / (1 - pd)
    const double hand = 4 * 0.1 * (1 - 0.3 * 0.3) / (1 - 0.6);
    c.check(std::abs(exact - hand) < 1e-12, "exact " + num(exact, 10));
    c.check(std::abs(acc.mean() - exact) < 3 * acc.se(),
            "E|C_l| " + num(acc.mean()) + " +- " + num(acc.se(), 2));
    return c.done();
  });

  criterion(6, "limit diagnostics at (2,2,0.2)", 300, [] {
    Checker c;
    const TreeParams t(2, 2);
    const double p = 0.2;
    const double q_c = qc(p, t).q_c;

    const double qs = q_c + 0.1;
    const double r = rho(p, qs, t);
    const GrowthReport g = growth_profile(layer_x_sampler(t, PercParams{p, qs}, 21), 26, 100000);
    const double ratio = g.ratio(25);
    c.check(std::abs(ratio / r - 1) < 0.02, "E X26/E X25 " + num(ratio) + " vs rho " + num(r));

    // sub: 10^6 runs so the sampling noise of the TV sits well below 0.05
    const double qb = q_c - 0.05;
    const ConditionalReport cr = conditional_laws(layer_x_sampler(t, PercParams{p, qb}, 22), {15, 25}, 1000000);
    const double tv = tv_distance(cr.law[0], cr.law[1]);
    c.check(tv < 0.05, "TV(n=15,25) " + num(tv) + " (survivors " + std::to_string(cr.survivors[0]) + ", " +
                           std::to_string(cr.survivors[1]) + ", noise " +
                           num(tv_noise_scale(cr.law[0], cr.law[1]), 3) + ")");
    return c.done();
  });

  criterion(7, "slab coupling at (2,2)", 120, [] {
    Checker c;
    const TreeParams t(2, 2);
    const PhiMap phi(t);
    int violations = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
      const RandomHatConfig cfg(phi, derive_seed(31, s), PercParams{0.5, 0.5});
      if (explore_hat_to_C(phi, cfg).leaves > leaf_count_Zhat(phi, cfg)) ++violations;
    }
    c.check(violations == 0, "pathwise violations " + std::to_string(violations) + "/10000");

    const OmegaBar bar(phi);
    const std::uint64_t z = explore_hat_to_C(phi, bar).leaves;
    const std::uint64_t zh = leaf_count_Zhat(phi, bar);
    c.check(z == 0 && zh >= 48, "bar: Z=" + std::to_string(z) + " Zhat=" + std::to_string(zh));

    CounterRng rng(41);
    double worst = 0.0;
    double off = 0.0;
    double neg = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 2 + static_cast<int>(rng.uniform() * 8);
      Eigen::VectorXd P1(n), R(n);
      for (int i = 0; i < n; ++i) P1(i) = rng.uniform() + 1e-3;
      for (int i = 0; i < n; ++i) R(i) = rng.uniform() + 1e-3;
      P1 /= P1.sum();
      R /= R.sum();
      const Eigen::Index xb = static_cast<Eigen::Index>(rng.uniform() * n);
      const double mix = 0.49 * P1(xb) * rng.uniform();
      const Eigen::VectorXd P2 = (1 - mix) * P1 + mix * R;
      const CouplingTable tab = finite_coupling(P1, P2, xb);
      worst = std::max({worst, (tab.J.rowwise().sum() - P1).cwiseAbs().maxCoeff(),
                        (tab.J.colwise().sum().transpose() - P2).cwiseAbs().maxCoeff()});
      neg = std::min(neg, tab.J.minCoeff());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i != j && i != xb && j != xb) off += std::abs(tab.J(i, j));
        }
      }
    }
    c.check(worst <= 1e-12 && off <= 1e-12 && neg >= -1e-15,
            "coupler marginal err " + num(worst, 2) + ", off-support " + num(off, 2));
    return c.done();
  });

  criterion(8, "property suites", 60, [] {
    Checker c;
    // spectral invariants on window-chain matrices
    const TreeParams t(2, 3);
    const OffspringMatrix A = WindowChain(t, PercParams{0.2, 0.1}).build_M();
    // nonnegative perturbation on the pattern of A, random sizes
    OffspringMatrix B = A;
    CounterRng noise(51);
    for (Eigen::Index r = 0; r < B.outerSize(); ++r) {
      for (OffspringMatrix::InnerIterator it(B, r); it; ++it) it.valueRef() += 0.01 * noise.uniform();
    }
    const auto ra = pf_eigen(A);
    const auto rb = pf_eigen(B);
    OffspringMatrix I(A.rows(), A.cols());
    I.setIdentity();
    const auto rs = pf_eigen(OffspringMatrix(A + 2.0 * I));
    c.check(std::abs(rs.rho - ra.rho - 2.0) < 1e-9, "shift " + num(rs.rho - ra.rho, 12));
    c.check(rb.rho > ra.rho, "domination " + num(ra.rho) + " <= " + num(rb.rho));
    c.check(ra.residual <= PfOptions{}.tol && rb.residual <= PfOptions{}.tol, "residual " + num(ra.residual, 2));
    c.check(std::abs(ra.mu.sum() - 1) < 1e-12 && std::abs(ra.mu.dot(ra.nu) - 1) < 1e-12, "mu, nu normalized");

    // pmf normalizations
    const WindowChain chain(t, PercParams{0.3, 0.15});
    auto mass = [](const WindowPmf& pmf) {
      double s = 0.0;
      for (const auto& kv : pmf) s += kv.second;
      return s;
    };
    c.check(std::abs(mass(chain.initial_window_dist()) - 1) < 1e-12, "initial pmf sums to 1");
    double worst = 0.0;
    for (std::uint64_t bits = 1; bits <= chain.type_count(); ++bits) {
      for (int i = 1; i <= t.d(); ++i) {
        worst = std::max(worst, std::abs(mass(chain.child_window_dist(Window{bits}, i)) - 1));
      }
    }
    c.check(worst < 1e-12, "transition pmfs within " + num(worst, 2));

    // byte-identical CSV under thread-count changes
    bool same = true;
    const std::vector<std::vector<std::string>> cmds{
        {"survival", "--d", "2", "--k", "2", "--p", "0.2", "--q", "0.22", "--trials", "20000", "--depth",
         "30", "--format", "csv"},
        {"dominance", "--d", "2", "--k", "2", "--p", "0.5", "--q", "0.5", "--delta", "0.01", "--trials",
         "5000"},
        {"limits", "--d", "2", "--k", "2", "--p", "0.2", "--regime", "super", "--trials", "3000", "--n-max",
         "10"},
        {"qc-curve", "--d", "2", "--k", "2", "--p-grid", "0:0.5:0.1"}};
    for (const auto& cmd : cmds) {
      auto a = cmd, b = cmd;
      a.insert(a.end(), {"--threads", "1"});
      b.insert(b.end(), {"--threads", "4"});
      int ra_code = 0, rb_code = 0;
      const std::string x = cli(a, &ra_code);
      const std::string y = cli(b, &rb_code);
      same = same && ra_code == 0 && rb_code == 0 && x == y && !x.empty();
    }
    c.check(same, "CSV identical across 1 and 4 threads");
    return c.done();
  });

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
