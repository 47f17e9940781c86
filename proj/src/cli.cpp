#include "mrperc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "mrperc/coupling.hpp"
#include "mrperc/critical_curve.hpp"
#include "mrperc/errors.hpp"
#include "mrperc/mtbp.hpp"
#include "mrperc/parallel.hpp"
#include "mrperc/percolation.hpp"
#include "mrperc/window_chain.hpp"

#ifndef MRPERC_VERSION
#define MRPERC_VERSION "0.0.0"
#endif

namespace mrperc {

using json = nlohmann::ordered_json;

// --- Exact decimal grids -------------------------------------------------------

namespace {

struct Decimal {
  std::int64_t digits = 0;  // value = digits * 10^-scale
  int scale = 0;
};

Decimal parse_decimal(const std::string& s) {
  Decimal d;
  bool seen_digit = false;
  bool after_point = false;
  for (char c : s) {
    if (c == '.' && !after_point) {
      after_point = true;
    } else if (c >= '0' && c <= '9') {
      if (d.digits > (std::numeric_limits<std::int64_t>::max() - 9) / 10 || d.scale >= 15) {
        throw ParameterError("grid value '" + s + "' has too many digits");
      }
      d.digits = d.digits * 10 + (c - '0');
      if (after_point) ++d.scale;
      seen_digit = true;
    } else {
      throw ParameterError("grid value '" + s + "' is not a nonnegative decimal");
    }
  }
  if (!seen_digit) throw ParameterError("empty grid value");
  return d;
}

std::int64_t rescale(Decimal d, int scale) {
  for (int i = d.scale; i < scale; ++i) d.digits *= 10;
  return d.digits;
}

double decimal_to_double(std::int64_t digits, int scale) {
  std::string s = std::to_string(digits);
  if (scale > 0) {
    if (static_cast<int>(s.size()) <= scale) s.insert(0, static_cast<std::size_t>(scale + 1) - s.size(), '0');
    s.insert(s.size() - static_cast<std::size_t>(scale), ".");
  }
  double x = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), x);
  return x;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) throw ParameterError("grid must look like a:b:step");
    const Decimal a = parse_decimal(parts[0]);
    const Decimal b = parse_decimal(parts[1]);
    const Decimal h = parse_decimal(parts[2]);
    const int scale = std::max({a.scale, b.scale, h.scale});
    const std::int64_t ai = rescale(a, scale);
    const std::int64_t bi = rescale(b, scale);
    const std::int64_t hi = rescale(h, scale);
    if (hi <= 0) throw ParameterError("grid step must be positive");
    if (bi < ai) throw ParameterError("grid end is below its start");
    if ((bi - ai) / hi > 1'000'000) throw ParameterError("grid has more than 10^6 points");
    for (std::int64_t x = ai; x <= bi; x += hi) out.push_back(decimal_to_double(x, scale));
  } else {
    for (const auto& part : split(spec, ',')) {
      const Decimal d = parse_decimal(part);
      out.push_back(decimal_to_double(d.digits, d.scale));
    }
  }
  if (out.empty()) throw ParameterError("empty grid");
  return out;
}

// --- Output ---------------------------------------------------------------------

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string cell_text(const json& v) {
  if (v.is_number_float()) return fmt(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

json number(double x) {
  // JSON has no inf/nan; spell them as strings.
  if (std::isfinite(x)) return x;
  return fmt(x);
}

// One result: metadata, scalar summary fields and an optional table.
struct Report {
  std::vector<std::pair<std::string, std::string>> meta;
  json summary = json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void write(std::ostream& os, const std::string& format) const {
    if (format == "json") {
      json doc;
      json m = json::object();
      for (const auto& [key, value] : meta) m[key] = value;
      doc["meta"] = m;
      for (const auto& [key, value] : summary.items()) doc[key] = value;
      if (!columns.empty()) {
        json table = json::array();
        for (const auto& row : rows) {
          json obj = json::object();
          for (std::size_t c = 0; c < columns.size(); ++c) obj[columns[c]] = row[c];
          table.push_back(obj);
        }
        doc["rows"] = table;
      }
      os << doc.dump(2) << '\n';
      return;
    }
    for (const auto& [key, value] : meta) os << "# " << key << ": " << value << '\n';
    if (columns.empty()) {
      // Scalar results become a one-row table.
      std::vector<std::string> keys;
      std::vector<std::string> values;
      for (const auto& [key, value] : summary.items()) {
        keys.push_back(key);
        values.push_back(cell_text(value));
      }
      for (std::size_t i = 0; i < keys.size(); ++i) os << (i ? "," : "") << keys[i];
      os << '\n';
      for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
      os << '\n';
      return;
    }
    for (const auto& [key, value] : summary.items()) os << "# " << key << "=" << cell_text(value) << '\n';
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << cell_text(row[c]);
      os << '\n';
    }
  }
};

// Options every subcommand shares.
struct Common {
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 1;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* sub, Common& c, const std::string& default_format) {
  c.format = default_format;
  sub->add_option("--seed", c.seed, "Master seed");
  sub->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::Range(1u, 1024u));
  sub->add_option("--out", c.out, "Output file (default: standard output)");
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

void check_prob(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) throw ParameterError(std::string(name) + " must lie in [0,1]");
}

// Config string built from the parsed options, --threads excluded so the
// output is identical for any thread count.
std::vector<std::pair<std::string, std::string>> metadata(const CLI::App* sub) {
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("mrperc", MRPERC_VERSION);
  meta.emplace_back("command", sub->get_name());
  std::string config;
  std::string seed;
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "--threads") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    } else {
      value = opt->get_default_str();
    }
    if (name == "--seed") {
      seed = value;
      continue;
    }
    if (value.empty() || value == "nan") continue;  // unset, resolved later
    config += (config.empty() ? "" : " ") + name.substr(2) + "=" + value;
  }
  meta.emplace_back("config", config);
  meta.emplace_back("seed", seed);
  return meta;
}

void emit(const Report& report, const Common& c, std::ostream& out) {
  if (c.out.empty()) {
    report.write(out, c.format);
    return;
  }
  std::ofstream file(c.out, std::ios::binary);
  if (!file) throw ParameterError("cannot open output file " + c.out);
  report.write(file, c.format);
}

}  // namespace

// --- Subcommands ------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Critical curve and Monte Carlo checks for multi-range oriented percolation on trees"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", MRPERC_VERSION);

  std::map<const CLI::App*, Common> commons;  // one per subcommand
  int d = 2;
  int k = 2;
  double p = 0.0;
  double q = 0.0;
  double s = 0.0;
  double tol = kDefaultQcTol;
  std::string p_grid;
  std::uint64_t trials = 100000;
  int depth = 60;
  int k_min = 2;
  int k_max = 4;
  std::string regime;
  std::string method = "direct";
  double q_offset = std::nan("");
  int n_max = 26;
  std::vector<int> horizons{15, 25};
  std::uint64_t threshold = 50;
  int radius = 1;
  double delta = 0.0;
  std::string dump;
  int top = 16;
  int max_iter = PfOptions{}.max_iter;

  auto tree_opts = [&](CLI::App* sub) {
    sub->add_option("--d", d, "Branching number")->required();
    sub->add_option("--k", k, "Long-edge range")->required();
  };

  CLI::App* qc_point = app.add_subcommand("qc-point", "Critical q for one p (JSON by default)");
  tree_opts(qc_point);
  qc_point->add_option("--p", p, "Short-edge probability")->required();
  qc_point->add_option("--tol", tol, "Bisection width in q");
  add_common(qc_point, commons[qc_point], "json");

  CLI::App* qc_curve = app.add_subcommand("qc-curve", "Critical curve over a p grid");
  tree_opts(qc_curve);
  qc_curve->add_option("--p-grid", p_grid, "a:b:step (inclusive) or a,b,c")->required();
  qc_curve->add_option("--tol", tol, "Bisection width in q");
  add_common(qc_curve, commons[qc_curve], "csv");

  CLI::App* asym = app.add_subcommand("asymptotics", "Rescaled second-order term against s_star");
  asym->add_option("--d", d, "Branching number")->required();
  asym->add_option("--p", p, "Short-edge probability")->required();
  asym->add_option("--k-min", k_min, "Smallest k");
  asym->add_option("--k-max", k_max, "Largest k");
  asym->add_option("--tol", tol, "Bisection width in q");
  add_common(asym, commons[asym], "csv");

  CLI::App* surv = app.add_subcommand("survival", "Monte Carlo survival to a depth (JSON by default)");
  tree_opts(surv);
  surv->add_option("--p", p, "Short-edge probability")->required();
  surv->add_option("--q", q, "Long-edge probability")->required();
  surv->add_option("--trials", trials, "Trials");
  surv->add_option("--depth", depth, "Depth of the survival proxy");
  add_common(surv, commons[surv], "json");

  CLI::App* limits = app.add_subcommand("limits", "Limit behaviour of X_n around q_c");
  tree_opts(limits);
  limits->add_option("--regime", regime, "super, sub or critical")
      ->required()
      ->check(CLI::IsMember({"super", "sub", "critical"}));
  limits->add_option("--p", p, "Short-edge probability")->required();
  limits->add_option("--q-offset", q_offset,
                     "q - q_c(p) (default +0.1 super, -0.05 sub, 0 critical)");
  limits->add_option("--trials", trials, "Trials (attempts for critical)");
  limits->add_option("--method", method, "direct percolation or window chain")
      ->check(CLI::IsMember({"direct", "chain"}));
  limits->add_option("--n-max", n_max, "super: last generation");
  limits->add_option("--horizons", horizons, "sub: generations compared")->delimiter(',');
  limits->add_option("--threshold", threshold, "critical: condition on more than this many vertices");
  limits->add_option("--radius", radius, "critical: neighbourhood radius");
  limits->add_option("--tol", tol, "Bisection width in q");
  add_common(limits, commons[limits], "csv");

  CLI::App* dom = app.add_subcommand("dominance", "Survival functions of Z(p,q) and Zhat(p,q-delta)");
  tree_opts(dom);
  dom->add_option("--p", p, "Short-edge probability")->required();
  dom->add_option("--q", q, "Long-edge probability")->required();
  dom->add_option("--delta", delta, "Reduction of q on the wide tree");
  dom->add_option("--trials", trials, "Trials per side");
  add_common(dom, commons[dom], "csv");

  CLI::App* mat = app.add_subcommand("matrix", "Perron-Frobenius data of the window chain");
  tree_opts(mat);
  mat->add_option("--p", p, "Short-edge probability")->required();
  mat->add_option("--q", q, "Long-edge probability")->required();
  mat->add_option("--dump", dump, "Write the sparse mean matrix as CSV");
  mat->add_option("--top", top, "Windows listed, by decreasing mu");
  mat->add_option("--max-iter", max_iter, "Power-iteration cap");
  add_common(mat, commons[mat], "csv");

  CLI::App* crit = app.add_subcommand("criteria", "Monte Carlo estimates of the two mean criteria");
  tree_opts(crit);
  crit->add_option("--p", p, "Short-edge probability")->required();
  crit->add_option("--s", s, "Second-order parameter: q = (1-pd)/d^k + s/d^{2k}")->required();
  crit->add_option("--trials", trials, "Trials");
  add_common(crit, commons[crit], "json");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << MRPERC_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (trials == 0) throw ParameterError("--trials must be >= 1");
    if (!(tol > 0.0)) throw ParameterError("--tol must be positive");
    CLI::App* sub = app.get_subcommands().front();
    const Common& common = commons.at(sub);
    RhoOptions ropts;
    ropts.threads = common.threads;
    Report report;
    report.meta = metadata(sub);

    auto point_row = [](const CurvePoint& pt) {
      return std::vector<json>{pt.p, pt.q_c, pt.lower_bound, pt.gap, pt.rho_residual};
    };

    if (sub == qc_point) {
      check_prob(p, "--p");
      const TreeParams params(d, k);
      const CurvePoint pt = qc(p, params, tol, ropts);
      report.summary = json{{"p", pt.p},
                            {"qc", pt.q_c},
                            {"lower_bound", pt.lower_bound},
                            {"gap", pt.gap},
                            {"rho_residual", pt.rho_residual},
                            {"bisection_width", pt.bisection_width}};
    } else if (sub == qc_curve) {
      const TreeParams params(d, k);
      const std::vector<double> grid = parse_grid(p_grid);
      for (double x : grid) check_prob(x, "--p-grid values");
      const Sweep sweep = qc_sweep(grid, params, tol, ropts);
      report.summary = json{{"strictly_decreasing", sweep.strictly_decreasing ? "true" : "false"}};
      report.columns = {"p", "qc", "lower_bound", "gap", "rho_residual"};
      for (const auto& pt : sweep.points) report.rows.push_back(point_row(pt));
    } else if (sub == asym) {
      check_prob(p, "--p");
      const auto rows = asymptotics_table(p, d, k_min, k_max, tol, ropts);
      report.columns = {"k", "qc", "s_k", "s_star", "residual"};
      for (const auto& r : rows) report.rows.push_back({r.k, r.q_c, r.s_k, r.s_star, r.residual});
    } else if (sub == surv) {
      check_prob(p, "--p");
      check_prob(q, "--q");
      const TreeParams params(d, k);
      const Estimate e = estimate_survival(params, PercParams::make(p, q), trials, depth, common.seed,
                                           common.threads);
      report.summary = json{{"frequency", number(e.value)}, {"se", number(e.se)}, {"depth", depth},
                            {"trials", trials}};
    } else if (sub == limits) {
      check_prob(p, "--p");
      const TreeParams params(d, k);
      if (std::isnan(q_offset)) q_offset = regime == "super" ? 0.1 : regime == "sub" ? -0.05 : 0.0;
      const double q_c = qc(p, params, tol, ropts).q_c;
      const double qq = q_c + q_offset;
      check_prob(qq, "q_c(p) + --q-offset");
      const PercParams perc = PercParams::make(p, qq);
      report.summary["qc"] = q_c;
      report.summary["q"] = qq;
      auto sampler = [&]() {
        return method == "chain" ? chain_x_sampler(WindowChain(params, perc), common.seed)
                                 : layer_x_sampler(params, perc, common.seed);
      };
      if (regime == "super") {
        if (n_max < 1) throw ParameterError("--n-max must be >= 1");
        const double r = rho(p, qq, params, ropts);
        const GrowthReport g = growth_profile(sampler(), n_max, trials, common.threads);
        report.summary["rho"] = r;
        report.columns = {"n", "mean_x", "se_x", "ratio", "ratio_over_rho"};
        for (int n = 0; n < n_max; ++n) {
          const double ratio = g.ratio(n);
          report.rows.push_back({n, g.mean_x[static_cast<std::size_t>(n)].value,
                                 g.mean_x[static_cast<std::size_t>(n)].se, ratio, ratio / r});
        }
      } else if (regime == "sub") {
        if (horizons.size() != 2) throw ParameterError("--horizons takes exactly two generations");
        const ConditionalReport c = conditional_laws(sampler(), horizons, trials, common.threads);
        if (c.survivors[0] == 0 || c.survivors[1] == 0) {
          throw FeasibilityError("no surviving runs at one of the horizons; raise --trials");
        }
        report.summary["survivors_" + std::to_string(horizons[0])] = c.survivors[0];
        report.summary["survivors_" + std::to_string(horizons[1])] = c.survivors[1];
        report.summary["tv_distance"] = tv_distance(c.law[0], c.law[1]);
        report.summary["tv_noise_scale"] = tv_noise_scale(c.law[0], c.law[1]);
        std::set<std::int64_t> support;
        for (const auto& h : c.law) {
          for (const auto& kv : h.counts) support.insert(kv.first);
        }
        report.columns = {"i", "pmf_n" + std::to_string(horizons[0]), "pmf_n" + std::to_string(horizons[1])};
        for (std::int64_t i : support) report.rows.push_back({i, c.law[0].prob(i), c.law[1].prob(i)});
      } else {
        const NeighbourhoodReport nb =
            conditioned_cluster_sample(params, perc, threshold, radius, trials, common.seed, common.threads);
        report.summary["attempts"] = nb.attempts;
        report.summary["accepted"] = nb.accepted;
        report.summary["acceptance_rate"] = nb.acceptance_rate();
        report.columns = {"certificate", "shape", "count", "probability"};
        for (const auto& [cert, count] : nb.classes) {
          report.rows.push_back({cert, nb.examples.at(cert), count,
                                 static_cast<double>(count) / static_cast<double>(nb.accepted)});
        }
      }
    } else if (sub == dom) {
      check_prob(p, "--p");
      check_prob(q, "--q");
      const TreeParams params(d, k);
      const DominanceReport r = dominance_test(params, p, q, delta, trials, common.seed, common.threads);
      report.summary["max_violation_sigma"] = number(r.max_violation_sigma);
      report.summary["dominated"] = r.dominated ? "true" : "false";
      report.summary["note"] =
          "statistical check; the exact coupler applies to small finite outcome sets only";
      report.columns = {"threshold", "surv_Z", "se_Z", "surv_Zhat", "se_Zhat", "violation_sigma"};
      for (const auto& row : r.rows) {
        report.rows.push_back({row.threshold, row.surv_Z, row.se_Z, row.surv_Zhat, row.se_Zhat,
                               number(row.violation_sigma)});
      }
    } else if (sub == mat) {
      check_prob(p, "--p");
      check_prob(q, "--q");
      const TreeParams params(d, k);
      const WindowChain chain(params, PercParams::make(p, q));
      const OffspringMatrix M = chain.build_M(common.threads);
      if (max_iter < 1) throw ParameterError("--max-iter must be >= 1");
      PfOptions pf = ropts.pf;
      pf.max_iter = max_iter;
      const SpectralResult<double> r = pf_eigen(M, pf);
      if (!dump.empty()) {
        std::ofstream file(dump, std::ios::binary);
        if (!file) throw ParameterError("cannot open dump file " + dump);
        write_matrix_csv(file, M);
      }
      report.summary["types"] = static_cast<std::uint64_t>(M.rows());
      report.summary["nonzeros"] = static_cast<std::uint64_t>(M.nonZeros());
      report.summary["rho"] = r.rho;
      report.summary["residual"] = r.residual;
      report.summary["iterations"] = r.iterations;
      std::vector<Eigen::Index> order(static_cast<std::size_t>(M.rows()));
      for (Eigen::Index i = 0; i < M.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return r.mu[a] > r.mu[b]; });
      order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(top, 0))));
      report.columns = {"window_hex", "size", "mu", "nu"};
      for (Eigen::Index i : order) {
        report.rows.push_back({to_hex(window_at(i)), window_at(i).size(), r.mu[i], r.nu[i]});
      }
    } else if (sub == crit) {
      check_prob(p, "--p");
      const TreeParams params(d, k);
      const CriteriaEstimate c = criteria_eval(params, p, s, trials, common.seed, common.threads);
      auto ci = [](Estimate e) {
        return json{{"value", e.value}, {"se", e.se}, {"ci_low", e.value - 1.96 * e.se},
                    {"ci_high", e.value + 1.96 * e.se}};
      };
      if (common.format == "json") {
        report.summary = json{{"q", c.q}, {"lhs_a", ci(c.lhs_a)}, {"lhs_b", ci(c.lhs_b)}};
      } else {
        report.columns = {"quantity", "value", "se", "ci_low", "ci_high"};
        report.summary["q"] = c.q;
        for (const auto& [name, e] : {std::pair{"lhs_a", c.lhs_a}, std::pair{"lhs_b", c.lhs_b}}) {
          report.rows.push_back({name, e.value, e.se, e.value - 1.96 * e.se, e.value + 1.96 * e.se});
        }
      }
    }
    emit(report, common, out);
    return kExitOk;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CapExceeded& e) {
    err << "cap exceeded: " << e.what() << '\n';
    return kExitCap;
  } catch (const FeasibilityError& e) {
    err << "infeasible: " << e.what() << '\n';
    return kExitCap;
  } catch (const NonConvergence& e) {
    err << "no convergence: " << e.what() << " (last residual " << fmt(e.last_residual()) << ")\n";
    return kExitNonConvergence;
  } catch (const ConsistencyError& e) {
    err << "inconsistent result: " << e.what() << '\n';
    return kExitNonConvergence;
  }
}

}  // namespace mrperc
