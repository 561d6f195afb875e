#include "cli_support.hpp"

#include "univc/diagnostics.hpp"
#include "univc/io.hpp"
#include "univc/simharness.hpp"
#include "univc/structured.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>

using namespace univc;
using namespace univc::cli;

namespace {

constexpr int kExitEmptyCi = 3;

struct Overrides {
  std::string config;
  std::optional<double> alpha;
  std::optional<long long> k;
  std::optional<std::uint64_t> seed_split;
  std::optional<std::uint64_t> seed_u;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> null;
  std::optional<long long> component;
  std::optional<std::string> grid;
  std::optional<std::string> method;
  std::optional<std::string> variant;
  std::optional<std::string> target;
  std::optional<std::string> scenario;
  std::optional<std::string> generator;
  std::optional<int> threads;
  std::optional<int> reps;
  bool nonrandomized = false;
  std::string out = ".";
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON configuration file");
  app->add_option("--out", o.out, "output directory")->capture_default_str();
  app->add_option("--threads", o.threads, "worker threads");
}

void add_test_flags(CLI::App* app, Overrides& o) {
  app->add_option("--alpha", o.alpha, "level");
  app->add_option("--k", o.k, "number of folds (1: single split)");
  app->add_option("--seed-split", o.seed_split, "seed of the data split");
  app->add_option("--seed-u", o.seed_u, "seed of the randomization U");
  app->add_option("--method", o.method, "naive|nulldiag|fulldiag|auto");
  app->add_option("--variant", o.variant, "exact|approx|unconstrained");
  app->add_flag("--nonrandomized", o.nonrandomized, "compare against 1/alpha");
}

json effective_config(const Overrides& o, Config& c) {
  if (!o.config.empty()) c = load_config(o.config);
  json& j = c.data;
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.k) j["k"] = *o.k;
  if (o.seed_split) j["seed_split"] = *o.seed_split;
  if (o.seed_u) j["seed_u"] = *o.seed_u;
  if (o.seed) j["seed"] = *o.seed;
  if (o.null) j["null"] = *o.null;
  if (o.component) j["component"] = *o.component;
  if (o.grid) j["grid"] = *o.grid;
  if (o.method) j["method"] = *o.method;
  if (o.variant) j["variant"] = *o.variant;
  if (o.target) j["target"] = *o.target;
  if (o.scenario) j["scenario"] = *o.scenario;
  if (o.generator) j["generator"] = *o.generator;
  if (o.threads) j["threads"] = *o.threads;
  if (o.reps) j["reps"] = *o.reps;
  if (o.nonrandomized) j["randomized"] = false;
  return j;
}

template <class T>
T value_or(const json& j, const char* key, T def) {
  if (!j.contains(key) || j.at(key).is_null()) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json fit_json(const FitResult& r) {
  return {{"h2", to_std(r.theta.h2)},
          {"tau2", r.theta.tau2},
          {"sigma2", to_std(r.sigma2)},
          {"loglik", r.loglik},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"grad_norm", r.grad_norm},
          {"constrained", r.constrained}};
}

json record(const std::string& command, const json& cfg) {
  return {{"command", command},
          {"version", UNIVC_VERSION},
          {"config_hash", hex64(fnv1a(cfg.dump()))},
          {"config", cfg}};
}

void emit(const Overrides& o, const std::string& name, const json& rec) {
  std::filesystem::create_directories(o.out);
  const std::string text = rec.dump(2) + "\n";
  io::write_text((std::filesystem::path(o.out) / (name + ".json")).string(), text);
  std::cout << text;
}

std::string out_path(const Overrides& o, const std::string& file) {
  std::filesystem::create_directories(o.out);
  return (std::filesystem::path(o.out) / file).string();
}

// ---------------------------------------------------------------------------

int cmd_fit(const Overrides& o) {
  Config c;
  const json cfg = effective_config(o, c);
  const Problem p = load_problem(c);
  const FitResult r = fit_marginal(p.y, p.K, fit_options(cfg));
  json rec = record("fit", cfg);
  rec["n"] = p.y.n();
  rec["M"] = p.K.M();
  rec["representation"] = to_string(p.K.representation());
  rec["fit"] = fit_json(r);
  emit(o, "fit", rec);
  return 0;
}

int cmd_test(const Overrides& o) {
  Config c;
  const json cfg = effective_config(o, c);
  const Problem p = load_problem(c);
  const NullSpec null = parse_null(value_or<std::string>(cfg, "null", ""), p.K.M());
  const auto seed_split = value_or<std::uint64_t>(cfg, "seed_split", kDefaultSeedSplit);
  const auto seed_u = value_or<std::uint64_t>(cfg, "seed_u", kDefaultSeedU);
  const SlrtResult r =
      kfold_slrt(p.y, p.K, null, value_or<Index>(cfg, "k", 1), seed_split, seed_u,
                 value_or<double>(cfg, "alpha", 0.05), slrt_options(cfg),
                 value_or<bool>(cfg, "randomized", true));
  json rec = record("test", cfg);
  rec["seeds"] = {{"split", seed_split}, {"u", seed_u}};
  rec["null"] = null.describe();
  rec["method"] = to_string(r.method);
  rec["k"] = r.k;
  rec["stat"] = r.stat;
  rec["log_stat"] = r.log_stat;
  rec["fold_log_stats"] = r.fold_log_stats;
  rec["u"] = r.u;
  rec["alpha"] = r.alpha;
  rec["randomized"] = r.randomized;
  rec["reject"] = r.reject;
  rec["p_value"] = r.p_value;
  json t1 = json::array(), t0 = json::array();
  for (const auto& f : r.theta1) t1.push_back(fit_json(f));
  for (const auto& f : r.theta0) t0.push_back(fit_json(f));
  rec["theta1"] = t1;
  rec["theta0"] = t0;
  emit(o, "test", rec);
  return 0;
}

int cmd_ci(const Overrides& o) {
  Config c;
  const json cfg = effective_config(o, c);
  const Problem p = load_problem(c);
  if (!cfg.contains("component")) throw UsageError("ci needs --component");
  const Index comp = value_or<Index>(cfg, "component", 1) - 1;
  if (comp < 0 || comp >= p.K.M())
    throw UsageError("component must be in 1.." + std::to_string(p.K.M()));
  const CiTarget target = ci_target_from_string(value_or<std::string>(cfg, "target", "h2"));
  if (!cfg.contains("grid")) throw UsageError("ci needs --grid lo:hi:steps");
  const CiGrid grid = parse_grid(cfg.at("grid").get<std::string>());
  const auto seed_split = value_or<std::uint64_t>(cfg, "seed_split", kDefaultSeedSplit);
  const auto seed_u = value_or<std::uint64_t>(cfg, "seed_u", kDefaultSeedU);
  const double alpha = value_or<double>(cfg, "alpha", 0.05);
  const bool randomized = value_or<bool>(cfg, "randomized", true);

  KFoldEngine engine(p.y, p.K, value_or<Index>(cfg, "k", 1), seed_split, slrt_options(cfg),
                     ci_null(comp, target, 0.0));
  const double u = randomized ? draw_u(seed_u) : 1.0;
  const CiResult ci = confidence_interval(engine, comp, target, grid, alpha, u);

  io::Table curve{{"value", "log_stat", "log_threshold"}, {}};
  for (std::size_t i = 0; i < ci.curve.x.size(); ++i)
    curve.add({ci.curve.x[i], ci.curve.log_stat[i], ci.log_threshold});
  io::write_table(out_path(o, "ci_curve.tsv"), curve);

  json rec = record("ci", cfg);
  rec["seeds"] = {{"split", seed_split}, {"u", seed_u}};
  rec["component"] = comp + 1;
  rec["target"] = to_string(target);
  rec["k"] = engine.k();
  rec["alpha"] = alpha;
  rec["u"] = u;
  rec["randomized"] = randomized;
  rec["log_threshold"] = ci.log_threshold;
  rec["empty"] = ci.empty;
  rec["connected"] = ci.connected;
  if (!ci.empty) {
    rec["lower"] = ci.lower;
    rec["upper"] = ci.upper;
  }
  const int draws = value_or<int>(cfg, "width_draws", 1000);
  if (draws > 0) {
    const auto width_seed = value_or<std::uint64_t>(cfg, "width_seed", seed_u);
    const double full = nonrandomized_width(ci.curve, alpha);
    const auto widths = ci_width_distribution(ci.curve, alpha, draws, width_seed);
    double mean = 0.0;
    for (double w : widths) mean += w;
    mean /= static_cast<double>(widths.size());
    io::Table wt{{"width"}, {}};
    for (double w : widths) wt.add({w});
    io::write_table(out_path(o, "ci_widths.tsv"), wt);
    rec["width_draws"] = draws;
    rec["width_seed"] = width_seed;
    rec["nonrandomized_width"] = full;
    rec["mean_width"] = mean;
    rec["mean_width_ratio"] = full > 0.0 ? mean / full : std::numeric_limits<double>::quiet_NaN();
  }
  emit(o, "ci", rec);
  return ci.empty ? kExitEmptyCi : 0;
}

std::vector<VectorXd> truths_from(const json& j, std::vector<VectorXd> def) {
  if (!j.contains("truths")) return def;
  std::vector<VectorXd> out;
  for (const auto& t : j.at("truths")) {
    const auto v = t.get<std::vector<double>>();
    out.push_back(Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())));
  }
  return out;
}

json mc_json(const McEstimate& e) {
  return {{"estimate", e.estimate}, {"se", e.se}, {"count", e.count}, {"failures", e.failures}};
}

int cmd_simulate(const Overrides& o) {
  Config c;
  const json cfg = effective_config(o, c);
  const std::string scenario = value_or<std::string>(cfg, "scenario", "");
  const auto seed = value_or<std::uint64_t>(cfg, "seed", kDefaultSeed);
  const int threads = value_or<int>(cfg, "threads", 1);
  json rec = record("simulate", cfg);
  rec["scenario"] = scenario;
  rec["seeds"] = {{"master", seed}};

  if (scenario == "coverage") {
    CoverageSpec s;
    const Index n = value_or<Index>(cfg, "n", 300);
    const auto rhos = value_or<std::vector<double>>(cfg, "rhos", {0.95, 0.5});
    for (double r : rhos) s.eigs.push_back(ar1_eigenvalues(n, r));
    const Index M = static_cast<Index>(s.eigs.size());
    std::vector<VectorXd> def;
    for (double h : {0.0, 0.3, 0.6, 0.9}) {
      VectorXd t = VectorXd::Zero(M);
      t(0) = h;
      def.push_back(t);
    }
    s.truths = truths_from(cfg, def);
    s.tau2 = value_or<double>(cfg, "tau2", 1.0);
    s.component = value_or<Index>(cfg, "component", 1) - 1;
    s.alpha = value_or<double>(cfg, "alpha", 0.05);
    s.k = value_or<Index>(cfg, "k", 1);
    s.reps = value_or<int>(cfg, "reps", 2000);
    s.seed = seed;
    s.threads = threads;
    s.fit = fit_options(cfg);
    const auto rows = run_coverage(s);
    io::write_table(out_path(o, "coverage.tsv"), coverage_table(rows, s.component));
    json rj = json::array();
    for (const auto& r : rows)
      rj.push_back({{"truth", to_std(r.truth)},
                    {"randomized", mc_json(r.randomized)},
                    {"nonrandomized", mc_json(r.nonrandomized)}});
    rec["rows"] = rj;
  } else if (scenario == "power") {
    const Index n = value_or<Index>(cfg, "n", 300);
    const SpikedPair sp = spiked_kernel_pair(
        n, value_or<Index>(cfg, "q1", 30), value_or<Index>(cfg, "q2", 40),
        value_or<double>(cfg, "a1", 5.0), value_or<double>(cfg, "a2", 5.0),
        value_or<double>(cfg, "a3", 10.0), value_or<double>(cfg, "c", 100.0),
        value_or<std::uint64_t>(cfg, "kernel_seed", seed));
    PowerSpec s;
    s.exact = sp.exact;
    s.approx = sp.approx;
    const auto truth = value_or<std::vector<double>>(cfg, "truth", {0.0, 0.2});
    s.truth = Eigen::Map<const VectorXd>(truth.data(), static_cast<Index>(truth.size()));
    s.tau2 = value_or<double>(cfg, "tau2", 1.0);
    s.component = value_or<Index>(cfg, "component", 1) - 1;
    s.grid = value_or<std::vector<double>>(cfg, "grid_values", {0.0, 0.05, 0.1, 0.2, 0.4});
    if (cfg.contains("variants")) {
      s.variants.clear();
      for (const auto& v : cfg.at("variants")) s.variants.push_back(variant_from_string(v));
    }
    s.alpha = value_or<double>(cfg, "alpha", 0.05);
    s.reps = value_or<int>(cfg, "reps", 1000);
    s.seed = seed;
    s.threads = threads;
    s.fit = fit_options(cfg);
    const auto curves = run_power(s);
    json cj = json::array();
    for (const auto& cv : curves) {
      io::write_table(out_path(o, std::string("power_") + to_string(cv.variant) + ".tsv"),
                      power_table(s, cv));
      json pts = json::array();
      for (const auto& e : cv.points) pts.push_back(mc_json(e));
      cj.push_back({{"variant", to_string(cv.variant)}, {"points", pts}});
    }
    rec["grid"] = s.grid;
    rec["curves"] = cj;
  } else if (scenario == "timing") {
    TimingSpec s;
    s.ns = value_or<std::vector<Index>>(cfg, "ns", s.ns);
    s.M = value_or<Index>(cfg, "M", s.M);
    s.rho = value_or<double>(cfg, "rho", s.rho);
    s.reps = value_or<int>(cfg, "reps", s.reps);
    s.seed = seed;
    s.fit = fit_options(cfg);
    if (cfg.contains("methods")) {
      s.methods.clear();
      for (const auto& m : cfg.at("methods")) s.methods.push_back(method_from_string(m));
    }
    const TimingResult r = run_timing(s);
    io::write_table(out_path(o, "timing.tsv"), timing_table(r));
    rec["equality_ok"] = r.equality_ok;
    rec["max_stat_discrepancy"] = r.max_stat_discrepancy;
  } else {
    throw UsageError("simulate needs --scenario coverage|power|timing");
  }
  emit(o, "manifest", rec);
  return 0;
}

int cmd_diagnose(const Overrides& o) {
  Config c;
  const json cfg = effective_config(o, c);
  const Problem p = load_problem(c);
  std::vector<MatrixXd> Z;
  if (p.design) {
    Z = build_crossed_Z(*p.design);
  } else if (cfg.contains("z")) {
    for (const auto& f : cfg.at("z")) Z.push_back(io::read_matrix_csv(c.resolve(f.get<std::string>())));
  } else {
    throw UsageError("diagnose needs a crossed design ('design' or 'data') or 'z' files");
  }
  if (static_cast<Index>(Z.size()) != p.K.M())
    throw DimensionMismatchError("need one Z matrix per variance component");
  VectorXd s2;
  json rec = record("diagnose", cfg);
  if (cfg.contains("sigma2")) {
    const auto v = cfg.at("sigma2").get<std::vector<double>>();
    s2 = Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
  } else {
    const FitResult r = fit_marginal(p.y, p.K, fit_options(cfg));
    s2 = r.sigma2;
    rec["fit"] = fit_json(r);
  }
  const BlupResult b = blup(p.y.y, Z, s2);
  const QQData qq = qq_data(b.resid, std::sqrt(s2(s2.size() - 1)));

  io::Table rf{{"index", "y", "fitted", "resid"}, {}};
  for (Index i = 0; i < p.y.n(); ++i)
    rf.add({static_cast<double>(i), p.y.y(i), b.fitted(i), b.resid(i)});
  io::write_table(out_path(o, "resid_fitted.tsv"), rf);
  io::Table qt{{"theoretical", "sample"}, {}};
  for (std::size_t i = 0; i < qq.sample.size(); ++i) qt.add({qq.theoretical[i], qq.sample[i]});
  io::write_table(out_path(o, "qq.tsv"), qt);
  io::Table ut{{"component", "level", "u_hat"}, {}};
  for (std::size_t m = 0; m < Z.size(); ++m) {
    const Index start = b.offsets[m];
    for (Index l = 0; l < Z[m].cols(); ++l)
      ut.add({static_cast<double>(m + 1), static_cast<double>(l), b.u_hat(start + l)});
  }
  io::write_table(out_path(o, "blup.tsv"), ut);

  rec["sigma2"] = to_std(s2);
  rec["distinct_fitted"] = [&] {
    std::vector<double> f = to_std(b.fitted);
    std::sort(f.begin(), f.end());
    Index count = 0;
    for (std::size_t i = 0; i < f.size(); ++i)
      if (i == 0 || f[i] - f[i - 1] > 1e-9 * (1.0 + std::abs(f[i]))) ++count;
    return count;
  }();
  emit(o, "diagnose", rec);
  return 0;
}

int cmd_kernels(const Overrides& o) {
  Config c;
  const json cfg = effective_config(o, c);
  const std::string gen = value_or<std::string>(cfg, "generator", "");
  const auto seed = value_or<std::uint64_t>(cfg, "seed", kDefaultSeed);
  json rec = record("kernels", cfg);
  json files = json::array();
  auto write_lambda = [&](const std::string& name, const VectorXd& v) {
    io::write_column_csv(out_path(o, name), "lambda", v);
    files.push_back(name);
  };
  auto write_dense = [&](const std::string& name, const MatrixXd& A) {
    io::write_matrix_csv(out_path(o, name), A);
    files.push_back(name);
  };
  if (gen == "ar1-eigen") {
    write_lambda("lambda1.csv", ar1_eigenvalues(value_or<Index>(cfg, "n", 300),
                                                value_or<double>(cfg, "rho", 0.5)));
  } else if (gen == "spiked-pair") {
    const SpikedPair sp = spiked_kernel_pair(
        value_or<Index>(cfg, "n", 300), value_or<Index>(cfg, "q1", 30),
        value_or<Index>(cfg, "q2", 40), value_or<double>(cfg, "a1", 5.0),
        value_or<double>(cfg, "a2", 5.0), value_or<double>(cfg, "a3", 10.0),
        value_or<double>(cfg, "c", 100.0), seed);
    const auto dense = sp.exact.materialize_dense();
    write_dense("K1.csv", dense[0]);
    write_dense("K2.csv", dense[1]);
    const auto* E = sp.approx.structure();
    write_lambda("approx_lambda1.csv", E->eigs[0]);
    write_lambda("approx_lambda2.csv", E->eigs[1]);
  } else if (gen == "crossed") {
    CrossedDesign d;
    d.dims = value_or<std::vector<Index>>(cfg, "dims", {});
    d.random = value_or<std::vector<Index>>(cfg, "random", {});
    if (d.random.empty())
      for (Index f = 0; f < d.n_factors(); ++f) d.random.push_back(f);
    d.validate();
    const EigenStructure E = crossed_eigs(d);
    for (Index m = 0; m < E.M(); ++m) write_lambda("lambda" + std::to_string(m + 1) + ".csv", E.eigs[m]);
    if (value_or<bool>(cfg, "write_basis", false)) write_dense("basis.csv", E.materialize_basis());
  } else if (gen == "disjoint-support") {
    const KernelSet K = disjoint_support_kernels(value_or<Index>(cfg, "n", 300),
                                                 value_or<Index>(cfg, "M", 2),
                                                 value_or<double>(cfg, "rho", 0.5), seed);
    const auto* E = K.structure();
    for (Index m = 0; m < E->M(); ++m) write_lambda("lambda" + std::to_string(m + 1) + ".csv", E->eigs[m]);
    write_dense("basis.csv", *E->basis);
  } else {
    throw UsageError("kernels needs --generator ar1-eigen|spiked-pair|crossed|disjoint-support");
  }
  rec["seeds"] = {{"master", seed}};
  rec["files"] = files;
  emit(o, "kernels", rec);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split likelihood-ratio inference for variance components"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(UNIVC_VERSION));
  Overrides o;

  auto* fit = app.add_subcommand("fit", "maximum-likelihood fit on the full data");
  add_common(fit, o);

  auto* test = app.add_subcommand("test", "split likelihood-ratio test of a null");
  add_common(test, o);
  add_test_flags(test, o);
  test->add_option("--null", o.null, "null, e.g. h1=0 or s2=0 or sd1=0 (1-based)");

  auto* ci = app.add_subcommand("ci", "confidence interval by test inversion");
  add_common(ci, o);
  add_test_flags(ci, o);
  ci->add_option("--component", o.component, "component (1-based)");
  ci->add_option("--target", o.target, "h2|sigma2|sd");
  ci->add_option("--grid", o.grid, "lo:hi:steps");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiments");
  add_common(sim, o);
  sim->add_option("--scenario", o.scenario, "coverage|power|timing");
  sim->add_option("--seed", o.seed, "master seed");
  sim->add_option("--reps", o.reps, "replications");
  sim->add_option("--alpha", o.alpha, "level");
  sim->add_option("--k", o.k, "number of folds");

  auto* diag = app.add_subcommand("diagnose", "BLUPs, residuals and QQ data");
  add_common(diag, o);

  auto* kern = app.add_subcommand("kernels", "write generated kernels");
  add_common(kern, o);
  kern->add_option("--generator", o.generator, "ar1-eigen|spiked-pair|crossed|disjoint-support");
  kern->add_option("--seed", o.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*test) return cmd_test(o);
    if (*ci) return cmd_ci(o);
    if (*sim) return cmd_simulate(o);
    if (*diag) return cmd_diagnose(o);
    if (*kern) return cmd_kernels(o);
  } catch (const Error& e) {
    std::cerr << "univc: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "univc: config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "univc: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
