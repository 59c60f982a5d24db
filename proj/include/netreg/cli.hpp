#pragma once

// Command-line front end: distances, estimate, simulate, peer.
// Exit codes: 0 success, 1 usage or validation failure, 2 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "netreg/codegree.hpp"
#include "netreg/estimators.hpp"
#include "netreg/inference.hpp"
#include "netreg/peerfx.hpp"
#include "netreg/simlab.hpp"

namespace netreg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

struct RunConfig {
  std::string subcommand;
  std::string help;  // non-empty when --help was requested

  // inputs
  std::vector<std::string> adjacency;
  std::string nodes;
  std::vector<std::string> link_covariates;
  bool directed = false;
  bool weighted = false;
  std::string y_column = "y";
  std::vector<std::string> x_columns;
  std::vector<std::string> iv_columns;

  // kernels and bandwidths
  std::string kernel = "epanechnikov";
  KernelArgument argument = KernelArgument::root;
  BandwidthRule bandwidth{0.1, 1.0 / 9.0};
  std::optional<std::vector<double>> bias_correct;  // L, c2..cL, theta
  std::optional<Index> adaptive;
  std::optional<double> hz;
  std::string variance = "general";
  double ci_level = 0.95;
  std::string variant = "link-cov";

  // simulation
  std::vector<std::string> designs{"blockmodel"};
  std::vector<Index> ns{100};
  Index reps = 500;
  std::uint64_t seed = 20240601;
  bool all_tables = false;
  std::vector<int> estimators{1, 2, 3, 4, 5, 6};
  std::string format = "text";
  std::string emit_dir;

  // output
  std::string out;
  std::string lambda_out;
  unsigned threads = 0;
  int verbosity = 1;
};

namespace detail {

inline unsigned threads_from_env() {
  const char* env = std::getenv("NETREG_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ValidationError(std::string("NETREG_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<unsigned>(v);
}

inline BiasCorrectionSpec bias_spec_from(const std::vector<double>& v) {
  if (v.size() < 2) throw ValidationError("--bias-correct expects L,c2,...,cL,theta");
  const double lval = v.front();
  if (lval < 1 || lval != std::floor(lval)) throw ValidationError("--bias-correct: L must be a positive integer");
  const auto L = static_cast<Index>(lval);
  if (static_cast<Index>(v.size()) != L + 1) {
    throw ValidationError("--bias-correct expects " + std::to_string(L + 1) + " values (L, c2..cL, theta)");
  }
  std::vector<double> c{1.0};
  for (Index l = 1; l < L; ++l) c.push_back(v[static_cast<std::size_t>(l)]);
  return solve_bias_weights(L, std::move(c), v.back());
}

}  // namespace detail

/// Parses argv into a validated RunConfig. Throws ValidationError on usage errors.
inline RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig cfg;
  CLI::App app{"Codegree-matching estimators for regressions with network fixed effects", "netreg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::optional<unsigned> threads;
  bool quiet = false, verbose = false;
  app.add_option("--threads", threads, "Worker threads (default: NETREG_THREADS, then all cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");
  app.add_flag("-v,--verbose", verbose, "Log each replication");

  std::string kernel_argument = "root";
  double bw_exponent = cfg.bandwidth.exponent;
  auto add_kernel_options = [&](CLI::App* sub) {
    sub->add_option("--kernel", cfg.kernel, "Kernel family")->capture_default_str();
    sub->add_option("--kernel-argument", kernel_argument, "Kernel sees root (sqrt d2 / h) or squared (d2 / h)")
        ->check(CLI::IsMember({"root", "squared"}))
        ->capture_default_str();
    sub->add_option("--bandwidth-constant", cfg.bandwidth.constant, "h = constant * n^-exponent")
        ->capture_default_str();
    sub->add_option("--bandwidth-exponent", bw_exponent, "Bandwidth rate exponent");
  };

  auto* distances = app.add_subcommand("distances", "Write the squared codegree distance matrix");
  distances->add_option("--adjacency", cfg.adjacency, "Adjacency CSV (several layers with --weighted)")->required();
  distances->add_flag("--directed", cfg.directed, "Skip the symmetry check");
  distances->add_flag("--weighted", cfg.weighted, "Treat adjacency files as weighted layers (maximum distance)");
  distances->add_option("--link-covariates", cfg.link_covariates, "Link covariate CSV layers (conditional distance)");
  distances->add_option("--hz", cfg.hz, "Link-covariate bandwidth");
  distances->add_option("--kernel", cfg.kernel, "Kernel family for link covariates")->capture_default_str();
  distances->add_option("--out", cfg.out, "Output CSV (default stdout)");

  auto* estimate = app.add_subcommand("estimate", "Estimate beta, its variance and lambda");
  estimate->add_option("--adjacency", cfg.adjacency, "Adjacency CSV")->required()->expected(1);
  estimate->add_option("--nodes", cfg.nodes, "Node CSV with header")->required();
  estimate->add_flag("--directed", cfg.directed, "Skip the symmetry check");
  estimate->add_option("--y", cfg.y_column, "Outcome column")->capture_default_str();
  estimate->add_option("--x", cfg.x_columns, "Regressor columns (default: columns starting with x)")->delimiter(',');
  add_kernel_options(estimate);
  auto* bc = estimate->add_option("--bias-correct", cfg.bias_correct, "Jackknife correction L,c2,...,cL,theta")
                 ->delimiter(',');
  auto* ad = estimate->add_option("--adaptive", cfg.adaptive, "Adaptive bandwidths with m matches per agent");
  bc->excludes(ad);
  auto* iv = estimate->add_option("--iv", cfg.iv_columns, "Instrument columns for the three-step IV estimator")
                 ->delimiter(',');
  iv->excludes(bc);
  estimate->add_option("--variance", cfg.variance, "Variance estimator")
      ->check(CLI::IsMember({"general", "finite-support"}))
      ->capture_default_str();
  estimate->add_option("--ci-level", cfg.ci_level, "Confidence level")->capture_default_str();
  estimate->add_option("--out", cfg.out, "JSON report (default stdout)");
  estimate->add_option("--lambda-out", cfg.lambda_out, "CSV for the lambda estimates (default <out>.lambda.csv)");

  std::vector<std::string> designs;
  std::vector<Index> ns;
  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo designs");
  simulate->add_option("--design", designs, "blockmodel, degree or homophily")
      ->delimiter(',')
      ->check(CLI::IsMember({"blockmodel", "degree", "homophily"}));
  simulate->add_option("--n,--ns", ns, "Sample sizes")->delimiter(',');
  simulate->add_option("--reps", cfg.reps, "Replications")->capture_default_str();
  simulate->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  simulate->add_flag("--all-tables", cfg.all_tables, "All three designs at n = 50, 100, 200");
  simulate->add_option("--estimators", cfg.estimators, "Estimator ids 1-6")->delimiter(',');
  simulate->add_option("--format", cfg.format, "Table printed to stdout")
      ->check(CLI::IsMember({"text", "csv", "markdown"}))
      ->capture_default_str();
  simulate->add_option("--emit", cfg.emit_dir, "Also write replication 0 as adjacency.csv and nodes.csv here");
  simulate->add_option("--out", cfg.out, "Report CSV");
  add_kernel_options(simulate);

  auto* peer = app.add_subcommand("peer", "Estimate linear-in-means peer effects");
  peer->add_option("--adjacency", cfg.adjacency, "Adjacency CSV")->required()->expected(1);
  peer->add_option("--nodes", cfg.nodes, "Node CSV with header")->required();
  peer->add_flag("--directed", cfg.directed, "Skip the symmetry check");
  peer->add_option("--y", cfg.y_column, "Outcome column")->capture_default_str();
  peer->add_option("--x", cfg.x_columns, "Regressor columns")->delimiter(',');
  peer->add_option("--variant", cfg.variant, "link-cov or agent-z")
      ->check(CLI::IsMember({"link-cov", "agent-z"}))
      ->capture_default_str();
  peer->add_option("--link-covariates", cfg.link_covariates, "Link covariate CSV layers");
  peer->add_option("--hz", cfg.hz, "Covariate bandwidth")->required();
  peer->add_option("--out", cfg.out, "JSON report (default stdout)");
  peer->add_option("--lambda-out", cfg.lambda_out, "CSV for the lambda estimates");
  add_kernel_options(peer);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    cfg.help = app.help();
    return cfg;
  } catch (const CLI::CallForAllHelp&) {
    cfg.help = app.help("", CLI::AppFormatMode::All);
    return cfg;
  } catch (const CLI::ParseError& e) {
    throw ValidationError(std::string(e.what()) + "\nRun with --help for usage.");
  }
  for (auto* sub : app.get_subcommands()) cfg.subcommand = sub->get_name();

  cfg.argument = parse_kernel_argument(kernel_argument);
  cfg.bandwidth.exponent = bw_exponent;
  cfg.bandwidth.validate();
  parse_kernel_family(cfg.kernel);
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) throw ValidationError("--ci-level must lie in (0, 1)");
  if (cfg.hz && !(*cfg.hz > 0.0)) throw ValidationError("--hz must be positive");
  if (cfg.adaptive && *cfg.adaptive < 1) throw ValidationError("--adaptive needs m >= 1");
  if (cfg.bias_correct) detail::bias_spec_from(*cfg.bias_correct);
  if (cfg.bias_correct && cfg.variance == "finite-support")
    throw ValidationError("--variance finite-support is not available with --bias-correct");
  cfg.threads = threads ? *threads : detail::threads_from_env();
  cfg.verbosity = quiet ? 0 : (verbose ? 2 : 1);

  if (cfg.subcommand == "distances") {
    if (!cfg.link_covariates.empty() && !cfg.hz) throw ValidationError("--link-covariates needs --hz");
    if (!cfg.link_covariates.empty() && cfg.weighted)
      throw ValidationError("--weighted and --link-covariates cannot be combined");
    if (cfg.adjacency.size() > 1 && !cfg.weighted) throw ValidationError("several --adjacency files need --weighted");
  }
  if (cfg.subcommand == "peer" && cfg.variant == "link-cov" && cfg.link_covariates.empty())
    throw ValidationError("--variant link-cov needs --link-covariates");
  if (cfg.subcommand == "simulate") {
    if (cfg.all_tables) {
      if (!designs.empty()) throw ValidationError("--all-tables runs every design; drop --design");
      cfg.designs = {"blockmodel", "degree", "homophily"};
      cfg.ns = ns.empty() ? std::vector<Index>{50, 100, 200} : ns;
    } else {
      if (designs.empty()) throw ValidationError("simulate needs --design or --all-tables");
      cfg.designs = designs;
      if (!ns.empty()) cfg.ns = ns;
    }
    if (cfg.reps < 1) throw ValidationError("--reps must be at least 1");
    for (Index n : cfg.ns)
      if (n < 10) throw ValidationError("--n must be at least 10");
    for (int e : cfg.estimators)
      if (e < 1 || e > kEstimatorCount) throw ValidationError("--estimators takes ids 1 to 6");
  }
  return cfg;
}

inline RunConfig parse_args(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"netreg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_args(static_cast<int>(argv.size()), argv.data());
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << text;
}

inline nlohmann::json to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

inline nlohmann::json to_json(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) out.push_back(v(i));
    else out.push_back(nullptr);
  }
  return out;
}

inline nlohmann::json summary(const Vector& v) {
  std::vector<double> vals;
  for (Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v(i))) vals.push_back(v(i));
  nlohmann::json out;
  out["missing"] = v.size() - static_cast<Index>(vals.size());
  if (vals.empty()) {
    out["min"] = out["median"] = out["max"] = nullptr;
    return out;
  }
  std::sort(vals.begin(), vals.end());
  const std::size_t m = vals.size();
  out["min"] = vals.front();
  out["median"] = m % 2 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
  out["max"] = vals.back();
  return out;
}

inline std::string lambda_path(const RunConfig& cfg) {
  if (!cfg.lambda_out.empty()) return cfg.lambda_out;
  if (!cfg.out.empty() && cfg.out != "-") return cfg.out + ".lambda.csv";
  return {};
}

inline void write_lambda(const std::string& path, const LambdaEstimate& lam) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  f << "agent,lambda,r_hat\n";
  char buf[96];
  for (Index i = 0; i < lam.values.size(); ++i) {
    if (lam.missing(i)) std::snprintf(buf, sizeof buf, "%lld,NA,%.17g\n", static_cast<long long>(i), lam.r_hat(i));
    else std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(i), lam.values(i), lam.r_hat(i));
    f << buf;
  }
}

inline NodeSchema schema_of(const RunConfig& cfg) {
  NodeSchema s;
  s.y = cfg.y_column;
  s.x = cfg.x_columns;
  s.z = cfg.iv_columns;
  return s;
}

inline int run_distances(const RunConfig& cfg, std::ostream& out) {
  DistanceMatrix d2;
  const KernelSpec kz{parse_kernel_family(cfg.kernel)};
  if (cfg.weighted) {
    std::vector<Matrix> layers;
    for (const auto& p : cfg.adjacency) layers.push_back(read_csv_grid(p));
    d2 = max_codegree_distance_sq(WeightedNetwork::from_layers(std::move(layers)));
  } else {
    const auto net = load_network(cfg.adjacency.front(), cfg.directed);
    if (!cfg.link_covariates.empty()) {
      d2 = conditional_codegree_distance_sq(net, load_link_covariates(cfg.link_covariates, cfg.directed), kz, *cfg.hz);
    } else {
      d2 = codegree_distance_sq(net);
    }
  }
  if (cfg.out.empty() || cfg.out == "-") {
    char buf[32];
    for (Index i = 0; i < d2.size(); ++i) {
      for (Index j = 0; j < d2.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", d2(i, j));
        out << (j ? "," : "") << buf;
      }
      out << '\n';
    }
  } else {
    write_csv_grid(cfg.out, d2.d2);
  }
  return kExitOk;
}

inline int run_estimate(const RunConfig& cfg, std::ostream& out) {
  const auto net = load_network(cfg.adjacency.front(), cfg.directed);
  const auto sample = load_nodes(cfg.nodes, schema_of(cfg), net.size());
  const Index n = sample.size();
  const auto d2 = codegree_distance_sq(net);
  const KernelSpec kernel{parse_kernel_family(cfg.kernel)};
  const double h = bandwidth(cfg.bandwidth, n);
  check_bandwidth_rate(cfg.bandwidth);
  const auto base = MatchingRule::fixed(h, kernel, cfg.argument);

  nlohmann::json report;
  report["n"] = n;
  report["regressors"] = sample.x_names();
  report["kernel"] = cfg.kernel;
  report["kernel_argument"] = to_string(cfg.argument);
  report["bandwidth"] = {{"constant", cfg.bandwidth.constant}, {"exponent", cfg.bandwidth.exponent}, {"h", h}};
  report["ci_level"] = cfg.ci_level;

  Vector beta;
  std::optional<VarianceResult> var;
  MatchingRule rule = base;
  LambdaEstimate lam;
  if (!cfg.iv_columns.empty()) {
    const auto iv = iv_three_step(sample, d2, base);
    beta = iv.beta;
    lam = iv.lambda;
    report["estimator"] = "iv-three-step";
    report["n_active_pairs"] = iv.fit.n_active_pairs;
    report["iv"] = {{"instruments", cfg.iv_columns}, {"first_stage_f", to_json(iv.first_stage_f)}};
    report["variance_note"] = "no variance estimator is available for the three-step IV estimator";
  } else if (cfg.bias_correct) {
    const auto spec = bias_spec_from(*cfg.bias_correct);
    const auto fit = bias_corrected_beta(sample, d2, base, spec);
    beta = fit.beta;
    std::vector<MatchingRule> rules;
    for (double c : spec.c) rules.push_back(base.scaled(c));
    var = bias_corrected_variance(fit.components, spec, omega_hat_grid(sample, beta, net, d2, rules), n);
    lam = lambda_hat(sample, beta, d2, base);
    report["estimator"] = "bias-corrected";
    report["bias_correction"] = {{"L", spec.L}, {"c", spec.c}, {"theta", spec.theta}, {"a", to_json(spec.a)}};
    Index active = 0;
    for (const auto& c : fit.components) active = std::max(active, c.n_active_pairs);
    report["n_active_pairs"] = active;
  } else {
    if (cfg.adaptive) {
      rule = MatchingRule::adaptive(adaptive_bandwidths(d2.d2, *cfg.adaptive, cfg.argument), kernel);
      report["estimator"] = "adaptive";
      report["adaptive"] = {{"m", *cfg.adaptive}, {"mean_h", rule.bandwidth()}};
    } else {
      report["estimator"] = "pairwise-difference";
    }
    const auto fit = pairwise_difference(sample, d2, rule);
    beta = fit.beta;
    const auto om = omega_hat(sample, beta, net, d2, rule);
    var = cfg.variance == "finite-support" ? finite_support_variance(fit.gamma_hat, om, n)
                                           : beta_variance(fit.gamma_hat, om, n);
    lam = lambda_hat(sample, beta, d2, rule);
    report["n_active_pairs"] = fit.n_active_pairs;
  }

  report["beta"] = to_json(beta);
  if (var) {
    report["variance_method"] = to_string(var->method);
    report["V"] = to_json(var->V);
    report["se"] = to_json(var->se);
    auto ci = nlohmann::json::array();
    const auto intervals = confidence_interval(beta, *var, cfg.ci_level);
    for (std::size_t c = 0; c < intervals.size(); ++c)
      ci.push_back({{"name", sample.x_names()[c]}, {"lo", intervals[c].lo}, {"hi", intervals[c].hi}});
    report["ci"] = ci;
  } else {
    report["V"] = report["se"] = report["ci"] = nullptr;
  }
  const Vector diag =
      cfg.iv_columns.empty() ? undersmoothing_diagnostic(sample, beta, d2, rule) : Vector();
  report["undersmoothing"] = cfg.iv_columns.empty() ? summary(diag) : nlohmann::json(nullptr);
  Index missing = 0;
  for (Index i = 0; i < n; ++i) missing += lam.missing(i) ? 1 : 0;
  report["lambda_missing"] = missing;
  const std::string lpath = lambda_path(cfg);
  if (!lpath.empty()) {
    write_lambda(lpath, lam);
    report["lambda_path"] = lpath;
  } else {
    report["lambda_path"] = nullptr;
  }
  write_text(cfg.out, report.dump(2) + "\n", out);
  return kExitOk;
}

inline int run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<SimulationReport> parts;
  for (const auto& dname : cfg.designs) {
    for (Index n : cfg.ns) {
      DesignSpec spec;
      spec.design = parse_design(dname);
      spec.n = n;
      spec.R = cfg.reps;
      spec.seed = cfg.seed;
      spec.estimators = cfg.estimators;
      spec.pairwise_bandwidth = cfg.bandwidth;
      spec.argument = cfg.argument;
      spec.kernel = KernelSpec{parse_kernel_family(cfg.kernel)};
      spec.threads = cfg.threads;
      if (!cfg.emit_dir.empty() && parts.empty()) {
        const auto rep = gen_replication(spec, 0);
        std::filesystem::create_directories(cfg.emit_dir);
        save_network((std::filesystem::path(cfg.emit_dir) / "adjacency.csv").string(), rep.net);
        save_nodes((std::filesystem::path(cfg.emit_dir) / "nodes.csv").string(), rep.sample);
      }
      std::function<void(Index)> log;
      if (cfg.verbosity >= 2) log = [&](Index r) { err << dname << " n=" << n << " replication " << r << " done\n"; };
      parts.push_back(run_study(spec, log));
      if (cfg.verbosity >= 1)
        err << dname << " n=" << n << ": " << cfg.reps << " replications in " << parts.back().wall_seconds << " s\n";
    }
  }
  const auto report = merge_reports(parts);
  out << emit_table(report, parse_table_format(cfg.format));
  if (!cfg.out.empty()) write_text(cfg.out, report_csv(report), out);
  return kExitOk;
}

inline int run_peer(const RunConfig& cfg, std::ostream& out) {
  const auto net = load_network(cfg.adjacency.front(), cfg.directed);
  NodeSchema schema;
  schema.y = cfg.y_column;
  schema.x = cfg.x_columns;
  const auto sample = load_nodes(cfg.nodes, schema, net.size());
  const KernelSpec kernel{parse_kernel_family(cfg.kernel)};
  const Index n = sample.size();
  const double h = bandwidth(cfg.bandwidth, n);
  const auto rule = MatchingRule::fixed(h, kernel, cfg.argument);

  PeerRegressors reg;
  DistanceMatrix d2;
  if (cfg.variant == "link-cov") {
    reg = build_peer_regressors(net, sample);
    d2 = conditional_codegree_distance_sq(net, load_link_covariates(cfg.link_covariates, cfg.directed), kernel,
                                          *cfg.hz);
  } else {
    reg = build_peer_regressors_kz(net, sample, kernel, *cfg.hz);
    d2 = codegree_distance_sq(net);
  }
  const auto fit = peer_theta(reg, sample.y(), d2, rule);
  const auto lam = peer_lambda(reg, sample.y(), fit.beta, d2, rule);

  std::vector<std::string> names = sample.x_names();
  for (const auto& x : sample.x_names()) names.push_back("peer_mean_" + x);
  names.push_back("peer_mean_" + cfg.y_column);
  Index isolated = 0;
  for (bool b : reg.isolated) isolated += b ? 1 : 0;

  nlohmann::json report;
  report["n"] = n;
  report["variant"] = cfg.variant;
  report["coefficients"] = names;
  report["theta"] = to_json(fit.beta);
  report["n_active_pairs"] = fit.n_active_pairs;
  report["isolated_nodes"] = isolated;
  report["kernel_argument"] = to_string(cfg.argument);
  report["bandwidth"] = {{"h", h}, {"hz", *cfg.hz}};
  report["se"] = nullptr;
  report["inference"] = "not available: the peer-effects estimator has a consistency result only";
  const std::string lpath = lambda_path(cfg);
  if (!lpath.empty()) {
    write_lambda(lpath, lam);
    report["lambda_path"] = lpath;
  } else {
    report["lambda_path"] = nullptr;
  }
  write_text(cfg.out, report.dump(2) + "\n", out);
  return kExitOk;
}

}  // namespace detail

/// Executes a parsed configuration; returns the process exit code.
inline int run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (!cfg.help.empty()) {
    out << cfg.help;
    return kExitOk;
  }
  WarningHandler previous = set_warning_handler([&err, quiet = cfg.verbosity == 0](const std::string& msg) {
    if (!quiet) err << "warning: " << msg << '\n';
  });
  int code = kExitOk;
  try {
    if (cfg.subcommand == "distances") code = detail::run_distances(cfg, out);
    else if (cfg.subcommand == "estimate") code = detail::run_estimate(cfg, out);
    else if (cfg.subcommand == "simulate") code = detail::run_simulate(cfg, out, err);
    else if (cfg.subcommand == "peer") code = detail::run_peer(cfg, out);
    else throw ValidationError("unknown subcommand '" + cfg.subcommand + "'");
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    code = kExitNumerical;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitValidation;
  }
  set_warning_handler(previous);
  return code;
}

/// parse_args + run, mapping usage errors to exit code 1.
inline int main_entry(int argc, const char* const* argv, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  RunConfig cfg;
  try {
    cfg = parse_args(argc, argv);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return run(cfg, out, err);
}

}  // namespace netreg
