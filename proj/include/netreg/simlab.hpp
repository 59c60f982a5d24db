#pragma once

// Monte Carlo designs: blockmodel, degree heterogeneity and homophily, each with
// x = xi + lambda, y = beta x + gamma lambda + eps and D_ij = 1{eta_ij <= f(Phi(w_i), Phi(w_j))}.

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "netreg/codegree.hpp"
#include "netreg/estimators.hpp"
#include "netreg/inference.hpp"
#include "netreg/normal.hpp"

namespace netreg {

enum class Design { blockmodel, degree, homophily };

inline Design parse_design(const std::string& s) {
  if (s == "blockmodel") return Design::blockmodel;
  if (s == "degree") return Design::degree;
  if (s == "homophily") return Design::homophily;
  throw ValidationError("unknown design '" + s + "' (expected blockmodel, degree or homophily)");
}

inline const char* to_string(Design d) {
  switch (d) {
    case Design::blockmodel: return "blockmodel";
    case Design::degree: return "degree";
    case Design::homophily: return "homophily";
  }
  return "blockmodel";
}

/// Link probability f(u, v) for the design.
inline double link_function(Design design, double u, double v) {
  if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0))
    throw ValidationError("link function arguments must lie in [0, 1]");
  constexpr double third = 1.0 / 3.0, two_thirds = 2.0 / 3.0;
  switch (design) {
    case Design::blockmodel: {
      const bool hit = (u <= third && v > third) || (u > third && u <= two_thirds && v <= two_thirds) ||
                       (u > two_thirds && (v > two_thirds || v <= third));
      return hit ? third : 0.0;
    }
    case Design::degree: return 1.0 / (1.0 + std::exp(-(u + v)));
    case Design::homophily: return 1.0 - (u - v) * (u - v);
  }
  return 0.0;
}

inline constexpr int kEstimatorCount = 6;

/// 1 infeasible OLS, 2 naive OLS, 3 OLS with network controls, 4 pairwise
/// difference, 5 bias-corrected pairwise difference, 6 adaptive pairwise difference.
inline std::string estimator_name(int e) { return "beta" + std::to_string(e); }

struct DesignSpec {
  Design design = Design::blockmodel;
  Index n = 100;
  Index R = 500;
  double beta = 1.0;
  double gamma = 1.0;
  /// Multiplies the outcome noise; 0 gives a noiseless outcome equation.
  double noise_scale = 1.0;
  std::uint64_t seed = 20240601;
  std::vector<int> estimators{1, 2, 3, 4, 5, 6};
  BandwidthRule pairwise_bandwidth{0.1, 1.0 / 9.0};
  BandwidthRule adaptive_bandwidth{0.2, 1.0 / 9.0};
  BiasCorrectionSpec bias = solve_bias_weights(2, {1.0, 2.0}, 1.0);
  KernelSpec kernel{};
  KernelArgument argument = KernelArgument::root;
  double level = 0.95;
  /// Worker threads; 0 means hardware concurrency.
  unsigned threads = 1;

  void validate() const {
    if (n < 10) throw ValidationError("simulation needs n >= 10");
    if (R < 1) throw ValidationError("simulation needs at least one replication");
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
    if (!(noise_scale >= 0.0)) throw ValidationError("noise scale must be non-negative");
    pairwise_bandwidth.validate();
    adaptive_bandwidth.validate();
    if (estimators.empty()) throw ValidationError("no estimators selected");
    for (int e : estimators)
      if (e < 1 || e > kEstimatorCount) throw ValidationError("estimator ids run from 1 to 6");
  }
};

struct Replication {
  Network net;
  NodeSample sample;
  /// True lambda(w_i).
  Vector lambda;
  /// Latent omega_i.
  Vector omega;
};

namespace detail {

enum Stream : std::uint32_t { stream_xi = 0, stream_eps = 1, stream_omega = 2, stream_eta = 3 };

inline std::mt19937_64 stream_engine(std::uint64_t seed, Index r, Stream s) {
  const auto ru = static_cast<std::uint64_t>(r);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(ru), static_cast<std::uint32_t>(ru >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

/// Uniform on the open interval (0, 1) with 53 random bits.
inline double open_uniform(std::mt19937_64& g) {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

inline Vector normal_draws(std::mt19937_64& g, Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal_quantile(open_uniform(g));
  return v;
}

}  // namespace detail

/// Draws replication r; a pure function of (spec, r).
inline Replication gen_replication(const DesignSpec& spec, Index r) {
  const Index n = spec.n;
  auto g_xi = detail::stream_engine(spec.seed, r, detail::stream_xi);
  auto g_eps = detail::stream_engine(spec.seed, r, detail::stream_eps);
  auto g_om = detail::stream_engine(spec.seed, r, detail::stream_omega);
  auto g_eta = detail::stream_engine(spec.seed, r, detail::stream_eta);
  const Vector xi = detail::normal_draws(g_xi, n);
  const Vector eps = detail::normal_draws(g_eps, n) * spec.noise_scale;
  const Vector omega = detail::normal_draws(g_om, n);
  Vector u(n);
  for (Index i = 0; i < n; ++i) u(i) = normal_cdf(omega(i));

  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double eta = detail::open_uniform(g_eta);
      const double link = eta <= link_function(spec.design, u(i), u(j)) ? 1.0 : 0.0;
      d(i, j) = d(j, i) = link;
    }
  }
  Vector lambda(n);
  for (Index i = 0; i < n; ++i)
    lambda(i) = spec.design == Design::blockmodel ? std::max(1.0, std::ceil(3.0 * u(i))) : omega(i);
  const Vector x = xi + lambda;
  const Vector y = spec.beta * x + spec.gamma * lambda + eps;
  return {Network::from_matrix(std::move(d)), NodeSample::create(y, Matrix(x)), lambda, omega};
}

struct Draw {
  double estimate = 0.0;
  double se = 0.0;
  bool ok = false;
  std::string error;
};

using ReplicationDraws = std::array<Draw, kEstimatorCount>;

namespace detail {

inline Draw ols_draw(const Vector& y, const Matrix& z, bool pinv) {
  Draw d;
  const Vector b = pinv ? ols_pinv(y, z) : ols(y, z);
  const Matrix v = ols_robust_variance(z, y - z * b);
  d.estimate = b(0);
  d.se = std::sqrt(std::max(v(0, 0), 0.0));
  d.ok = std::isfinite(d.estimate) && std::isfinite(d.se);
  if (!d.ok) d.error = "non-finite OLS estimate";
  return d;
}

template <class F>
Draw guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    Draw d;
    d.error = e.what();
    return d;
  }
}

}  // namespace detail

/// Point estimates and standard errors of every selected estimator for one replication.
inline ReplicationDraws estimate_replication(const DesignSpec& spec, const Replication& rep) {
  ReplicationDraws out;
  auto selected = [&](int e) {
    return std::find(spec.estimators.begin(), spec.estimators.end(), e) != spec.estimators.end();
  };
  const Index n = spec.n;
  const Vector& y = rep.sample.y();
  const Vector x = rep.sample.x().col(0);

  if (selected(1)) {
    out[0] = detail::guarded([&] {
      Matrix z(n, 2);
      z << x, rep.lambda;
      return detail::ols_draw(y, z, false);
    });
  }
  if (selected(2)) out[1] = detail::guarded([&] { return detail::ols_draw(y, Matrix(x), false); });
  if (selected(3)) {
    out[2] = detail::guarded([&] {
      const Matrix controls = network_controls(rep.net, rep.sample);
      Matrix z(n, controls.cols() + 1);
      z << x, Vector::Ones(n), controls.rightCols(controls.cols() - 1);
      return detail::ols_draw(y, z, true);
    });
  }
  if (!(selected(4) || selected(5) || selected(6))) return out;

  const auto d2 = codegree_distance_sq(rep.net);
  const auto base = MatchingRule::fixed(bandwidth(spec.pairwise_bandwidth, n), spec.kernel, spec.argument);
  if (selected(4)) {
    out[3] = detail::guarded([&] {
      const auto fit = pairwise_difference(rep.sample, d2, base);
      const auto om = omega_hat(rep.sample, fit.beta, rep.net, d2, base);
      const auto v = beta_variance(fit.gamma_hat, om, n);
      return Draw{fit.beta(0), v.se(0), true, {}};
    });
  }
  if (selected(5)) {
    out[4] = detail::guarded([&] {
      const auto fit = bias_corrected_beta(rep.sample, d2, base, spec.bias);
      std::vector<MatchingRule> rules;
      for (double c : spec.bias.c) rules.push_back(base.scaled(c));
      const auto grid = omega_hat_grid(rep.sample, fit.beta, rep.net, d2, rules);
      const auto v = bias_corrected_variance(fit.components, spec.bias, grid, n);
      return Draw{fit.beta(0), v.se(0), true, {}};
    });
  }
  if (selected(6)) {
    out[5] = detail::guarded([&] {
      const Index m =
          calibrate_match_count(d2.d2, bandwidth(spec.adaptive_bandwidth, n), spec.argument);
      const auto rule = MatchingRule::adaptive(adaptive_bandwidths(d2.d2, m, spec.argument), spec.kernel);
      const auto fit = pairwise_difference(rep.sample, d2, rule);
      const auto om = omega_hat(rep.sample, fit.beta, rep.net, d2, rule);
      const auto v = beta_variance(fit.gamma_hat, om, n);
      return Draw{fit.beta(0), v.se(0), true, {}};
    });
  }
  return out;
}

struct ReportRow {
  Design design = Design::blockmodel;
  int estimator = 1;
  Index n = 0;
  double bias = 0.0;
  double mae = 0.0;
  double rmae = 0.0;
  double size = 0.0;
  Index used = 0;
  Index failures = 0;
};

struct SimulationReport {
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;
  Index R = 0;
  double wall_seconds = 0.0;
  std::string ols_variance = "HC0 robust";
  std::string kernel_argument = "root";

  const ReportRow* find(Design d, int estimator, Index n) const {
    for (const auto& r : rows)
      if (r.design == d && r.estimator == estimator && r.n == n) return &r;
    return nullptr;
  }
};

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

}  // namespace detail

/// Runs spec.R replications (in parallel over replication indices) and folds
/// them in index order. Throws NumericalError when an estimator fails in 2% or
/// more of the replications.
inline SimulationReport run_study(const DesignSpec& spec,
                                  const std::function<void(Index)>& on_replication = {}) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  std::vector<ReplicationDraws> draws(static_cast<std::size_t>(spec.R));
  std::atomic<Index> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (Index r = next++; r < spec.R; r = next++) {
      draws[static_cast<std::size_t>(r)] = estimate_replication(spec, gen_replication(spec, r));
      if (on_replication) {
        std::lock_guard<std::mutex> lock(log_mutex);
        on_replication(r);
      }
    }
  };
  const unsigned threads = std::min<unsigned>(detail::resolve_threads(spec.threads),
                                              static_cast<unsigned>(spec.R));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const double z = normal_quantile(0.5 * (1.0 + spec.level));
  const double guard = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(spec.beta));
  SimulationReport report;
  report.seed = spec.seed;
  report.R = spec.R;
  report.kernel_argument = to_string(spec.argument);
  std::array<double, kEstimatorCount> mae{};
  for (int e : spec.estimators) {
    ReportRow row;
    row.design = spec.design;
    row.estimator = e;
    row.n = spec.n;
    double sum = 0.0, abs_sum = 0.0, rejections = 0.0;
    std::string first_error;
    for (const auto& d : draws) {
      const Draw& dr = d[static_cast<std::size_t>(e - 1)];
      if (!dr.ok) {
        ++row.failures;
        if (first_error.empty()) first_error = dr.error;
        continue;
      }
      ++row.used;
      const double err = dr.estimate - spec.beta;
      sum += err;
      abs_sum += std::abs(err);
      if (std::abs(err) > z * dr.se + guard) rejections += 1.0;
    }
    if (row.failures * 50 >= spec.R) {
      throw NumericalError(std::string(to_string(spec.design)) + " n=" + std::to_string(spec.n) + ": " +
                           estimator_name(e) + " failed in " + std::to_string(row.failures) + " of " +
                           std::to_string(spec.R) + " replications (" + first_error + ")");
    }
    const double used = static_cast<double>(row.used);
    row.bias = sum / used;
    row.mae = abs_sum / used;
    row.size = rejections / used;
    mae[static_cast<std::size_t>(e - 1)] = row.mae;
    report.rows.push_back(row);
  }
  const bool have_reference =
      std::find(spec.estimators.begin(), spec.estimators.end(), 1) != spec.estimators.end();
  for (auto& row : report.rows) {
    if (row.estimator == 1) row.rmae = 1.0;
    else row.rmae = have_reference ? row.mae / mae[0] : std::numeric_limits<double>::quiet_NaN();
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Concatenates rows; metadata from the first report, wall time summed.
inline SimulationReport merge_reports(const std::vector<SimulationReport>& parts) {
  SimulationReport out;
  if (parts.empty()) return out;
  out.seed = parts.front().seed;
  out.R = parts.front().R;
  out.ols_variance = parts.front().ols_variance;
  out.kernel_argument = parts.front().kernel_argument;
  for (const auto& p : parts) {
    out.rows.insert(out.rows.end(), p.rows.begin(), p.rows.end());
    out.wall_seconds += p.wall_seconds;
  }
  return out;
}

enum class TableFormat { text, csv, markdown };

inline TableFormat parse_table_format(const std::string& s) {
  if (s == "text") return TableFormat::text;
  if (s == "csv") return TableFormat::csv;
  if (s == "markdown") return TableFormat::markdown;
  throw ValidationError("unknown table format '" + s + "'");
}

namespace detail {

inline std::string fixed3(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

/// Paper-style tables: per design, one block of bias/MAE/rMAE/size rows per n
/// with one column per estimator, three decimals.
inline std::string emit_table(const SimulationReport& report, TableFormat format) {
  if (report.rows.empty()) throw ValidationError("cannot render an empty report");
  std::vector<Design> designs;
  std::map<Design, std::vector<Index>> ns;
  std::map<Design, std::vector<int>> ests;
  for (const auto& r : report.rows) {
    if (std::find(designs.begin(), designs.end(), r.design) == designs.end()) designs.push_back(r.design);
    auto& nv = ns[r.design];
    if (std::find(nv.begin(), nv.end(), r.n) == nv.end()) nv.push_back(r.n);
    auto& ev = ests[r.design];
    if (std::find(ev.begin(), ev.end(), r.estimator) == ev.end()) ev.push_back(r.estimator);
  }
  static const char* metrics[] = {"bias", "MAE", "rMAE", "size"};
  auto metric = [](const ReportRow* r, int m) {
    if (!r) return std::numeric_limits<double>::quiet_NaN();
    switch (m) {
      case 0: return r->bias;
      case 1: return r->mae;
      case 2: return r->rmae;
      default: return r->size;
    }
  };

  std::ostringstream os;
  if (format == TableFormat::csv) os << "design,n,metric";
  bool csv_header_done = false;
  for (Design d : designs) {
    auto ev = ests[d];
    std::sort(ev.begin(), ev.end());
    auto nv = ns[d];
    std::sort(nv.begin(), nv.end());
    if (format == TableFormat::csv) {
      if (!csv_header_done) {
        for (int e : ev) os << ',' << estimator_name(e);
        os << '\n';
        csv_header_done = true;
      }
    } else if (format == TableFormat::markdown) {
      os << "### " << to_string(d) << "\n\n| n | metric |";
      for (int e : ev) os << ' ' << estimator_name(e) << " |";
      os << "\n|---|---|";
      for (std::size_t c = 0; c < ev.size(); ++c) os << "---:|";
      os << '\n';
    } else {
      char buf[64];
      os << to_string(d) << '\n';
      std::snprintf(buf, sizeof buf, "%6s %-6s", "n", "");
      os << buf;
      for (int e : ev) {
        std::snprintf(buf, sizeof buf, " %8s", estimator_name(e).c_str());
        os << buf;
      }
      os << '\n';
    }
    for (Index n : nv) {
      for (int m = 0; m < 4; ++m) {
        if (format == TableFormat::csv) {
          os << to_string(d) << ',' << n << ',' << metrics[m];
          for (int e : ev) os << ',' << detail::fixed3(metric(report.find(d, e, n), m));
          os << '\n';
        } else if (format == TableFormat::markdown) {
          os << "| " << n << " | " << metrics[m] << " |";
          for (int e : ev) os << ' ' << detail::fixed3(metric(report.find(d, e, n), m)) << " |";
          os << '\n';
        } else {
          char buf[64];
          if (m == 0) std::snprintf(buf, sizeof buf, "%6lld %-6s", static_cast<long long>(n), metrics[m]);
          else std::snprintf(buf, sizeof buf, "%6s %-6s", "", metrics[m]);
          os << buf;
          for (int e : ev) {
            std::snprintf(buf, sizeof buf, " %8s", detail::fixed3(metric(report.find(d, e, n), m)).c_str());
            os << buf;
          }
          os << '\n';
        }
      }
    }
    if (format != TableFormat::csv) os << '\n';
  }
  return os.str();
}

/// Long-form CSV with full precision and run metadata on every row.
inline std::string report_csv(const SimulationReport& report) {
  std::ostringstream os;
  os << "design,estimator,n,bias,mae,rmae,size,used,failures,reps,seed,kernel_argument,ols_variance,wall_seconds\n";
  char buf[512];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%lld,%.17g,%.17g,%.17g,%.17g,%lld,%lld,%lld,%llu,%s,%s,%.3f\n",
                  to_string(r.design), estimator_name(r.estimator).c_str(), static_cast<long long>(r.n), r.bias,
                  r.mae, r.rmae, r.size, static_cast<long long>(r.used), static_cast<long long>(r.failures),
                  static_cast<long long>(report.R), static_cast<unsigned long long>(report.seed),
                  report.kernel_argument.c_str(), report.ols_variance.c_str(), report.wall_seconds);
    os << buf;
  }
  return os.str();
}

}  // namespace netreg
