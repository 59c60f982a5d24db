#pragma once

// Variance estimation for the pairwise difference estimators and for lambda.
//
// The middle matrix of the sandwich has three parts. With
// Delta_ij = (x_i - x_j)'(u_i - u_j), u = y - x beta, and w_ij(h) the pair weight:
//
//   term1 = n^-3 sum_{i,j1,j2} Delta_ij1 Delta_ij2' w_ij1(h1) w_ij2(h2)
//   term2 = n^-5 sum_{i1,j1,i2,j2,t} Delta_i1j1 Delta_i2j2' w'_i1j1 w'_i2j2
//                (F_i1j1t - d2_i1j1)(F_i2j2t - d2_i2j2)
//   term3 = 4 n^-5 sum (same, with F'_ijs in place of F_ijt)
//
// where w' is the derivative of the weight with respect to d2 (K'(d2/h)/h for
// squared kernel arguments), F_ijt = (c_ti - c_tj)^2 and
// F'_ijs = (D_is - D_js)(1/n) sum_t D_ts (c_ti - c_tj). Both quintuple sums
// factor through t-indexed (resp. s-indexed) accumulators
//   A_t = sum_{i,j} Delta_ij w'_ij (F_ijt - d2_ij),
// so term2 = n^-5 sum_t A_t(h1) A_t(h2)', at O(n^3 k) cost overall.
//
// beta_hat - beta is asymptotically Gamma^-1 times a degree-2 U-statistic whose
// projection variance is 4 term1 / n, so the sandwich middle is
// 4 term1 + term2 + term3.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "netreg/codegree.hpp"
#include "netreg/estimators.hpp"
#include "netreg/normal.hpp"

namespace netreg {

struct OmegaComponents {
  Matrix term1, term2, term3;
  double h1 = 0.0, h2 = 0.0;

  /// Middle matrix of the beta sandwich.
  Matrix combined() const { return 4.0 * term1 + term2 + term3; }
};

enum class VarianceMethod { general, finite_support, bias_corrected };

inline const char* to_string(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::general: return "general";
    case VarianceMethod::finite_support: return "finite-support";
    case VarianceMethod::bias_corrected: return "bias-corrected";
  }
  return "general";
}

struct VarianceResult {
  Matrix V;
  Vector se;
  VarianceMethod method = VarianceMethod::general;
};

inline Matrix gamma_hat(const NodeSample& sample, const DistanceMatrix& d2, const MatchingRule& rule) {
  detail::require_same_size(sample, d2);
  return detail::pair_moments(sample.x(), sample.y(), d2, rule).gamma_hat;
}

/// Omega for every pair of rules: result[l1][l2] uses rules[l1] and rules[l2].
/// One pass over the active pairs builds all accumulators.
inline std::vector<std::vector<OmegaComponents>> omega_hat_grid(const NodeSample& sample, const Vector& beta,
                                                                const Network& net, const DistanceMatrix& d2,
                                                                const std::vector<MatchingRule>& rules) {
  detail::require_same_size(sample, d2);
  check_paired(net, sample);
  const Index n = sample.size(), k = sample.regressor_count();
  const auto L = static_cast<Index>(rules.size());
  const double nd = static_cast<double>(n);
  const Matrix& x = sample.x();
  const Vector u = sample.y() - x * beta;
  const Matrix& d = net.adjacency();

  // term1 accumulators S_i(l) = sum_j Delta_ij w_ij(l), stored as k x n per rule.
  std::vector<Matrix> s(static_cast<std::size_t>(L), Matrix::Zero(k, n));
  struct ActivePair {
    Index i, j;
  };
  std::vector<ActivePair> active;
  std::vector<Matrix> slope_delta;  // per rule: k x |active|
  std::vector<std::vector<double>> slopes(static_cast<std::size_t>(L));
  Vector delta(k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dist = d2(i, j);
      bool any_slope = false;
      double w_any = 0.0;
      for (Index l = 0; l < L; ++l) {
        const auto& r = rules[static_cast<std::size_t>(l)];
        const double sl = r.slope(i, j, dist);
        slopes[static_cast<std::size_t>(l)].push_back(sl);
        any_slope = any_slope || sl != 0.0;
        w_any += std::abs(r.weight(i, j, dist));
      }
      if (w_any == 0.0 && !any_slope) {
        for (auto& sv : slopes) sv.pop_back();
        continue;
      }
      delta = (x.row(i) - x.row(j)).transpose() * (u(i) - u(j));
      for (Index l = 0; l < L; ++l) {
        const double w = rules[static_cast<std::size_t>(l)].weight(i, j, dist);
        if (w != 0.0) {
          s[static_cast<std::size_t>(l)].col(i) += w * delta;
          s[static_cast<std::size_t>(l)].col(j) += w * delta;
        }
      }
      if (any_slope) {
        active.push_back({i, j});
      } else {
        for (auto& sv : slopes) sv.pop_back();
      }
    }
  }

  const auto np = static_cast<Index>(active.size());
  slope_delta.assign(static_cast<std::size_t>(L), Matrix(k, np));
  Vector pair_d2(np);
  for (Index p = 0; p < np; ++p) {
    const auto [i, j] = active[static_cast<std::size_t>(p)];
    pair_d2(p) = d2(i, j);
    delta = (x.row(i) - x.row(j)).transpose() * (u(i) - u(j));
    for (Index l = 0; l < L; ++l) {
      // Factor 2: each unordered pair appears twice in the ordered sums.
      slope_delta[static_cast<std::size_t>(l)].col(p) =
          2.0 * slopes[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)] * delta;
    }
  }

  // t- and s-indexed accumulators, k x n per rule.
  std::vector<Matrix> a(static_cast<std::size_t>(L), Matrix::Zero(k, n));
  std::vector<Matrix> b(static_cast<std::size_t>(L), Matrix::Zero(k, n));
  if (np > 0) {
    const Matrix c = (d * d.transpose()) / nd;                 // c(t,i)
    const Matrix m = (d.transpose() * c) / nd;                 // m(s,i) = (1/n) sum_t D_ts c(t,i)
    Vector f(np), fp(np);
    for (Index t = 0; t < n; ++t) {
      for (Index p = 0; p < np; ++p) {
        const auto [i, j] = active[static_cast<std::size_t>(p)];
        const double dc = c(t, i) - c(t, j);
        f(p) = dc * dc - pair_d2(p);
        fp(p) = (d(i, t) - d(j, t)) * (m(t, i) - m(t, j)) - pair_d2(p);
      }
      for (Index l = 0; l < L; ++l) {
        a[static_cast<std::size_t>(l)].col(t).noalias() = slope_delta[static_cast<std::size_t>(l)] * f;
        b[static_cast<std::size_t>(l)].col(t).noalias() = slope_delta[static_cast<std::size_t>(l)] * fp;
      }
    }
  }

  const double n3 = nd * nd * nd, n5 = n3 * nd * nd;
  std::vector<std::vector<OmegaComponents>> out(static_cast<std::size_t>(L),
                                                std::vector<OmegaComponents>(static_cast<std::size_t>(L)));
  for (Index l1 = 0; l1 < L; ++l1) {
    for (Index l2 = 0; l2 < L; ++l2) {
      auto& o = out[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)];
      const auto i1 = static_cast<std::size_t>(l1), i2 = static_cast<std::size_t>(l2);
      o.h1 = rules[i1].bandwidth();
      o.h2 = rules[i2].bandwidth();
      o.term1 = s[i1] * s[i2].transpose() / n3;
      o.term2 = a[i1] * a[i2].transpose() / n5;
      o.term3 = 4.0 * (b[i1] * b[i2].transpose()) / n5;
    }
  }
  return out;
}

inline OmegaComponents omega_hat(const NodeSample& sample, const Vector& beta, const Network& net,
                                 const DistanceMatrix& d2, const MatchingRule& rule1, const MatchingRule& rule2) {
  return omega_hat_grid(sample, beta, net, d2, {rule1, rule2})[0][1];
}

inline OmegaComponents omega_hat(const NodeSample& sample, const Vector& beta, const Network& net,
                                 const DistanceMatrix& d2, const MatchingRule& rule) {
  return omega_hat_grid(sample, beta, net, d2, {rule})[0][0];
}

namespace detail {

inline Matrix inverse_identified(const Matrix& gamma) {
  const double rc = reciprocal_condition(gamma);
  if (!(rc >= kSingularRcond)) {
    throw NumericalError("variance: singular Gamma (reciprocal condition " + std::to_string(rc) + ")");
  }
  return gamma.ldlt().solve(Matrix::Identity(gamma.rows(), gamma.cols()));
}

inline VarianceResult finish_variance(Matrix v, VarianceMethod method) {
  VarianceResult out;
  out.method = method;
  out.se.resize(v.rows());
  for (Index c = 0; c < v.rows(); ++c) {
    if (v(c, c) < 0.0) {
      if (v(c, c) < -1e-12) warn("negative variance diagonal " + std::to_string(v(c, c)) + " clamped to 0");
      v(c, c) = 0.0;
    }
    out.se(c) = std::sqrt(v(c, c));
  }
  out.V = std::move(v);
  return out;
}

}  // namespace detail

/// V = Gamma^-1 (4 term1 + term2 + term3) Gamma^-1 / n.
inline VarianceResult beta_variance(const Matrix& gamma, const OmegaComponents& omega, Index n) {
  const Matrix gi = detail::inverse_identified(gamma);
  return detail::finish_variance(gi * omega.combined() * gi / static_cast<double>(n), VarianceMethod::general);
}

/// Drops the distance-estimation terms; adequate when link types have finite support.
inline VarianceResult finite_support_variance(const Matrix& gamma, const OmegaComponents& omega, Index n) {
  const Matrix gi = detail::inverse_identified(gamma);
  return detail::finish_variance(gi * (4.0 * omega.term1) * gi / static_cast<double>(n),
                                 VarianceMethod::finite_support);
}

/// V = sum_{l1,l2} a_l1 a_l2 Gamma_l1^-1 Omega_l1l2 Gamma_l2^-1 / n.
inline VarianceResult bias_corrected_variance(const std::vector<PairwiseFitResult>& components,
                                              const BiasCorrectionSpec& spec,
                                              const std::vector<std::vector<OmegaComponents>>& cross, Index n) {
  const auto L = static_cast<std::size_t>(spec.L);
  if (components.size() != L || cross.size() != L) throw ValidationError("bias-corrected variance: expected L components");
  std::vector<Matrix> inv;
  for (const auto& c : components) inv.push_back(detail::inverse_identified(c.gamma_hat));
  const Index k = components.front().gamma_hat.rows();
  Matrix v = Matrix::Zero(k, k);
  for (std::size_t l1 = 0; l1 < L; ++l1) {
    if (cross[l1].size() != L) throw ValidationError("bias-corrected variance: expected an L x L omega grid");
    for (std::size_t l2 = 0; l2 < L; ++l2) {
      v += spec.a(static_cast<Index>(l1)) * spec.a(static_cast<Index>(l2)) * inv[l1] *
           cross[l1][l2].combined() * inv[l2];
    }
  }
  return detail::finish_variance(v / static_cast<double>(n), VarianceMethod::bias_corrected);
}

/// Covariance of lambda_hat at the target agents:
///   V_ij = (1/(n r_i r_j)) (1/n) sum_t e_it e_jt,
///   e_it = (u_t w_it - r'_i) - (r'_i / r_i)(w_it - r_i),
/// with r_i = (1/n) sum_t w_it and r'_i = (1/n) sum_t u_t w_it.
inline Matrix lambda_variance(const NodeSample& sample, const Vector& beta, const DistanceMatrix& d2,
                              const MatchingRule& rule, const std::vector<Index>& targets) {
  detail::require_same_size(sample, d2);
  if (targets.empty()) throw ValidationError("lambda variance needs at least one target agent");
  const Index n = sample.size();
  const double nd = static_cast<double>(n);
  const Vector u = sample.y() - sample.x() * beta;
  const auto m = static_cast<Index>(targets.size());
  Matrix e(m, n);
  Vector r(m);
  for (Index a = 0; a < m; ++a) {
    const Index i = targets[static_cast<std::size_t>(a)];
    if (i < 0 || i >= n) throw ValidationError("lambda variance target out of range");
    Vector w(n);
    for (Index t = 0; t < n; ++t) w(t) = rule.weight(i, t, d2(i, t));
    const double ri = w.sum() / nd;
    if (!(ri > 0.0)) throw NumericalError("lambda variance: agent " + std::to_string(i) + " has no matches");
    const double rpi = u.dot(w) / nd;
    r(a) = ri;
    e.row(a) = ((u.array() * w.array() - rpi) - (rpi / ri) * (w.array() - ri)).matrix().transpose();
  }
  Matrix v = (e * e.transpose()) / nd;
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) v(a, b) /= nd * r(a) * r(b);
  Eigen::SelfAdjointEigenSolver<Matrix> es(v);
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
    warn("lambda variance matrix is not positive semidefinite");
  for (Index a = 0; a < m; ++a) v(a, a) = std::max(v(a, a), 0.0);
  return v;
}

/// Per-agent undersmoothing diagnostic b_i n / r_i with
/// b_i = ((1/n) sum_t (lambda_i - lambda_t) w_it)^2, the squared smoothing bias of
/// lambda_hat evaluated at the fitted lambda values. NaN where r_i = 0.
inline Vector undersmoothing_diagnostic(const NodeSample& sample, const Vector& beta, const DistanceMatrix& d2,
                                        const MatchingRule& rule) {
  const auto lam = lambda_hat(sample, beta, d2, rule);
  const Index n = sample.size();
  const double nd = static_cast<double>(n);
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    if (lam.missing(i)) {
      out(i) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double bias = 0.0;
    for (Index t = 0; t < n; ++t) {
      const double w = rule.weight(i, t, d2(i, t));
      if (w != 0.0) bias += (lam.values(i) - lam.values(t)) * w;
    }
    bias /= nd;
    out(i) = bias * bias * nd / lam.r_hat(i);
  }
  return out;
}

struct Interval {
  double lo = 0.0, hi = 0.0;
};

/// est +/- z_{(1+level)/2} se per coefficient.
inline std::vector<Interval> confidence_interval(const Vector& est, const VarianceResult& v, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  if (est.size() != v.se.size()) throw ValidationError("estimate and standard errors differ in length");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<Interval> out;
  for (Index c = 0; c < est.size(); ++c) out.push_back({est(c) - z * v.se(c), est(c) + z * v.se(c)});
  return out;
}

}  // namespace netreg
