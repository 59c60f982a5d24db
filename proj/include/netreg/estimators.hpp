#pragma once

// Point estimators for y_i = x_i beta + lambda(w_i) + e_i with the network
// position w_i unobserved: kernel-matched pairwise differencing, the jackknife
// bias-corrected combination, recovery of lambda, OLS baselines with network
// controls, and an instrumented three-step variant.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "netreg/codegree.hpp"
#include "netreg/error.hpp"
#include "netreg/kernels.hpp"
#include "netreg/netdata.hpp"

namespace netreg {

/// Fits with a Gram matrix below this reciprocal condition number are rejected.
inline constexpr double kSingularRcond = 1e-10;

/// Ratio of smallest to largest singular value; 0 for a zero matrix.
inline double reciprocal_condition(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  const double smax = s.maxCoeff();
  if (!(smax > 0.0)) return 0.0;
  return s.minCoeff() / smax;
}

struct PairwiseFitResult {
  Vector beta;
  /// (n choose 2)^-1 sum_{i<j} (x_i - x_j)'(x_i - x_j) w_ij
  Matrix gamma_hat;
  /// (n choose 2)^-1 sum_{i<j} (x_i - x_j)'(y_i - y_j) w_ij
  Vector numerator;
  double h = 0.0;
  Index n_active_pairs = 0;
};

namespace detail {

inline void require_same_size(const NodeSample& s, const DistanceMatrix& d2) {
  if (s.size() != d2.size()) {
    throw ValidationError("node sample has " + std::to_string(s.size()) + " rows, distance matrix has " +
                          std::to_string(d2.size()));
  }
}

/// Kernel-weighted pair moments of (x, y) without solving.
inline PairwiseFitResult pair_moments(const Matrix& x, const Vector& y, const DistanceMatrix& d2,
                                      const MatchingRule& rule) {
  const Index n = x.rows(), k = x.cols();
  PairwiseFitResult out;
  out.gamma_hat = Matrix::Zero(k, k);
  out.numerator = Vector::Zero(k);
  out.h = rule.bandwidth();
  Vector dx(k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double w = rule.weight(i, j, d2(i, j));
      if (w == 0.0) continue;
      ++out.n_active_pairs;
      dx = x.row(i).transpose() - x.row(j).transpose();
      out.gamma_hat.selfadjointView<Eigen::Lower>().rankUpdate(dx, w);
      out.numerator += dx * (w * (y(i) - y(j)));
    }
  }
  out.gamma_hat.triangularView<Eigen::StrictlyUpper>() = out.gamma_hat.transpose();
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  out.gamma_hat /= pairs;
  out.numerator /= pairs;
  return out;
}

inline Vector solve_identified(const Matrix& gamma, const Vector& rhs, const char* what) {
  const double rc = reciprocal_condition(gamma);
  if (!(rc >= kSingularRcond)) {
    throw NumericalError(std::string(what) +
                         ": no identifying variation within matches (reciprocal condition " +
                         std::to_string(rc) + ")");
  }
  return gamma.ldlt().solve(rhs);
}

}  // namespace detail

/// Kernel-matched pairwise difference estimator of beta.
inline PairwiseFitResult pairwise_difference(const NodeSample& sample, const DistanceMatrix& d2,
                                             const MatchingRule& rule) {
  detail::require_same_size(sample, d2);
  auto out = detail::pair_moments(sample.x(), sample.y(), d2, rule);
  if (out.n_active_pairs == 0) throw NumericalError("pairwise difference: no pairs within the bandwidth");
  out.beta = detail::solve_identified(out.gamma_hat, out.numerator, "pairwise difference");
  return out;
}

inline PairwiseFitResult pairwise_difference(const NodeSample& sample, const DistanceMatrix& d2, double h,
                                             const KernelSpec& kernel = {},
                                             KernelArgument arg = KernelArgument::root) {
  return pairwise_difference(sample, d2, MatchingRule::fixed(h, kernel, arg));
}

/// Weights a_l combining estimates at bandwidths c_l h so that the leading
/// L-1 bias terms in powers h^(m/theta), m = 2..L, cancel.
struct BiasCorrectionSpec {
  Index L = 1;
  std::vector<double> c{1.0};
  double theta = 1.0;
  Vector a = Vector::Ones(1);
};

inline BiasCorrectionSpec solve_bias_weights(Index L, std::vector<double> c, double theta) {
  if (L < 1) throw ValidationError("bias correction order L must be at least 1");
  if (static_cast<Index>(c.size()) != L) throw ValidationError("bias correction needs exactly L constants");
  if (!(theta > 0.0)) throw ValidationError("bias correction theta must be positive");
  if (c.front() != 1.0) throw ValidationError("the first bias correction constant must be 1");
  for (std::size_t l = 0; l < c.size(); ++l) {
    if (!(c[l] > 0.0) || !std::isfinite(c[l])) throw ValidationError("bias correction constants must be positive");
    for (std::size_t m = 0; m < l; ++m)
      if (c[m] == c[l]) throw ValidationError("bias correction constants must be distinct");
  }

  Matrix sys(L, L);
  sys.row(0).setOnes();
  for (Index m = 2; m <= L; ++m)
    for (Index l = 0; l < L; ++l) sys(m - 1, l) = std::pow(c[static_cast<std::size_t>(l)], static_cast<double>(m) / theta);
  Vector rhs = Vector::Zero(L);
  rhs(0) = 1.0;

  Eigen::FullPivLU<Matrix> lu(sys);
  if (!lu.isInvertible() || reciprocal_condition(sys) < 1e-14)
    throw NumericalError("bias correction system is singular");
  Vector a = lu.solve(rhs);
  // One step of iterative refinement with the residual in long double.
  Vector r(L);
  for (Index m = 0; m < L; ++m) {
    long double acc = rhs(m);
    for (Index l = 0; l < L; ++l) acc -= static_cast<long double>(sys(m, l)) * a(l);
    r(m) = static_cast<double>(acc);
  }
  a += lu.solve(r);

  BiasCorrectionSpec spec;
  spec.L = L;
  spec.c = std::move(c);
  spec.theta = theta;
  spec.a = std::move(a);
  return spec;
}

struct BiasCorrectedFit {
  Vector beta;
  std::vector<PairwiseFitResult> components;
  BiasCorrectionSpec spec;
};

/// beta_bar = sum_l a_l beta(c_l h).
inline BiasCorrectedFit bias_corrected_beta(const NodeSample& sample, const DistanceMatrix& d2,
                                            const MatchingRule& base, const BiasCorrectionSpec& spec) {
  BiasCorrectedFit out;
  out.spec = spec;
  out.beta = Vector::Zero(sample.regressor_count());
  for (Index l = 0; l < spec.L; ++l) {
    const double c = spec.c[static_cast<std::size_t>(l)];
    try {
      out.components.push_back(pairwise_difference(sample, d2, base.scaled(c)));
    } catch (const NumericalError& e) {
      throw NumericalError("bias correction component c = " + std::to_string(c) + ": " + e.what());
    }
    out.beta += spec.a(l) * out.components.back().beta;
  }
  return out;
}

struct LambdaEstimate {
  /// Kernel-weighted residual means; NaN where r_hat is zero.
  Vector values;
  /// r_hat(i) = (1/n) sum_t w_it.
  Vector r_hat;

  bool missing(Index i) const { return !(r_hat(i) > 0.0); }
};

/// lambda(w_i) estimated as the weighted mean of residuals over all t,
/// including t = i, with weights w_it.
inline LambdaEstimate lambda_from_residuals(const Vector& resid, const DistanceMatrix& d2,
                                            const MatchingRule& rule) {
  const Index n = resid.size();
  if (d2.size() != n) throw ValidationError("residuals and distance matrix differ in size");
  LambdaEstimate out;
  out.values.resize(n);
  out.r_hat.resize(n);
  for (Index i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (Index t = 0; t < n; ++t) {
      const double w = rule.weight(i, t, d2(i, t));
      if (w == 0.0) continue;
      den += w;
      num += w * resid(t);
    }
    out.r_hat(i) = den / static_cast<double>(n);
    out.values(i) = den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

inline LambdaEstimate lambda_hat(const NodeSample& sample, const Vector& beta, const DistanceMatrix& d2,
                                 const MatchingRule& rule) {
  detail::require_same_size(sample, d2);
  return lambda_from_residuals(sample.y() - sample.x() * beta, d2, rule);
}

/// Least squares; throws NumericalError when Z lacks full column rank.
inline Vector ols(const Vector& y, const Matrix& z) {
  if (z.rows() != y.size()) throw ValidationError("ols: design rows do not match outcome length");
  Eigen::ColPivHouseholderQR<Matrix> qr(z);
  if (qr.rank() < z.cols()) throw NumericalError("ols: design matrix is rank deficient");
  return qr.solve(y);
}

/// Minimum-norm least squares, (Z'Z)^+ Z'y.
inline Vector ols_pinv(const Vector& y, const Matrix& z) {
  if (z.rows() != y.size()) throw ValidationError("ols: design rows do not match outcome length");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(z);
  return cod.solve(y);
}

/// Heteroskedasticity-robust (HC0) sandwich (Z'Z)^+ Z' diag(e^2) Z (Z'Z)^+.
inline Matrix ols_robust_variance(const Matrix& z, const Vector& resid) {
  const Matrix gram = z.transpose() * z;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gram);
  const Matrix bread = cod.pseudoInverse();
  const Matrix meat = z.transpose() * resid.array().square().matrix().asDiagonal() * z;
  return bread * meat * bread;
}

/// Principal eigenvector of the (symmetrized) adjacency matrix, unit norm,
/// first nonzero entry nonnegative. The zero matrix maps to the zero vector.
inline Vector eigenvector_centrality(const Network& net) {
  const Index n = net.size();
  const Matrix& d = net.adjacency();
  if (!d.any()) return Vector::Zero(n);
  const Matrix sym = net.directed() ? Matrix(0.5 * (d + d.transpose())) : d;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector v = es.eigenvectors().col(n - 1);
  v.normalize();
  for (Index i = 0; i < n; ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      break;
    }
  }
  return v;
}

/// Columns: x (k), degree (1/n) sum_j D_ij, eigenvector centrality, peer means of x (k).
inline Matrix network_controls(const Network& net, const NodeSample& sample) {
  check_paired(net, sample);
  const Index n = net.size(), k = sample.regressor_count();
  const Matrix& d = net.adjacency();
  Matrix out(n, 2 * k + 2);
  out.leftCols(k) = sample.x();
  const Vector links = d.rowwise().sum();
  out.col(k) = links / static_cast<double>(n);
  out.col(k + 1) = eigenvector_centrality(net);
  const Matrix sums = d * sample.x();
  for (Index i = 0; i < n; ++i) {
    if (links(i) > 0) out.block(i, k + 2, 1, k) = sums.row(i) / links(i);
    else out.block(i, k + 2, 1, k).setZero();
  }
  return out;
}

struct IvOptions {
  /// First-stage F statistics below this reject the instruments as irrelevant.
  double min_first_stage_f = 10.0;
};

struct IvResult {
  Vector beta;
  LambdaEstimate lambda;
  PairwiseFitResult fit;
  /// Fitted values of y and X on (1, z).
  Vector y_projected;
  Matrix x_projected;
  Vector first_stage_f;
};

/// Three steps: project y and X on (1, z) by least squares, pairwise-difference
/// the projections, then smooth the projected residuals for lambda.
inline IvResult iv_three_step(const NodeSample& sample, const DistanceMatrix& d2, const MatchingRule& rule,
                              const IvOptions& opts = {}) {
  detail::require_same_size(sample, d2);
  const Matrix& z = sample.z();
  const Index n = sample.size(), q = z.cols() + 1;
  Matrix design(n, q);
  design.col(0).setOnes();
  design.rightCols(q - 1) = z;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < q) throw NumericalError("iv: first-stage design (1, z) is rank deficient");
  if (n <= q) throw ValidationError("iv: more instruments than observations");

  IvResult out;
  out.y_projected = design * qr.solve(sample.y());
  out.x_projected.resize(n, sample.regressor_count());
  out.first_stage_f.resize(sample.regressor_count());
  for (Index c = 0; c < sample.regressor_count(); ++c) {
    const Vector xc = sample.x().col(c);
    out.x_projected.col(c) = design * qr.solve(xc);
    const double tss = (xc.array() - xc.mean()).square().sum();
    const double rss = (xc - out.x_projected.col(c)).squaredNorm();
    const double df1 = static_cast<double>(q - 1), df2 = static_cast<double>(n - q);
    out.first_stage_f(c) = rss > 0.0 ? ((tss - rss) / df1) / (rss / df2) : std::numeric_limits<double>::infinity();
    if (!(out.first_stage_f(c) >= opts.min_first_stage_f)) {
      throw NumericalError("iv: instruments are irrelevant for " + sample.x_names()[static_cast<std::size_t>(c)] +
                           " (first-stage F = " + std::to_string(out.first_stage_f(c)) + ")");
    }
  }
  auto projected = NodeSample::create(out.y_projected, out.x_projected);
  out.fit = pairwise_difference(projected, d2, rule);
  out.beta = out.fit.beta;
  out.lambda = lambda_from_residuals(out.y_projected - out.x_projected * out.beta, d2, rule);
  return out;
}

}  // namespace netreg
