#pragma once

// Linear-in-means peer effects: y_i = x_i beta + E[x|peers] rho1 + E[y|peers] rho2 + lambda(w_i) + e_i.

#include <cmath>
#include <string>
#include <vector>

#include "netreg/estimators.hpp"

namespace netreg {

struct PeerRegressors {
  /// Columns (x, peer-mean x, peer-mean y); n x (2k+1).
  Matrix Xhat;
  /// Nodes with no (positively weighted) links; their peer columns are 0.
  std::vector<bool> isolated;
};

namespace detail {

inline PeerRegressors weighted_peer_means(const Matrix& weights, const NodeSample& sample) {
  const Index n = sample.size(), k = sample.regressor_count();
  PeerRegressors out;
  out.Xhat = Matrix::Zero(n, 2 * k + 1);
  out.Xhat.leftCols(k) = sample.x();
  out.isolated.assign(static_cast<std::size_t>(n), false);
  const Vector total = weights.rowwise().sum();
  const Matrix xs = weights * sample.x();
  const Vector ys = weights * sample.y();
  for (Index i = 0; i < n; ++i) {
    if (!(total(i) > 0.0)) {
      out.isolated[static_cast<std::size_t>(i)] = true;
      continue;
    }
    out.Xhat.block(i, k, 1, k) = xs.row(i) / total(i);
    out.Xhat(i, 2 * k) = ys(i) / total(i);
  }
  return out;
}

}  // namespace detail

inline PeerRegressors build_peer_regressors(const Network& net, const NodeSample& sample) {
  check_paired(net, sample);
  return detail::weighted_peer_means(net.adjacency(), sample);
}

/// Peer means weighted by D_ij K_z(|z_i - z_j| / hz), |.| the L1 norm over covariate columns.
inline PeerRegressors build_peer_regressors_kz(const Network& net, const NodeSample& sample,
                                               const KernelSpec& kz, double hz) {
  check_paired(net, sample);
  if (!(hz > 0.0)) throw ValidationError("agent-covariate bandwidth must be positive");
  const Matrix& z = sample.z();
  const Index n = sample.size();
  const double floor = 0.5 * std::pow(static_cast<double>(n), -1.0 / (2.0 * static_cast<double>(z.cols()) + 1.0));
  if (hz < floor) {
    warn("agent-covariate bandwidth " + std::to_string(hz) + " is below 0.5 n^(-1/(2L+1)) = " +
         std::to_string(floor));
  }
  const Matrix& d = net.adjacency();
  Matrix w = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (d(i, j) != 0.0) w(i, j) = d(i, j) * kz.value((z.row(i) - z.row(j)).lpNorm<1>() / hz);
  return detail::weighted_peer_means(w, sample);
}

/// theta = (beta, rho1, rho2) by pairwise differencing with Xhat as regressors.
/// Columns that are identically zero (no node has peers) are left out of the
/// fit and get coefficient 0.
inline PairwiseFitResult peer_theta(const PeerRegressors& reg, const Vector& y, const DistanceMatrix& d2,
                                    const MatchingRule& rule) {
  if (reg.Xhat.rows() != y.size()) throw ValidationError("peer regressors and outcome differ in length");
  std::vector<Index> keep;
  for (Index c = 0; c < reg.Xhat.cols(); ++c)
    if (reg.Xhat.col(c).any()) keep.push_back(c);
  if (keep.empty()) throw ValidationError("peer regressors are identically zero");
  if (static_cast<Index>(keep.size()) < reg.Xhat.cols())
    warn("peer regressor columns with no variation are fixed at 0");
  Matrix x(reg.Xhat.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) x.col(static_cast<Index>(c)) = reg.Xhat.col(keep[c]);

  PairwiseFitResult fit;
  try {
    fit = pairwise_difference(NodeSample::create(y, x), d2, rule);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("peer effects not identified, no residual variation in peer means: ") +
                         e.what());
  }
  if (static_cast<Index>(keep.size()) == reg.Xhat.cols()) return fit;
  const Index p = reg.Xhat.cols();
  PairwiseFitResult full;
  full.h = fit.h;
  full.n_active_pairs = fit.n_active_pairs;
  full.beta = Vector::Zero(p);
  full.numerator = Vector::Zero(p);
  full.gamma_hat = Matrix::Zero(p, p);
  for (std::size_t a = 0; a < keep.size(); ++a) {
    full.beta(keep[a]) = fit.beta(static_cast<Index>(a));
    full.numerator(keep[a]) = fit.numerator(static_cast<Index>(a));
    for (std::size_t b = 0; b < keep.size(); ++b)
      full.gamma_hat(keep[a], keep[b]) = fit.gamma_hat(static_cast<Index>(a), static_cast<Index>(b));
  }
  return full;
}

inline LambdaEstimate peer_lambda(const PeerRegressors& reg, const Vector& y, const Vector& theta,
                                  const DistanceMatrix& d2, const MatchingRule& rule) {
  if (reg.Xhat.cols() != theta.size()) throw ValidationError("theta length does not match peer regressors");
  return lambda_from_residuals(y - reg.Xhat * theta, d2, rule);
}

}  // namespace netreg
