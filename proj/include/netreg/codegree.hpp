#pragma once

// Empirical codegree distances between agents.
//
// With c(t,i) = (1/n) sum_s D(t,s) D(i,s), the squared codegree distance is
//   d2(i,j) = (1/n) sum_t (c(t,i) - c(t,j))^2.
// Sums run over all indices (s and t may equal i or j).

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "netreg/kernels.hpp"
#include "netreg/netdata.hpp"

namespace netreg {

/// c(t,i) = (1/n) sum_s D(t,s) D(i,s).
struct CodegreeMatrix {
  Matrix c;
};

enum class DistanceKind { binary, weighted_max, conditional };

/// Symmetric n x n matrix of squared distances in [0,1] with zero diagonal.
struct DistanceMatrix {
  Matrix d2;
  DistanceKind kind = DistanceKind::binary;

  Index size() const { return d2.rows(); }
  double operator()(Index i, Index j) const { return d2(i, j); }
};

inline CodegreeMatrix codegree_matrix(const Network& net) {
  const Matrix& d = net.adjacency();
  const double n = static_cast<double>(net.size());
  CodegreeMatrix out;
  out.c.noalias() = d * d.transpose();
  out.c /= n;
  return out;
}

namespace detail {

/// Pairwise squared distances between columns of c, scaled by 1/rows.
inline Matrix column_distance_sq(const Matrix& c) {
  const Index n = c.cols();
  const double scale = 1.0 / static_cast<double>(c.rows());
  Matrix d2 = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < j; ++i) {
      const double v = (c.col(i) - c.col(j)).squaredNorm() * scale;
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  return d2;
}

inline Matrix binary_distance_sq(const Matrix& d) {
  Matrix c = d * d.transpose();
  c /= static_cast<double>(d.rows());
  return column_distance_sq(c);
}

}  // namespace detail

inline DistanceMatrix codegree_distance_sq(const CodegreeMatrix& cm) {
  return {detail::column_distance_sq(cm.c), DistanceKind::binary};
}

inline DistanceMatrix codegree_distance_sq(const Network& net) {
  return codegree_distance_sq(codegree_matrix(net));
}

/// Maximum codegree distance for weighted or multi-layer links.
///
/// For each threshold x (one value per layer) the binary network
/// 1{D(i,j) not <= x componentwise} is formed and its codegree distance taken;
/// the result is the elementwise maximum over thresholds. Thresholds are the
/// Cartesian product of the distinct off-diagonal values per layer, thinned
/// uniformly to at most max_thresholds.
inline DistanceMatrix max_codegree_distance_sq(const WeightedNetwork& wnet,
                                               std::size_t max_thresholds = 512) {
  const Index n = wnet.size();
  const Index layers = wnet.layer_count();
  std::vector<std::vector<double>> values(static_cast<std::size_t>(layers));
  for (Index l = 0; l < layers; ++l) {
    std::set<double> distinct;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j && std::isfinite(wnet.layer(l)(i, j))) distinct.insert(wnet.layer(l)(i, j));
    if (distinct.empty()) throw ValidationError("weighted network has no finite off-diagonal entries");
    values[static_cast<std::size_t>(l)].assign(distinct.begin(), distinct.end());
  }

  std::size_t total = 1;
  for (const auto& v : values) {
    total *= v.size();
    if (total > (std::size_t{1} << 40)) break;
  }
  std::vector<std::size_t> picks;
  if (total <= max_thresholds) {
    picks.resize(total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
  } else {
    for (std::size_t k = 0; k < max_thresholds; ++k) {
      picks.push_back(static_cast<std::size_t>(
          std::llround(static_cast<double>(k) * static_cast<double>(total - 1) /
                       static_cast<double>(max_thresholds - 1))));
    }
  }

  Matrix best = Matrix::Zero(n, n);
  Matrix indicator(n, n);
  std::vector<double> threshold(static_cast<std::size_t>(layers));
  for (std::size_t flat : picks) {
    for (Index l = layers - 1; l >= 0; --l) {
      const auto& v = values[static_cast<std::size_t>(l)];
      threshold[static_cast<std::size_t>(l)] = v[flat % v.size()];
      flat /= v.size();
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        bool below = true;
        for (Index l = 0; l < layers && below; ++l)
          below = wnet.layer(l)(i, j) <= threshold[static_cast<std::size_t>(l)];
        indicator(i, j) = (i != j && !below) ? 1.0 : 0.0;
      }
    }
    best = best.cwiseMax(detail::binary_distance_sq(indicator));
  }
  return {std::move(best), DistanceKind::weighted_max};
}

/// Codegree distance conditional on link covariates:
///   d2(i,j) = (1/n) sum_t [ sum_s D(t,s)(D(i,s)-D(j,s)) w_s / sum_s w_s ]^2,
///   w_s = K_z((|z(i,s)-z(t,s)| + |z(j,s)-z(t,s)|) / hz),
/// with |.| the L1 norm across layers. A t-term with zero total weight contributes 0.
inline DistanceMatrix conditional_codegree_distance_sq(const Network& net, const LinkCovariates& z,
                                                       const KernelSpec& kz, double hz) {
  const Index n = net.size();
  if (z.size() != n) throw ValidationError("link covariates and network differ in size");
  if (!(hz > 0.0)) throw ValidationError("link-covariate bandwidth must be positive");
  const auto nn = static_cast<std::size_t>(n);
  // row-major copies so the inner loop over s is contiguous
  std::vector<double> dr(nn * nn), gap(nn * nn);
  for (Index a = 0; a < n; ++a)
    for (Index s = 0; s < n; ++s) dr[static_cast<std::size_t>(a) * nn + static_cast<std::size_t>(s)] = net(a, s);
  Matrix out = Matrix::Zero(n, n);
  for (Index t = 0; t < n; ++t) {
    for (Index a = 0; a < n; ++a)
      for (Index s = 0; s < n; ++s)
        gap[static_cast<std::size_t>(a) * nn + static_cast<std::size_t>(s)] = z.l1(a, s, t, s) / hz;
    const double* dt = &dr[static_cast<std::size_t>(t) * nn];
    for (Index i = 0; i < n; ++i) {
      const double* di = &dr[static_cast<std::size_t>(i) * nn];
      const double* gi = &gap[static_cast<std::size_t>(i) * nn];
      for (Index j = i + 1; j < n; ++j) {
        const double* dj = &dr[static_cast<std::size_t>(j) * nn];
        const double* gj = &gap[static_cast<std::size_t>(j) * nn];
        double num = 0.0, den = 0.0;
        for (std::size_t s = 0; s < nn; ++s) {
          const double w = kz.value(gi[s] + gj[s]);
          den += w;
          num += dt[s] * (di[s] - dj[s]) * w;
        }
        if (den > 0.0) {
          const double r = num / den;
          out(i, j) += r * r;
        }
      }
    }
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) out(j, i) = out(i, j) = out(i, j) / static_cast<double>(n);
  return {std::move(out), DistanceKind::conditional};
}

}  // namespace netreg
