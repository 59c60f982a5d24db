#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "netreg/error.hpp"
#include "netreg/netdata.hpp"

namespace netreg {

enum class KernelFamily { epanechnikov };

/// Kernel supported on [0,1): K(u) >= 0, K(u) = 0 for |u| >= 1.
struct KernelSpec {
  KernelFamily family = KernelFamily::epanechnikov;

  double operator()(double u) const { return value(u); }

  double value(double u) const {
    return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  }
  double d1(double u) const { return std::abs(u) < 1.0 ? -1.5 * u : 0.0; }
  double d2(double u) const { return std::abs(u) < 1.0 ? -1.5 : 0.0; }
};

inline double kernel_eval(const KernelSpec& k, double u) { return k.value(u); }
inline double kernel_d1(const KernelSpec& k, double u) { return k.d1(u); }
inline double kernel_d2(const KernelSpec& k, double u) { return k.d2(u); }

inline KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "epanechnikov") return KernelFamily::epanechnikov;
  throw ValidationError("unknown kernel family '" + name + "'");
}

/// h(n) = constant * n^(-exponent).
struct BandwidthRule {
  double constant = 0.1;
  double exponent = 1.0 / 9.0;

  void validate() const {
    if (!(constant > 0.0) || !std::isfinite(constant))
      throw ValidationError("bandwidth constant must be positive");
    if (!(exponent >= 0.0) || !std::isfinite(exponent))
      throw ValidationError("bandwidth exponent must be non-negative");
  }
};

inline double bandwidth(const BandwidthRule& rule, Index n) {
  rule.validate();
  if (n < 2) throw ValidationError("bandwidth needs n >= 2");
  return rule.constant * std::pow(static_cast<double>(n), -rule.exponent);
}

/// Warns when the exponent falls outside the rate window implied by a
/// Hoelder exponent alpha, (alpha/(4+8 alpha), alpha/(2+4 alpha)). Returns
/// whether the exponent is inside.
inline bool check_bandwidth_rate(const BandwidthRule& rule, double alpha = 1.0) {
  const double lo = alpha / (4.0 + 8.0 * alpha), hi = alpha / (2.0 + 4.0 * alpha);
  const bool inside = rule.exponent > lo && rule.exponent < hi;
  if (!inside) {
    warn("bandwidth exponent " + std::to_string(rule.exponent) + " is outside (" + std::to_string(lo) +
         ", " + std::to_string(hi) + ") for alpha = " + std::to_string(alpha));
  }
  return inside;
}

/// What the kernel sees for a squared codegree distance d2: either d2 itself
/// (K(d2/h)) or its root (K(sqrt(d2)/h)).
enum class KernelArgument { squared, root };

inline KernelArgument parse_kernel_argument(const std::string& name) {
  if (name == "squared") return KernelArgument::squared;
  if (name == "root") return KernelArgument::root;
  throw ValidationError("unknown kernel argument '" + name + "' (expected squared or root)");
}

inline const char* to_string(KernelArgument a) {
  return a == KernelArgument::squared ? "squared" : "root";
}

inline double kernel_argument(double d2, KernelArgument arg) {
  return arg == KernelArgument::squared ? d2 : std::sqrt(std::max(d2, 0.0));
}

/// Per-agent bandwidths that give every agent exactly m nearest matches.
struct AdaptiveBandwidths {
  Vector h;
  Index m = 0;
  KernelArgument argument = KernelArgument::root;
  /// neighbors[i] lists the m agents matched to i, nearest first.
  std::vector<std::vector<Index>> neighbors;
  /// selected(i,j) = 1 if j is among i's neighbors or i among j's.
  Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> selected;
};

/// h_i is the m-th smallest kernel argument in row i, nudged up by one ulp so
/// that the m-th neighbor satisfies the strict support condition u < 1. Ties at
/// the cutoff go to the lower index.
inline AdaptiveBandwidths adaptive_bandwidths(const Matrix& d2, Index m,
                                              KernelArgument arg = KernelArgument::root) {
  const Index n = d2.rows();
  if (m < 1 || m > n - 1) {
    throw ValidationError("adaptive match count " + std::to_string(m) + " must lie in [1, " +
                          std::to_string(n - 1) + "]");
  }
  AdaptiveBandwidths out;
  out.m = m;
  out.argument = arg;
  out.h.resize(n);
  out.neighbors.resize(static_cast<std::size_t>(n));
  out.selected.setZero(n, n);
  std::vector<Index> order(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    order.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return kernel_argument(d2(i, a), arg) < kernel_argument(d2(i, b), arg);
    });
    const double cutoff = kernel_argument(d2(i, order[static_cast<std::size_t>(m - 1)]), arg);
    out.h(i) = std::nextafter(cutoff, std::numeric_limits<double>::infinity());
    auto& nb = out.neighbors[static_cast<std::size_t>(i)];
    nb.assign(order.begin(), order.begin() + m);
    for (Index j : nb) {
      out.selected(i, j) = 1;
      out.selected(j, i) = 1;
    }
  }
  return out;
}

/// m for an adaptive estimator calibrated to a fixed bandwidth h: the average
/// number of partners per agent with kernel argument <= h, rounded, at least 1.
inline Index calibrate_match_count(const Matrix& d2, double h, KernelArgument arg) {
  const Index n = d2.rows();
  double pairs = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (j != i && kernel_argument(d2(i, j), arg) <= h) pairs += 1.0;
  auto m = static_cast<Index>(std::llround(pairs / static_cast<double>(n)));
  return std::clamp<Index>(m, 1, n - 1);
}

/// Kernel weights for agent pairs: K(g(d2_ij)/h_ij) with g from KernelArgument
/// and h_ij either a fixed bandwidth or max(h_i, h_j) over adaptive matches.
class MatchingRule {
 public:
  static MatchingRule fixed(double h, KernelSpec kernel = {},
                            KernelArgument arg = KernelArgument::root) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("bandwidth must be positive");
    MatchingRule r;
    r.kernel_ = kernel;
    r.argument_ = arg;
    r.h_ = h;
    return r;
  }

  static MatchingRule adaptive(AdaptiveBandwidths bw, KernelSpec kernel = {}) {
    MatchingRule r;
    r.kernel_ = kernel;
    r.argument_ = bw.argument;
    r.h_ = bw.h.mean();
    r.adaptive_ = std::make_shared<const AdaptiveBandwidths>(std::move(bw));
    return r;
  }

  bool is_adaptive() const { return adaptive_ != nullptr; }
  const AdaptiveBandwidths& adaptive_bandwidths() const { return *adaptive_; }
  /// The fixed bandwidth, or the mean per-agent bandwidth for adaptive rules.
  double bandwidth() const { return h_; }
  const KernelSpec& kernel() const { return kernel_; }
  KernelArgument argument() const { return argument_; }

  /// Same rule with every bandwidth multiplied by c.
  MatchingRule scaled(double c) const {
    if (!(c > 0.0)) throw ValidationError("bandwidth scale must be positive");
    MatchingRule r = *this;
    r.h_ *= c;
    if (adaptive_) {
      auto bw = *adaptive_;
      bw.h *= c;
      r.adaptive_ = std::make_shared<const AdaptiveBandwidths>(std::move(bw));
    }
    return r;
  }

  double pair_bandwidth(Index i, Index j) const {
    return adaptive_ ? std::max(adaptive_->h(i), adaptive_->h(j)) : h_;
  }

  /// Weight of the pair (i, j) at squared distance d2. An agent is always
  /// matched to itself with weight K(0).
  double weight(Index i, Index j, double d2) const {
    if (i == j) return kernel_.value(0.0);
    if (adaptive_ && !adaptive_->selected(i, j)) return 0.0;
    return kernel_.value(kernel_argument(d2, argument_) / pair_bandwidth(i, j));
  }

  /// d weight / d d2 for i != j.
  double slope(Index i, Index j, double d2) const {
    if (i == j) return 0.0;
    if (adaptive_ && !adaptive_->selected(i, j)) return 0.0;
    const double h = pair_bandwidth(i, j);
    if (argument_ == KernelArgument::squared) return kernel_.d1(d2 / h) / h;
    const double root = std::sqrt(std::max(d2, 0.0));
    // d/dd2 K(sqrt(d2)/h) = K'(u) / (2 h sqrt(d2)); at d2 = 0 use the limit K''(0) / (2 h^2).
    if (root == 0.0) return kernel_.d2(0.0) / (2.0 * h * h);
    return kernel_.d1(root / h) / (2.0 * h * root);
  }

 private:
  MatchingRule() = default;

  KernelSpec kernel_{};
  KernelArgument argument_ = KernelArgument::root;
  double h_ = 0.0;
  std::shared_ptr<const AdaptiveBandwidths> adaptive_;
};

}  // namespace netreg
