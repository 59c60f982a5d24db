#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "netreg/inference.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace netreg;

namespace {

struct Data {
  Network net;
  DistanceMatrix d2;
  NodeSample sample;
};

Data make_data(int n, int k, std::uint64_t seed, double p = 0.45) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z;
  const Matrix d = oracle::random_network(n, p, g);
  Matrix x(n, k);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) x(i, c) = z(g);
    y(i) = x.row(i).sum() + z(g);
  }
  auto net = Network::from_matrix(d);
  return {net, codegree_distance_sq(net), NodeSample::create(y, x)};
}

double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST(GammaHat, Basics) {
  auto d = make_data(10, 1, 1);
  EXPECT_TRUE(gamma_hat(d.sample, d.d2, MatchingRule::fixed(1e-12, {}, KernelArgument::squared)).isZero(0.0));
  auto same_x = NodeSample::create(d.sample.y(), Matrix::Ones(10, 1));
  EXPECT_TRUE(gamma_hat(same_x, d.d2, MatchingRule::fixed(0.5)).isZero(0.0));

  Matrix d2(3, 3);
  d2 << 0, .25, .5, .25, 0, .75, .5, .75, 0;
  Matrix x(3, 1);
  x << 1, 3, 6;
  auto g = gamma_hat(NodeSample::create(Vector::Zero(3), x), {d2, DistanceKind::binary},
                     MatchingRule::fixed(1.0, {}, KernelArgument::squared));
  double loop = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) loop += 0.75 * (1 - d2(i, j) * d2(i, j)) * std::pow(x(i, 0) - x(j, 0), 2);
  EXPECT_NEAR(g(0, 0), loop / 3.0, 1e-14);
}

TEST(OmegaHat, PerfectFitIsZero) {
  auto d = make_data(8, 1, 2);
  auto exact = NodeSample::create(d.sample.x().col(0) * 2.0, d.sample.x());
  auto om = omega_hat(exact, Vector::Constant(1, 2.0), d.net, d.d2, MatchingRule::fixed(0.8));
  EXPECT_LE(om.combined().cwiseAbs().maxCoeff(), 1e-20);
}

TEST(OmegaHat, TinyBandwidthIsZero) {
  auto d = make_data(8, 1, 3);
  auto om = omega_hat(d.sample, Vector::Ones(1), d.net, d.d2, MatchingRule::fixed(1e-12, {}, KernelArgument::squared));
  EXPECT_TRUE(om.term1.isZero(0.0));
  EXPECT_TRUE(om.term2.isZero(0.0));
  EXPECT_TRUE(om.term3.isZero(0.0));
}

class OmegaOracle : public ::testing::TestWithParam<int> {};

TEST_P(OmegaOracle, FactorizedEqualsQuintupleSum) {
  const int k = 1 + GetParam() % 2;
  auto d = make_data(6, k, 500 + GetParam());
  const Vector beta = Vector::Constant(k, 0.9);
  struct Case {
    double h1, h2;
    KernelArgument arg;
    oracle::Arg oarg;
  };
  for (const Case& c : {Case{0.8, 0.8, KernelArgument::squared, oracle::Arg::squared},
                        Case{0.3, 0.6, KernelArgument::squared, oracle::Arg::squared},
                        Case{0.5, 0.5, KernelArgument::root, oracle::Arg::root},
                        Case{0.4, 0.8, KernelArgument::root, oracle::Arg::root}}) {
    auto om = omega_hat(d.sample, beta, d.net, d.d2, MatchingRule::fixed(c.h1, {}, c.arg),
                        MatchingRule::fixed(c.h2, {}, c.arg));
    auto lit = oracle::omega_quintuple(d.sample.x(), d.sample.y(), beta, d.net.adjacency(), c.h1, c.h2, c.oarg);
    EXPECT_LE(rel_err(om.term1, lit.term1), 1e-10);
    EXPECT_LE(rel_err(om.term2, lit.term2), 1e-10);
    EXPECT_LE(rel_err(om.term3, lit.term3), 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(Random, OmegaOracle, ::testing::Range(0, 6));

TEST(OmegaHat, GridMatchesPairwiseCalls) {
  auto d = make_data(12, 2, 9);
  const Vector beta = Vector::Ones(2);
  auto r1 = MatchingRule::fixed(0.3), r2 = MatchingRule::fixed(0.6);
  auto grid = omega_hat_grid(d.sample, beta, d.net, d.d2, {r1, r2});
  auto cross = omega_hat(d.sample, beta, d.net, d.d2, r1, r2);
  EXPECT_LE(rel_err(grid[0][1].combined(), cross.combined()), 1e-13);
  EXPECT_LE(rel_err(grid[1][0].combined(), cross.combined().transpose()), 1e-13);
  EXPECT_LE((grid[0][0].term1 - grid[0][0].term1.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(BetaVariance, ScalarArithmetic) {
  OmegaComponents om{Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  auto v = beta_variance(Matrix::Constant(1, 1, 2.0), om, 100);
  EXPECT_NEAR(v.V(0, 0), 0.02, 1e-15);
  EXPECT_NEAR(v.se(0), 0.141421356, 1e-8);
  auto fs = finite_support_variance(Matrix::Constant(1, 1, 2.0), om, 100);
  EXPECT_EQ(fs.V, v.V);
  EXPECT_EQ(fs.method, VarianceMethod::finite_support);

  OmegaComponents zero{Matrix::Zero(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  EXPECT_EQ(beta_variance(Matrix::Constant(1, 1, 2.0), zero, 100).V(0, 0), 0.0);
  EXPECT_THROW(beta_variance(Matrix::Zero(1, 1), om, 100), NumericalError);
}

TEST(BetaVariance, ClampsNegativeDiagonal) {
  testutil::WarningCapture w;
  OmegaComponents om{Matrix::Zero(1, 1), Matrix::Constant(1, 1, -1.0), Matrix::Zero(1, 1)};
  auto v = beta_variance(Matrix::Identity(1, 1), om, 10);
  EXPECT_EQ(v.V(0, 0), 0.0);
  EXPECT_EQ(w.messages.size(), 1u);
}

TEST(BiasCorrectedVariance, SingleComponentReduces) {
  auto d = make_data(15, 2, 21);
  auto rule = MatchingRule::fixed(0.5);
  auto spec = solve_bias_weights(1, {1.0}, 1.0);
  auto fit = bias_corrected_beta(d.sample, d.d2, rule, spec);
  auto grid = omega_hat_grid(d.sample, fit.beta, d.net, d.d2, {rule});
  auto bc = bias_corrected_variance(fit.components, spec, grid, 15);
  auto plain = beta_variance(fit.components[0].gamma_hat, grid[0][0], 15);
  EXPECT_EQ(bc.V, plain.V);
}

TEST(BiasCorrectedVariance, Symmetric) {
  auto d = make_data(20, 2, 22);
  auto rule = MatchingRule::fixed(0.4);
  auto spec = solve_bias_weights(2, {1.0, 2.0}, 1.0);
  auto fit = bias_corrected_beta(d.sample, d.d2, rule, spec);
  auto grid = omega_hat_grid(d.sample, fit.beta, d.net, d.d2, {rule, rule.scaled(2.0)});
  auto v = bias_corrected_variance(fit.components, spec, grid, 20);
  EXPECT_LE((v.V - v.V.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(v.method, VarianceMethod::bias_corrected);
}

TEST(BetaVariance, PermutationInvariant) {
  auto d = make_data(14, 1, 33);
  std::vector<int> perm(14);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 g(4);
  std::shuffle(perm.begin(), perm.end(), g);
  Matrix pd(14, 14), px(14, 1);
  Vector py(14);
  for (int i = 0; i < 14; ++i) {
    px(i, 0) = d.sample.x()(perm[i], 0);
    py(i) = d.sample.y()(perm[i]);
    for (int j = 0; j < 14; ++j) pd(i, j) = d.net(perm[i], perm[j]);
  }
  auto net2 = Network::from_matrix(pd);
  auto s2 = NodeSample::create(py, px);
  auto d22 = codegree_distance_sq(net2);
  auto rule = MatchingRule::fixed(0.5);
  auto f1 = pairwise_difference(d.sample, d.d2, rule);
  auto f2 = pairwise_difference(s2, d22, rule);
  auto v1 = beta_variance(f1.gamma_hat, omega_hat(d.sample, f1.beta, d.net, d.d2, rule), 14);
  auto v2 = beta_variance(f2.gamma_hat, omega_hat(s2, f2.beta, net2, d22, rule), 14);
  EXPECT_NEAR(v1.V(0, 0), v2.V(0, 0), 1e-10);
}

namespace {

Matrix lambda_variance_loop(const Vector& u, const Matrix& d2, double h, const std::vector<Index>& targets) {
  const Index n = u.size();
  const auto m = static_cast<Index>(targets.size());
  auto w = [&](Index i, Index t) { return i == t ? 0.75 : oracle::weight(d2(i, t), h, oracle::Arg::root); };
  Vector r(m), rp(m);
  for (Index a = 0; a < m; ++a) {
    r(a) = rp(a) = 0;
    for (Index t = 0; t < n; ++t) {
      r(a) += w(targets[a], t) / n;
      rp(a) += u(t) * w(targets[a], t) / n;
    }
  }
  Matrix v(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) {
      double acc = 0;
      for (Index t = 0; t < n; ++t) {
        const double ea = u(t) * w(targets[a], t) - rp(a) - rp(a) / r(a) * (w(targets[a], t) - r(a));
        const double eb = u(t) * w(targets[b], t) - rp(b) - rp(b) / r(b) * (w(targets[b], t) - r(b));
        acc += ea * eb;
      }
      v(a, b) = acc / n / (n * r(a) * r(b));
    }
  return v;
}

}  // namespace

TEST(LambdaVariance, MatchesLoop) {
  auto d = make_data(9, 1, 44);
  const Vector beta = Vector::Constant(1, 0.7);
  const std::vector<Index> targets{0, 3, 8};
  auto v = lambda_variance(d.sample, beta, d.d2, MatchingRule::fixed(0.4), targets);
  auto loop = lambda_variance_loop(d.sample.y() - d.sample.x() * beta, d.d2.d2, 0.4, targets);
  EXPECT_LE((v - loop).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((v - v.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es(v);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(LambdaVariance, ConstantResiduals) {
  auto d = make_data(4, 1, 45);
  const Vector beta = Vector::Constant(1, 1.0);
  auto s = NodeSample::create((d.sample.x().col(0).array() + 3.0).matrix(), d.sample.x());
  auto v = lambda_variance(s, beta, d.d2, MatchingRule::fixed(0.5), {0, 1});
  auto loop = lambda_variance_loop(Vector::Constant(4, 3.0), d.d2.d2, 0.5, {0, 1});
  EXPECT_LE((v - loop).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE(v.cwiseAbs().maxCoeff(), 1e-13);
}

TEST(LambdaVariance, ZeroResidualsAndErrors) {
  auto d = make_data(6, 1, 46);
  auto exact = NodeSample::create(d.sample.x().col(0), d.sample.x());
  auto v = lambda_variance(exact, Vector::Ones(1), d.d2, MatchingRule::fixed(0.5), {2});
  EXPECT_EQ(v(0, 0), 0.0);
  EXPECT_THROW(lambda_variance(exact, Vector::Ones(1), d.d2, MatchingRule::fixed(0.5), {}), ValidationError);
  EXPECT_THROW(lambda_variance(exact, Vector::Ones(1), d.d2, MatchingRule::fixed(0.5), {6}), ValidationError);
}

TEST(Undersmoothing, ZeroCases) {
  auto d = make_data(8, 1, 51);
  auto exact = NodeSample::create(d.sample.x().col(0), d.sample.x());
  auto a = undersmoothing_diagnostic(exact, Vector::Ones(1), d.d2, MatchingRule::fixed(0.5));
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1e-28);
  auto shifted = NodeSample::create((d.sample.x().col(0).array() + 2.5).matrix(), d.sample.x());
  auto b = undersmoothing_diagnostic(shifted, Vector::Ones(1), d.d2, MatchingRule::fixed(0.5));
  EXPECT_LE(b.cwiseAbs().maxCoeff(), 1e-24);
}

TEST(Undersmoothing, MatchesLoop) {
  auto d = make_data(6, 1, 52);
  const Vector beta = Vector::Constant(1, 0.6);
  const double h = 0.5;
  auto diag = undersmoothing_diagnostic(d.sample, beta, d.d2, MatchingRule::fixed(h));
  const Vector lam = oracle::lambda_loop(d.sample.y() - d.sample.x() * beta, d.d2.d2, h, oracle::Arg::root);
  for (int i = 0; i < 6; ++i) {
    double b = 0, r = 0;
    for (int t = 0; t < 6; ++t) {
      const double w = i == t ? 0.75 : oracle::weight(d.d2(i, t), h, oracle::Arg::root);
      b += (lam(i) - lam(t)) * w / 6.0;
      r += w / 6.0;
    }
    EXPECT_NEAR(diag(i), b * b * 6.0 / r, 1e-13);
  }
}

TEST(ConfidenceInterval, Examples) {
  VarianceResult v;
  v.se = Vector::Ones(1);
  auto ci = confidence_interval(Vector::Zero(1), v, 0.95);
  EXPECT_NEAR(ci[0].lo, -1.95996, 1e-4);
  EXPECT_NEAR(ci[0].hi, 1.95996, 1e-4);
  v.se(0) = 0.0;
  ci = confidence_interval(Vector::Constant(1, 3.0), v, 0.95);
  EXPECT_EQ(ci[0].lo, 3.0);
  EXPECT_EQ(ci[0].hi, 3.0);
  v.se(0) = 0.1;
  ci = confidence_interval(Vector::Ones(1), v, 0.95);
  EXPECT_NEAR(ci[0].lo, 0.804, 1e-3);
  EXPECT_NEAR(ci[0].hi, 1.196, 1e-3);
  EXPECT_THROW(confidence_interval(Vector::Ones(1), v, 1.0), ValidationError);
}

TEST(Normal, QuantileAccuracy) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-9);
  EXPECT_NEAR(normal_quantile(0.999), 3.090232306167813, 1e-12);
  for (double p = 0.001; p < 1.0; p += 0.0137) EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-14);
}
