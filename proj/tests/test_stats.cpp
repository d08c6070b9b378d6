#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "abvr/stats.hpp"

namespace abvr {
namespace {

ExperimentDataset toy() {
  ExperimentDataset ds;
  ds.w = {1, 1, 0, 0};
  ds.y = Vector{{3.0, 5.0, 1.0, 3.0}};
  ds.x = Matrix(4, 1);
  ds.x << 1, 2, 1, 2;
  ds.x_names = {"a"};
  ds.z = Matrix(4, 1);
  ds.z << 1, 1, 0, 0;
  ds.z_names = {"b"};
  return ds;
}

TEST(GroupSummary, HandComputedArmMeans) {
  const auto g = group_summary(toy());
  EXPECT_EQ(g.n1, 2u);
  EXPECT_EQ(g.n0, 2u);
  EXPECT_DOUBLE_EQ(g.y_bar_1, 4.0);
  EXPECT_DOUBLE_EQ(g.y_bar_0, 2.0);
  EXPECT_DOUBLE_EQ(g.x_bar_1(0), 1.5);
  // z equals w
  EXPECT_DOUBLE_EQ(g.z_bar_1(0), 1.0);
  EXPECT_DOUBLE_EQ(g.z_bar_0(0), 0.0);
}

TEST(GroupSummary, ConstantOutcome) {
  auto ds = toy();
  ds.y.setConstant(7.25);
  const auto g = group_summary(ds);
  EXPECT_DOUBLE_EQ(g.y_bar_1, 7.25);
  EXPECT_DOUBLE_EQ(g.y_bar_0, 7.25);
}

TEST(GroupSummary, EmptyArmIsDegenerate) {
  auto ds = toy();
  ds.w = {1, 1, 1, 1};
  EXPECT_THROW(group_summary(ds), degenerate_input_error);
}

TEST(SampleVariance, HandExamples) {
  EXPECT_DOUBLE_EQ(sample_variance(std::vector<double>{3, 5}), 2.0);
  EXPECT_DOUBLE_EQ(sample_variance(std::vector<double>{1, 2, 3}), 1.0);
  EXPECT_EQ(sample_variance(std::vector<double>{4, 4, 4, 4}), 0.0);
  EXPECT_THROW(sample_variance(std::vector<double>{1}), degenerate_input_error);
}

TEST(SampleVariance, AffineProperty) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(3.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> v(37);
    for (auto& e : v) e = nd(rng);
    const double a = 0.5 + rep * 0.1, b = -4.0 + rep;
    std::vector<double> t(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = a * v[i] + b;
    EXPECT_NEAR(sample_variance(t), a * a * sample_variance(v), 1e-10 * a * a * sample_variance(v));
  }
}

TEST(Ols, HandSolvedExample) {
  Matrix x(4, 1);
  x << 1, 2, 1, 2;
  const auto fit = ols_fit(x, Vector{{2.0, 4.0, 1.0, 3.0}});
  EXPECT_NEAR(fit.coefficients(0), 2.0, 1e-12);
  EXPECT_NEAR(fit.intercept, -0.5, 1e-12);
  EXPECT_FALSE(fit.rank_deficient);
  EXPECT_EQ(fit.ridge_used, 0.0);
}

TEST(Ols, ConstantResponse) {
  Matrix x(5, 2);
  x << 1, 0.3, 2, -1, 3, 4, 4, 2, 5, 0;
  const auto fit = ols_fit(x, Vector::Constant(5, 3.5));
  EXPECT_LT(fit.coefficients.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fit.intercept, 3.5, 1e-12);
}

TEST(Ols, CollinearColumnsFallBackToRidge) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  const Index n = 200;
  Matrix x(n, 2);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = nd(rng);
    x(i, 1) = x(i, 0);
    y(i) = 1.5 * x(i, 0) + nd(rng);
  }
  const auto fit = ols_fit(x, y);
  EXPECT_TRUE(fit.rank_deficient);
  EXPECT_GT(fit.ridge_used, 0.0);
  // Minimum SSE is the single-column fit.
  const auto single = ols_fit(x.leftCols(1), y);
  const double sse_single = (y - single.predict(x.leftCols(1))).squaredNorm();
  const double sse = (y - fit.predict(x)).squaredNorm();
  EXPECT_NEAR(sse, sse_single, 1e-6);
}

TEST(Ols, ConstantColumnPinnedToZero) {
  Matrix x(4, 2);
  x << 1, 7, 2, 7, 1, 7, 2, 7;
  const auto fit = ols_fit(x, Vector{{2.0, 4.0, 1.0, 3.0}});
  EXPECT_TRUE(fit.rank_deficient);
  EXPECT_EQ(fit.coefficients(1), 0.0);
  EXPECT_NEAR(fit.coefficients(0), 2.0, 1e-12);
  EXPECT_NEAR(fit.intercept, -0.5, 1e-12);
}

TEST(Ols, ZeroRowsIsDegenerate) {
  EXPECT_THROW(ols_fit(Matrix(0, 2), Vector(0)), degenerate_input_error);
  EXPECT_THROW(ols_fit(Matrix(3, 1), Vector(2)), contract_error);
}

TEST(Ols, RecoversExactLinearModel) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(-3.0, 3.0);
  for (int rep = 0; rep < 40; ++rep) {
    const Index n = 60 + rep, k = 1 + rep % 5;
    Matrix x(n, k);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < k; ++j) x(i, j) = nd(rng);
    Vector beta(k);
    for (Index j = 0; j < k; ++j) beta(j) = ud(rng);
    const double c = ud(rng);
    Vector y = x * beta;
    y.array() += c;
    const auto fit = ols_fit(x, y);
    ASSERT_FALSE(fit.rank_deficient);
    EXPECT_LT((fit.coefficients - beta).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(fit.intercept, c, 1e-8);
  }
}

TEST(Ols, ResidualsOrthogonalToDesign) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 500, k = 4;
    Matrix x(n, k);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < k; ++j) x(i, j) = nd(rng) + j;
      y(i) = x(i, 0) - 2.0 * x(i, 3) + 3.0 * nd(rng);
    }
    const auto fit = ols_fit(x, y);
    ASSERT_EQ(fit.ridge_used, 0.0);
    const Vector res = y - fit.predict(x);
    const double scale = y.norm() * x.norm();
    EXPECT_LT(std::abs(res.sum()), 1e-8 * y.norm() * std::sqrt(double(n)));
    for (Index j = 0; j < k; ++j) EXPECT_LT(std::abs(res.dot(x.col(j))), 1e-8 * scale);
    // normal equations
    Matrix xc = x.rowwise() - x.colwise().mean();
    const Vector ne = xc.transpose() * (y.array() - y.mean()).matrix() - xc.transpose() * xc * fit.coefficients;
    EXPECT_LT(ne.norm(), 1e-8 * (xc.transpose() * y).norm());
  }
}

TEST(Ols, Deterministic) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  Matrix x(100, 3);
  Vector y(100);
  for (Index i = 0; i < 100; ++i) {
    for (Index j = 0; j < 3; ++j) x(i, j) = nd(rng);
    y(i) = nd(rng);
  }
  const auto a = ols_fit(x, y), b = ols_fit(x, y);
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.intercept, b.intercept);
}

TEST(Midranks, HandExamples) {
  EXPECT_EQ(midranks(std::vector<double>{10, 20, 20, 30}), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_EQ(midranks(std::vector<double>{-1, 0, 3, 8, 9}), (std::vector<double>{1, 2, 3, 4, 5}));
  EXPECT_EQ(midranks(std::vector<double>{5, 5, 5, 5, 5}), (std::vector<double>(5, 3.0)));
  EXPECT_EQ(midranks(std::vector<double>{3, 1, 2}), (std::vector<double>{3, 1, 2}));
}

TEST(Midranks, SumIsExact) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> ud(0, 9);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(rep);
    std::vector<double> v(n);
    for (auto& e : v) e = ud(rng);
    const auto r = midranks(v);
    const double s = std::accumulate(r.begin(), r.end(), 0.0);
    EXPECT_EQ(s, double(n) * double(n + 1) / 2.0);
  }
}

TEST(Normal, QuantileAndTail) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_sf(1.959963984540054), 0.025, 1e-12);
}

}  // namespace
}  // namespace abvr
