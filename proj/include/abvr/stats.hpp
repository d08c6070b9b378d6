#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"

namespace abvr {

// Per-arm sample means of the outcome and of both covariate blocks.
struct GroupSummary {
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  double y_bar_1 = 0.0;
  double y_bar_0 = 0.0;
  Vector x_bar_1;
  Vector x_bar_0;
  Vector z_bar_1;
  Vector z_bar_0;
};

inline double mean(std::span<const double> v) {
  if (v.empty()) throw degenerate_input_error("mean of an empty vector");
  double s = 0.0;
  for (double e : v) s += e;
  return s / static_cast<double>(v.size());
}

// Unbiased sample variance, denominator len - 1. Two-pass for stability.
inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2)
    throw degenerate_input_error("sample variance needs at least 2 values");
  const double mu = mean(v);
  double ss = 0.0;
  for (double e : v) ss += (e - mu) * (e - mu);
  return ss / static_cast<double>(v.size() - 1);
}

inline double mean(const Vector& v) {
  return mean(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

inline double sample_variance(const Vector& v) {
  return sample_variance(
      std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

inline GroupSummary group_summary(const ExperimentDataset& ds) {
  ds.check_shape();
  GroupSummary g;
  g.n1 = ds.n1();
  g.n0 = ds.n0();
  if (g.n1 == 0 || g.n0 == 0)
    throw degenerate_input_error("group summary needs both arms non-empty");

  double sy1 = 0.0, sy0 = 0.0;
  Vector sx1 = Vector::Zero(ds.d()), sx0 = Vector::Zero(ds.d());
  Vector sz1 = Vector::Zero(ds.m()), sz0 = Vector::Zero(ds.m());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto r = static_cast<Index>(i);
    if (ds.w[i]) {
      sy1 += ds.y(r);
      sx1 += ds.x.row(r).transpose();
      sz1 += ds.z.row(r).transpose();
    } else {
      sy0 += ds.y(r);
      sx0 += ds.x.row(r).transpose();
      sz0 += ds.z.row(r).transpose();
    }
  }
  const double c1 = static_cast<double>(g.n1), c0 = static_cast<double>(g.n0);
  g.y_bar_1 = sy1 / c1;
  g.y_bar_0 = sy0 / c0;
  g.x_bar_1 = sx1 / c1;
  g.x_bar_0 = sx0 / c0;
  g.z_bar_1 = sz1 / c1;
  g.z_bar_0 = sz0 / c0;
  return g;
}

// Least-squares fit with an intercept.
struct OlsFit {
  Vector coefficients;
  double intercept = 0.0;
  bool rank_deficient = false;
  double ridge_used = 0.0;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return intercept + row.dot(coefficients);
  }

  Vector predict(const Matrix& design) const {
    if (design.cols() != coefficients.size())
      throw contract_error("design has " + std::to_string(design.cols()) +
                           " columns, fit expects " +
                           std::to_string(coefficients.size()));
    Vector out = design * coefficients;
    out.array() += intercept;
    return out;
  }
};

namespace detail {

inline bool column_is_constant(const Matrix& a, Index j) {
  const double first = a(0, j);
  for (Index i = 1; i < a.rows(); ++i)
    if (a(i, j) != first) return false;
  return true;
}

}  // namespace detail

// Ordinary least squares of `response` on the columns of `design` plus an
// intercept.
//
// The design is centered and solved by column-pivoted Householder QR.
// Exactly constant columns carry no information once centered; they are
// pinned to a zero coefficient and flagged as rank deficiency. If the
// remaining centered design has an estimated condition number above
// 1/sqrt(eps) (its Gram matrix is then singular to working precision), the
// fit falls back to ridge with lambda = 1e-8 * trace(Gram) / k.
inline OlsFit ols_fit(const Matrix& design, const Vector& response) {
  const Index n = design.rows();
  const Index k = design.cols();
  if (n == 0) throw degenerate_input_error("least squares on zero rows");
  if (response.size() != n)
    throw contract_error("response length differs from design rows");

  OlsFit fit;
  fit.coefficients = Vector::Zero(k);
  const double y_bar = mean(response);

  std::vector<Index> active;
  active.reserve(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j)
    if (!detail::column_is_constant(design, j)) active.push_back(j);
  fit.rank_deficient = static_cast<Index>(active.size()) < k;

  if (active.empty()) {
    fit.intercept = y_bar;
    return fit;
  }

  const auto r = static_cast<Index>(active.size());
  Matrix centered(n, r);
  Vector col_means(r);
  for (Index a = 0; a < r; ++a) {
    col_means(a) = design.col(active[static_cast<std::size_t>(a)]).mean();
    centered.col(a) =
        design.col(active[static_cast<std::size_t>(a)]).array() - col_means(a);
  }
  const Vector y_c = response.array() - y_bar;

  Eigen::ColPivHouseholderQR<Matrix> qr(centered);
  const auto& packed = qr.matrixQR();
  const Index diag = std::min(n, r);
  const double r_max = std::abs(packed(0, 0));
  const double r_min = std::abs(packed(diag - 1, diag - 1));
  const double cond_limit =
      1.0 / std::sqrt(std::numeric_limits<double>::epsilon());
  const bool singular =
      diag < r || r_min == 0.0 || r_max / r_min > cond_limit;

  Vector beta;
  if (!singular) {
    beta = qr.solve(y_c);
  } else {
    const Matrix gram = centered.transpose() * centered;
    double lambda = 1e-8 * gram.trace() / static_cast<double>(r);
    if (!(lambda > 0.0)) lambda = 1e-8;
    Matrix reg = gram;
    reg.diagonal().array() += lambda;
    beta = reg.ldlt().solve(centered.transpose() * y_c);
    fit.rank_deficient = true;
    fit.ridge_used = lambda;
  }

  for (Index a = 0; a < r; ++a)
    fit.coefficients(active[static_cast<std::size_t>(a)]) = beta(a);
  fit.intercept = y_bar - col_means.dot(beta);
  return fit;
}

// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> midranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    // positions i+1 .. j share rank (i+1+j)/2
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

// Upper tail P(N(0,1) > x).
inline double normal_sf(double x) {
  return boost::math::cdf(
      boost::math::complement(boost::math::normal_distribution<double>(), x));
}

}  // namespace abvr
