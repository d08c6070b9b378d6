#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"
#include "abvr/predictors.hpp"
#include "abvr/stats.hpp"

namespace abvr {

enum class Method { diff, cuped, cupac, combined };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::diff: return "DIFF";
    case Method::cuped: return "CUPED";
    case Method::cupac: return "CUPAC";
    case Method::combined: return "COMBINED";
  }
  return "?";
}

// One ATE estimate. sigma2_hat is the asymptotic variance of
// sqrt(n) * (tau_hat - tau); the standard error is sqrt(sigma2_hat / n).
struct EstimateReport {
  Method method = Method::diff;
  double tau_hat = 0.0;
  double sigma2_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  std::size_t n = 0, n1 = 0, n0 = 0;
  std::optional<double> r2_model;
  std::optional<Vector> gamma_hat;
  std::optional<Vector> theta_hat;
  // Set when the linear adjustment step hit a degenerate design.
  bool adjustment_rank_deficient = false;
  double ridge_used = 0.0;
};

struct ComparisonMetrics {
  double sqrt_r2_gain = 0.0;
  double vr_cupac_vs_diff = 0.0;
  double vr_combined_vs_cupac = 0.0;
};

namespace detail {

inline void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw contract_error("confidence level must lie in (0, 1)");
}

inline void check_arms(const ExperimentDataset& ds) {
  ds.check_shape();
  if (ds.n1() < 2) throw degenerate_input_error("treatment arm has fewer than 2 units (n1 < 2)");
  if (ds.n0() < 2) throw degenerate_input_error("control arm has fewer than 2 units (n0 < 2)");
}

// Difference of arm means of `adjusted`, with the variance estimate
// n * (Var1 / n1 + Var0 / n0), each arm centered at its own mean.
inline EstimateReport report_from_adjusted(const ExperimentDataset& ds, const Vector& adjusted,
                                           double level, Method method) {
  std::vector<double> a1, a0;
  ds.split_by_arm(adjusted, a1, a0);
  EstimateReport r;
  r.method = method;
  r.level = level;
  r.n = ds.n();
  r.n1 = a1.size();
  r.n0 = a0.size();
  r.tau_hat = mean(a1) - mean(a0);
  const double n = static_cast<double>(r.n);
  r.sigma2_hat = n * (sample_variance(a1) / static_cast<double>(r.n1) +
                      sample_variance(a0) / static_cast<double>(r.n0));
  r.se = std::sqrt(r.sigma2_hat / n);
  const double half = normal_quantile(0.5 * (1.0 + level)) * r.se;
  r.ci_low = r.tau_hat - half;
  r.ci_high = r.tau_hat + half;
  return r;
}

inline std::optional<double> maybe_r2(const Vector& y, const Vector& y_hat) {
  if (y.size() < 2) return std::nullopt;
  const double mu = mean(y);
  if ((y.array() - mu).square().sum() == 0.0) return std::nullopt;
  return r_squared(y, y_hat);
}

}  // namespace detail

inline EstimateReport estimate_diff(const ExperimentDataset& ds, double level = 0.95) {
  detail::check_level(level);
  detail::check_arms(ds);
  return detail::report_from_adjusted(ds, ds.y, level, Method::diff);
}

// Linear adjustment of Y by the pre-experiment covariates, theta from one
// pooled regression over both arms.
inline EstimateReport estimate_cuped(const ExperimentDataset& ds, double level = 0.95) {
  detail::check_level(level);
  detail::check_arms(ds);
  detail::require_complete(ds.x);
  const OlsFit fit = ols_fit(ds.x, ds.y);
  const Vector adjusted = ds.y - ds.x * fit.coefficients;
  auto r = detail::report_from_adjusted(ds, adjusted, level, Method::cuped);
  r.theta_hat = fit.coefficients;
  r.r2_model = detail::maybe_r2(ds.y, fit.predict(ds.x));
  r.adjustment_rank_deficient = fit.rank_deficient;
  r.ridge_used = fit.ridge_used;
  return r;
}

inline EstimateReport estimate_cupac(const ExperimentDataset& ds, const Predictor& pred,
                                     double level = 0.95) {
  detail::check_level(level);
  detail::check_arms(ds);
  const Vector f_hat = pred.predict(ds.x);
  if (f_hat.size() != static_cast<Index>(ds.n()))
    throw alignment_error("predictor returned " + std::to_string(f_hat.size()) +
                          " values for " + std::to_string(ds.n()) + " rows");
  auto r = detail::report_from_adjusted(ds, ds.y - f_hat, level, Method::cupac);
  r.r2_model = detail::maybe_r2(ds.y, f_hat);
  return r;
}

// Two-step estimator: subtract the prediction f(X), then adjust the residual
// linearly by the chosen in-experiment covariates with gamma from a pooled
// regression of the residual on Z.
inline EstimateReport estimate_combined(const ExperimentDataset& ds, const Predictor& pred,
                                        const std::vector<Index>& z_subset,
                                        double level = 0.95) {
  detail::check_level(level);
  if (z_subset.empty()) throw contract_error("combined estimator needs a non-empty z subset");
  std::set<Index> uniq;
  for (Index j : z_subset) {
    if (j < 0 || j >= ds.m())
      throw contract_error("z index " + std::to_string(j) + " out of range [0, " +
                           std::to_string(ds.m()) + ")");
    if (!uniq.insert(j).second) throw contract_error("duplicate z index " + std::to_string(j));
  }
  detail::check_arms(ds);

  const Vector f_hat = pred.predict(ds.x);
  if (f_hat.size() != static_cast<Index>(ds.n()))
    throw alignment_error("predictor returned " + std::to_string(f_hat.size()) +
                          " values for " + std::to_string(ds.n()) + " rows");
  const Vector residual = ds.y - f_hat;
  Matrix zs(ds.z.rows(), static_cast<Index>(z_subset.size()));
  for (std::size_t a = 0; a < z_subset.size(); ++a) zs.col(static_cast<Index>(a)) = ds.z.col(z_subset[a]);

  const OlsFit fit = ols_fit(zs, residual);
  const Vector lin = zs * fit.coefficients;
  auto r = detail::report_from_adjusted(ds, residual - lin, level, Method::combined);
  r.gamma_hat = fit.coefficients;
  Vector full = f_hat + lin;
  full.array() += fit.intercept;
  r.r2_model = detail::maybe_r2(ds.y, full);
  r.adjustment_rank_deficient = fit.rank_deficient;
  r.ridge_used = fit.ridge_used;
  return r;
}

inline ComparisonMetrics comparison_metrics(const EstimateReport& diff, const EstimateReport& cupac,
                                            const EstimateReport& combined) {
  if (!cupac.r2_model || !combined.r2_model)
    throw degenerate_input_error("comparison metrics need R^2 for CUPAC and the combined model");
  if (!(diff.sigma2_hat > 0.0))
    throw degenerate_input_error("DIFF variance is zero; variance-reduction ratio undefined");
  if (!(cupac.sigma2_hat > 0.0))
    throw degenerate_input_error("CUPAC variance is zero; variance-reduction ratio undefined");
  ComparisonMetrics m;
  m.sqrt_r2_gain = std::sqrt(std::max(0.0, *combined.r2_model)) -
                   std::sqrt(std::max(0.0, *cupac.r2_model));
  m.vr_cupac_vs_diff = 1.0 - cupac.sigma2_hat / diff.sigma2_hat;
  m.vr_combined_vs_cupac = 1.0 - combined.sigma2_hat / cupac.sigma2_hat;
  return m;
}

}  // namespace abvr
