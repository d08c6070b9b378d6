#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"
#include "abvr/stats.hpp"

namespace abvr {

enum class TwoSampleTest { welch_t, mann_whitney };
enum class Correction { none, bonferroni, holm };

inline const char* to_string(TwoSampleTest t) {
  return t == TwoSampleTest::welch_t ? "welch_t" : "mann_whitney";
}

inline const char* to_string(Correction c) {
  switch (c) {
    case Correction::none: return "none";
    case Correction::bonferroni: return "bonferroni";
    case Correction::holm: return "holm";
  }
  return "?";
}

// Combined sample size at or below which Mann-Whitney uses exact enumeration.
inline constexpr std::size_t kMannWhitneyExactMaxTotal = 16;

struct SelectionConfig {
  double alpha = 0.05;
  TwoSampleTest test = TwoSampleTest::mann_whitney;
  Correction correction = Correction::none;
  double min_nonzero_fraction = 0.01;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw contract_error("alpha must lie in (0, 1)");
    if (!(min_nonzero_fraction >= 0.0 && min_nonzero_fraction <= 1.0))
      throw contract_error("min_nonzero_fraction must lie in [0, 1]");
  }
};

struct ExperimentPValues {
  std::string experiment_id;
  std::map<std::string, double> pvalues;
};

struct SelectionResult {
  // Sorted by experiment id.
  std::vector<ExperimentPValues> per_experiment_pvalues;
  std::map<std::string, double> combined_pvalues;
  std::map<std::string, double> adjusted_pvalues;
  // All three lists are sorted by covariate name.
  std::vector<std::string> selected;
  std::vector<std::string> rejected;
  std::vector<std::string> filtered_out;
};

// Two-sided Welch t test with Welch-Satterthwaite degrees of freedom.
inline double welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw degenerate_input_error("Welch test needs at least 2 values per sample");
  const double ma = mean(a), mb = mean(b);
  const double qa = sample_variance(a) / static_cast<double>(a.size());
  const double qb = sample_variance(b) / static_cast<double>(b.size());
  const double se2 = qa + qb;
  if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 /
                    (qa * qa / static_cast<double>(a.size() - 1) +
                     qb * qb / static_cast<double>(b.size() - 1));
  const boost::math::students_t_distribution<double> dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return std::clamp(p, 0.0, 1.0);
}

namespace detail {

struct RankSumSetup {
  std::vector<double> ranks;  // pooled midranks, a first then b
  double u = 0.0;             // U statistic of sample a
  double mu = 0.0;
  double tie_term = 0.0;      // sum over tie groups of t^3 - t
};

inline RankSumSetup rank_sum_setup(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw degenerate_input_error("Mann-Whitney needs non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  RankSumSetup s;
  s.ranks = midranks(pooled);
  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += s.ranks[i];
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  s.u = r1 - na * (na + 1.0) / 2.0;
  s.mu = na * nb / 2.0;
  std::sort(pooled.begin(), pooled.end());
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i + 1;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    s.tie_term += t * t * t - t;
    i = j;
  }
  return s;
}

}  // namespace detail

// Exact two-sided p of the Mann-Whitney U test, conditional on the observed
// tie pattern: the share of all C(N, na) assignments of the pooled midranks
// to sample a whose U is at least as far from na*nb/2 as the observed U.
inline double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
  const auto s = detail::rank_sum_setup(a, b);
  const std::size_t total = a.size() + b.size();
  if (total > 24) throw contract_error("exact Mann-Whitney enumeration limited to 24 values");
  const double na = static_cast<double>(a.size());
  const double offset = na * (na + 1.0) / 2.0;
  const double obs = std::abs(s.u - s.mu);
  const double tol = 1e-9 * std::max(1.0, s.mu);
  std::uint64_t extreme = 0, all = 0;
  const std::uint32_t limit = 1u << total;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != a.size()) continue;
    double r = 0.0;
    for (std::size_t i = 0; i < total; ++i)
      if (mask >> i & 1u) r += s.ranks[i];
    ++all;
    if (std::abs(r - offset - s.mu) >= obs - tol) ++extreme;
  }
  return std::clamp(static_cast<double>(extreme) / static_cast<double>(all), 0.0, 1.0);
}

// Normal approximation with tie-corrected variance and continuity
// correction. Zero variance (every value tied) yields p = 1.
inline double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b) {
  const auto s = detail::rank_sum_setup(a, b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  const double var = na * nb / 12.0 * ((n + 1.0) - s.tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(s.u - s.mu) - 0.5) / std::sqrt(var);
  return std::clamp(2.0 * normal_sf(z), 0.0, 1.0);
}

inline double mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw degenerate_input_error("Mann-Whitney needs non-empty samples");
  return a.size() + b.size() <= kMannWhitneyExactMaxTotal ? mann_whitney_exact_p(a, b)
                                                          : mann_whitney_normal_p(a, b);
}

// Fisher's method: T = -2 sum ln p against chi-square with 2k degrees of
// freedom. Zero p-values are clamped to 1e-300.
inline double fisher_combine(std::span<const double> pvals) {
  if (pvals.empty()) throw contract_error("Fisher combination of zero p-values");
  double t = 0.0;
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) throw domain_error("p-value outside [0, 1]");
    t += -2.0 * std::log(std::max(p, 1e-300));
  }
  if (t == 0.0) return 1.0;
  // Chi-square(2k) survival at t equals the regularized upper gamma Q(k, t/2).
  const double q = boost::math::gamma_q(static_cast<double>(pvals.size()), t / 2.0);
  return std::clamp(q, 0.0, 1.0);
}

inline std::map<std::string, double> adjust_pvalues(const std::map<std::string, double>& pvals,
                                                    Correction method) {
  for (const auto& [k, p] : pvals)
    if (!(p >= 0.0 && p <= 1.0)) throw domain_error("p-value for '" + k + "' outside [0, 1]");
  if (method == Correction::none) return pvals;
  const double m = static_cast<double>(pvals.size());
  std::map<std::string, double> out;
  if (method == Correction::bonferroni) {
    for (const auto& [k, p] : pvals) out[k] = std::min(1.0, m * p);
    return out;
  }
  // Holm step-down: ascending p, factor m - i, running maximum.
  std::vector<std::pair<std::string, double>> sorted(pvals.begin(), pvals.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& l, const auto& r) { return l.second < r.second; });
  double running = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double adj = std::min(1.0, (m - static_cast<double>(i)) * sorted[i].second);
    running = std::max(running, adj);
    out[sorted[i].first] = running;
  }
  return out;
}

inline double run_two_sample_test(TwoSampleTest test, std::span<const double> a,
                                  std::span<const double> b) {
  return test == TwoSampleTest::welch_t ? welch_t_test(a, b) : mann_whitney_u(a, b);
}

// Screens in-experiment covariates for equal arm means, pooling evidence
// across experiments. A covariate is selected when its corrected combined
// p-value exceeds alpha.
inline SelectionResult select_covariates(std::span<const ExperimentDataset> experiments,
                                         const SelectionConfig& cfg = {}) {
  cfg.validate();
  if (experiments.empty()) throw contract_error("covariate selection needs at least one experiment");
  std::vector<std::string> names = experiments.front().z_names;
  std::sort(names.begin(), names.end());
  for (const auto& ds : experiments) {
    ds.check_shape();
    auto other = ds.z_names;
    std::sort(other.begin(), other.end());
    if (other != names)
      throw schema_error("experiment '" + ds.experiment_id +
                         "' has a different set of in-experiment covariates than '" +
                         experiments.front().experiment_id + "'");
  }
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw schema_error("duplicate in-experiment covariate names");

  std::vector<std::size_t> order(experiments.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return experiments[l].experiment_id < experiments[r].experiment_id;
  });

  SelectionResult res;
  std::vector<std::string> tested;
  for (const auto& name : names) {
    bool keep = true;
    for (const auto& ds : experiments) {
      const Index j = ds.z_index(name);
      const auto nz = (ds.z.col(j).array() != 0.0).count();
      const double frac = ds.n() ? static_cast<double>(nz) / static_cast<double>(ds.n()) : 0.0;
      if (frac < cfg.min_nonzero_fraction || nz == 0) {
        keep = false;
        break;
      }
    }
    (keep ? tested : res.filtered_out).push_back(name);
  }

  res.per_experiment_pvalues.resize(experiments.size());
  std::vector<double> treated, control;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& ds = experiments[order[k]];
    auto& row = res.per_experiment_pvalues[k];
    row.experiment_id = ds.experiment_id;
    for (const auto& name : tested) {
      ds.split_by_arm(ds.z.col(ds.z_index(name)), treated, control);
      row.pvalues[name] = run_two_sample_test(cfg.test, treated, control);
    }
  }

  std::vector<double> ps(experiments.size());
  for (const auto& name : tested) {
    for (std::size_t k = 0; k < order.size(); ++k) ps[k] = res.per_experiment_pvalues[k].pvalues.at(name);
    res.combined_pvalues[name] = fisher_combine(ps);
  }
  res.adjusted_pvalues = adjust_pvalues(res.combined_pvalues, cfg.correction);
  for (const auto& name : tested)
    (res.adjusted_pvalues.at(name) > cfg.alpha ? res.selected : res.rejected).push_back(name);
  return res;
}

inline SelectionResult select_covariates(const ExperimentDataset& ds, const SelectionConfig& cfg = {}) {
  return select_covariates(std::span<const ExperimentDataset>(&ds, 1), cfg);
}

}  // namespace abvr
