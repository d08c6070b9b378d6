#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"
#include "abvr/estimators.hpp"
#include "abvr/predictors.hpp"
#include "abvr/selection.hpp"
#include "abvr/stats.hpp"

namespace abvr {

enum class HKind { linear, cubic };
enum class PredictorMode { oracle_f, fit_linear, fit_gbt };

inline const char* to_string(HKind h) { return h == HKind::linear ? "linear" : "cubic"; }

inline const char* to_string(PredictorMode m) {
  switch (m) {
    case PredictorMode::oracle_f: return "oracle_f";
    case PredictorMode::fit_linear: return "fit_linear";
    case PredictorMode::fit_gbt: return "fit_gbt";
  }
  return "?";
}

// Additive outcome model Y = g(X) + h(Z) + tau * W + eps with standard normal
// X, Z_j = rho * X_j + sqrt(1 - rho^2) * xi_j, W ~ Bernoulli(p) independent
// of everything else, g linear, and h either linear or a sum of standardized
// third Hermite polynomials (Z^3 - 3Z) / sqrt(6).
struct DGPConfig {
  Index d = 1;
  Index m = 1;
  std::vector<double> beta_g{1.0};
  std::vector<double> beta_h{2.0};
  HKind h_kind = HKind::linear;
  double tau = 1.0;
  double p = 0.5;
  double sigma_eps = 1.0;
  double rho = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (d < 0 || m < 0) throw contract_error("d and m must be non-negative");
    if (static_cast<Index>(beta_g.size()) != d)
      throw contract_error("beta_g has " + std::to_string(beta_g.size()) + " entries, d = " + std::to_string(d));
    if (static_cast<Index>(beta_h.size()) != m)
      throw contract_error("beta_h has " + std::to_string(beta_h.size()) + " entries, m = " + std::to_string(m));
    if (!(p > 0.0 && p < 1.0)) throw contract_error("p must lie in (0, 1)");
    if (!(sigma_eps >= 0.0)) throw contract_error("sigma_eps must be >= 0");
    if (!(rho >= -1.0 && rho <= 1.0)) throw contract_error("rho must lie in [-1, 1]");
    if (rho != 0.0 && m > d) throw contract_error("m > d requires rho = 0");
    if (!std::isfinite(tau)) throw contract_error("tau must be finite");
  }
};

struct OracleVariances {
  // Residual scale, i.e. Var of the adjusted outcome.
  double v_diff = 0.0;
  double v_cupac = 0.0;
  double v_combined = 0.0;
  double inflation = 0.0;  // 1/p + 1/(1-p)
  double sigma2_diff = 0.0;
  double sigma2_cupac = 0.0;
  double sigma2_combined = 0.0;
  // Population adjustment coefficient E[Cov[Z, h(Z) | X]].
  Vector gamma;
  // True when computed by Monte Carlo integration (cubic h).
  bool approximate = false;
};

namespace detail {

inline double hermite3(double v) { return (v * v * v - 3.0 * v) / std::sqrt(6.0); }

}  // namespace detail

inline ExperimentDataset generate_additive(const DGPConfig& cfg, std::size_t n) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho));

  ExperimentDataset ds;
  ds.experiment_id = "sim-" + std::to_string(cfg.seed);
  const auto rows = static_cast<Index>(n);
  ds.w.resize(n);
  ds.y.resize(rows);
  ds.x.resize(rows, cfg.d);
  ds.z.resize(rows, cfg.m);
  for (Index j = 0; j < cfg.d; ++j) ds.x_names.push_back(std::to_string(j + 1));
  for (Index j = 0; j < cfg.m; ++j) ds.z_names.push_back(std::to_string(j + 1));

  for (Index i = 0; i < rows; ++i) {
    double y = 0.0;
    for (Index j = 0; j < cfg.d; ++j) {
      ds.x(i, j) = normal(rng);
      y += cfg.beta_g[static_cast<std::size_t>(j)] * ds.x(i, j);
    }
    for (Index j = 0; j < cfg.m; ++j) {
      const double xi = normal(rng);
      const double zij = cfg.rho == 0.0 ? xi : cfg.rho * ds.x(i, j) + s * xi;
      ds.z(i, j) = zij;
      const double b = cfg.beta_h[static_cast<std::size_t>(j)];
      y += cfg.h_kind == HKind::linear ? b * zij : b * detail::hermite3(zij);
    }
    const double eps = normal(rng);
    const bool treated = unif(rng) < cfg.p;
    ds.w[static_cast<std::size_t>(i)] = treated ? 1 : 0;
    ds.y(i) = y + cfg.tau * (treated ? 1.0 : 0.0) + cfg.sigma_eps * eps;
  }
  return ds;
}

// Best predictor of Y from X alone: g(X) + E[h(Z) | X] + tau * p.
inline Vector oracle_f(const DGPConfig& cfg, const Matrix& x) {
  cfg.validate();
  if (x.cols() != cfg.d) throw contract_error("oracle_f: design has wrong column count");
  const double rho3 = cfg.rho * cfg.rho * cfg.rho;
  Vector f(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    double v = cfg.tau * cfg.p;
    for (Index j = 0; j < cfg.d; ++j) v += cfg.beta_g[static_cast<std::size_t>(j)] * x(i, j);
    if (cfg.rho != 0.0) {
      for (Index j = 0; j < cfg.m; ++j) {
        const double b = cfg.beta_h[static_cast<std::size_t>(j)];
        // He3 is an eigenfunction of the Gaussian conditioning: E[He3(Z)|X] = rho^3 He3(X).
        v += cfg.h_kind == HKind::linear ? b * cfg.rho * x(i, j) : b * rho3 * detail::hermite3(x(i, j));
      }
    }
    f(i) = v;
  }
  return f;
}

namespace detail {

inline void finish_oracle(OracleVariances& o, double p) {
  o.inflation = 1.0 / p + 1.0 / (1.0 - p);
  o.sigma2_diff = o.inflation * o.v_diff;
  o.sigma2_cupac = o.inflation * o.v_cupac;
  o.sigma2_combined = o.inflation * o.v_combined;
}

// Monte Carlo integration of the residual-scale variances for any h.
inline OracleVariances integrate_oracle(const DGPConfig& cfg, std::size_t samples,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - cfg.rho * cfg.rho));
  const double rho3 = cfg.rho * cfg.rho * cfg.rho;
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto d = static_cast<std::size_t>(cfg.d);

  // Running means for Var[g + h], Var[u] and Cov[Z_j, u], u = h - E[h|X].
  double sum_gh = 0.0, sum_gh2 = 0.0, sum_u = 0.0, sum_u2 = 0.0;
  std::vector<double> sum_z(m, 0.0), sum_zu(m, 0.0);
  std::vector<double> x(d), z(m);
  for (std::size_t k = 0; k < samples; ++k) {
    double g = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = normal(rng);
      g += cfg.beta_g[j] * x[j];
    }
    double h = 0.0, h_cond = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double xi = normal(rng);
      z[j] = cfg.rho == 0.0 ? xi : cfg.rho * x[j] + s * xi;
      const double b = cfg.beta_h[j];
      if (cfg.h_kind == HKind::linear) {
        h += b * z[j];
        if (cfg.rho != 0.0) h_cond += b * cfg.rho * x[j];
      } else {
        h += b * hermite3(z[j]);
        if (cfg.rho != 0.0) h_cond += b * rho3 * hermite3(x[j]);
      }
    }
    const double u = h - h_cond;
    sum_gh += g + h;
    sum_gh2 += (g + h) * (g + h);
    sum_u += u;
    sum_u2 += u * u;
    for (std::size_t j = 0; j < m; ++j) {
      sum_z[j] += z[j];
      sum_zu[j] += z[j] * u;
    }
  }
  const double cnt = static_cast<double>(samples);
  const double var_gh = sum_gh2 / cnt - (sum_gh / cnt) * (sum_gh / cnt);
  const double var_u = sum_u2 / cnt - (sum_u / cnt) * (sum_u / cnt);
  OracleVariances o;
  o.gamma = Vector(cfg.m);
  double proj = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double c = sum_zu[j] / cnt - (sum_z[j] / cnt) * (sum_u / cnt);
    o.gamma(static_cast<Index>(j)) = c;
    proj += c * c;
  }
  const double se2 = cfg.sigma_eps * cfg.sigma_eps;
  o.v_diff = var_gh + se2;
  o.v_cupac = var_u + se2;
  o.v_combined = var_u - proj + se2;
  o.approximate = true;
  finish_oracle(o, cfg.p);
  return o;
}

}  // namespace detail

inline constexpr std::size_t kOracleIntegrationSamples = 10'000'000;
inline constexpr std::uint64_t kOracleIntegrationSeed = 0x5eed'0a11'c0de'0001ULL;

// Residual-scale variances of the DIFF, CUPAC (with the best f) and combined
// estimators, plus the same values on the sqrt(n) scale. Closed form for
// linear h; Monte Carlo integration with a fixed seed for cubic h.
inline OracleVariances oracle_variances(const DGPConfig& cfg,
                                        std::size_t samples = kOracleIntegrationSamples) {
  cfg.validate();
  if (cfg.h_kind == HKind::cubic) return detail::integrate_oracle(cfg, samples, kOracleIntegrationSeed);

  double bg2 = 0.0, bh2 = 0.0, shared = 0.0;
  for (double b : cfg.beta_g) bg2 += b * b;
  for (double b : cfg.beta_h) bh2 += b * b;
  for (Index j = 0; j < std::min(cfg.d, cfg.m); ++j)
    shared += cfg.beta_g[static_cast<std::size_t>(j)] * cfg.beta_h[static_cast<std::size_t>(j)];
  const double r2 = cfg.rho * cfg.rho;
  const double se2 = cfg.sigma_eps * cfg.sigma_eps;

  OracleVariances o;
  o.v_diff = bg2 + bh2 + 2.0 * cfg.rho * shared + se2;
  o.v_cupac = (1.0 - r2) * bh2 + se2;
  o.v_combined = r2 * (1.0 - r2) * bh2 + se2;
  o.gamma = Vector(cfg.m);
  for (Index j = 0; j < cfg.m; ++j) o.gamma(j) = (1.0 - r2) * cfg.beta_h[static_cast<std::size_t>(j)];
  detail::finish_oracle(o, cfg.p);
  return o;
}

struct MonteCarloOptions {
  std::vector<std::size_t> n_grid{10'000};
  std::size_t replications = 200;
  std::set<Method> estimators{Method::diff, Method::cuped, Method::cupac, Method::combined};
  PredictorMode predictor_mode = PredictorMode::oracle_f;
  double level = 0.95;
  GbtHyperparams gbt{};
  // When set, records how often each z covariate passes selection.
  std::optional<SelectionConfig> selection_panel;

  void validate() const {
    if (replications < 1) throw contract_error("replications must be ≥ 1");
    if (n_grid.empty()) throw contract_error("n_grid must not be empty");
    for (auto n : n_grid)
      if (n < 4) throw contract_error("every n in n_grid must be ≥ 4");
    if (estimators.empty()) throw contract_error("estimators must not be empty");
    if (!(level > 0.0 && level < 1.0)) throw contract_error("level must lie in (0, 1)");
    if (selection_panel) selection_panel->validate();
  }
};

struct MCCell {
  Method estimator = Method::diff;
  std::size_t n = 0;
  std::size_t replications = 0;
  double mean_tau_hat = 0.0;
  double sd_tau_hat = 0.0;
  // n * Var(tau_hat) over replications.
  double var_sqrt_n_tau = 0.0;
  double mean_sigma2_hat = 0.0;
  double coverage = 0.0;
};

struct MCGammaRow {
  std::size_t n = 0;
  double mean_gamma_error = 0.0;  // mean of ||gamma_hat - gamma||_2
};

struct MCPredictorRow {
  std::size_t n = 0;
  double mean_f_rmse = 0.0;  // mean over replications of the RMS of f_hat(X) - f(X)
};

struct MCSelectionRow {
  std::size_t n = 0;
  std::vector<std::pair<std::string, double>> selection_rate;
};

struct MCReport {
  DGPConfig config;
  MonteCarloOptions options;
  OracleVariances oracle;
  std::vector<MCCell> cells;
  std::vector<MCGammaRow> gamma_error;
  std::optional<double> gamma_error_slope;
  std::vector<MCPredictorRow> predictor_error;
  std::vector<MCSelectionRow> selection;

  const MCCell* cell(Method m, std::size_t n) const {
    for (const auto& c : cells)
      if (c.estimator == m && c.n == n) return &c;
    return nullptr;
  }
};

// Ordinary least-squares slope of ys on xs.
inline double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw degenerate_input_error("slope needs at least two distinct x values");
  return sxy / sxx;
}

// Replication r at every n uses the dataset seed cfg.seed + r.
inline MCReport run_monte_carlo(const DGPConfig& cfg, const MonteCarloOptions& opt) {
  cfg.validate();
  opt.validate();
  MCReport rep;
  rep.config = cfg;
  rep.options = opt;
  rep.oracle = oracle_variances(cfg);
  const bool want_gamma =
      opt.estimators.count(Method::combined) && opt.predictor_mode == PredictorMode::oracle_f && cfg.m > 0;

  std::vector<Index> all_z(static_cast<std::size_t>(cfg.m));
  for (Index j = 0; j < cfg.m; ++j) all_z[static_cast<std::size_t>(j)] = j;

  const std::size_t M = opt.replications;
  for (std::size_t n : opt.n_grid) {
    std::map<Method, std::vector<double>> taus, sig2;
    std::map<Method, std::size_t> covered;
    double gamma_err_sum = 0.0, f_err_sum = 0.0;
    std::vector<std::size_t> picked(static_cast<std::size_t>(cfg.m), 0);

    for (std::size_t r = 0; r < M; ++r) {
      DGPConfig c = cfg;
      c.seed = cfg.seed + r;
      try {
        const ExperimentDataset ds = generate_additive(c, n);
        const Vector f_true = oracle_f(c, ds.x);
        std::optional<Predictor> pred;
        if (opt.estimators.count(Method::cupac) || opt.estimators.count(Method::combined)) {
          switch (opt.predictor_mode) {
            case PredictorMode::oracle_f: pred = make_external_predictor(f_true); break;
            case PredictorMode::fit_linear: pred = fit_linear_predictor(ds.x, ds.y); break;
            case PredictorMode::fit_gbt: pred = fit_gbt_predictor(ds.x, ds.y, opt.gbt); break;
          }
          const Vector diff = pred->predict(ds.x) - f_true;
          f_err_sum += std::sqrt(diff.squaredNorm() / static_cast<double>(n));
        }
        for (Method m : opt.estimators) {
          EstimateReport e;
          switch (m) {
            case Method::diff: e = estimate_diff(ds, opt.level); break;
            case Method::cuped: e = estimate_cuped(ds, opt.level); break;
            case Method::cupac: e = estimate_cupac(ds, *pred, opt.level); break;
            case Method::combined: e = estimate_combined(ds, *pred, all_z, opt.level); break;
          }
          taus[m].push_back(e.tau_hat);
          sig2[m].push_back(e.sigma2_hat);
          if (e.ci_low <= cfg.tau && cfg.tau <= e.ci_high) ++covered[m];
          if (m == Method::combined && want_gamma) gamma_err_sum += (*e.gamma_hat - rep.oracle.gamma).norm();
        }
        if (opt.selection_panel) {
          const auto sel = select_covariates(ds, *opt.selection_panel);
          for (const auto& name : sel.selected) ++picked[static_cast<std::size_t>(ds.z_index(name))];
        }
      } catch (const error& e) {
        throw error("replication " + std::to_string(r) + " (seed " + std::to_string(c.seed) + ", n " +
                    std::to_string(n) + ") failed: " + e.what());
      }
    }

    const double cnt = static_cast<double>(M);
    for (Method m : opt.estimators) {
      MCCell cell;
      cell.estimator = m;
      cell.n = n;
      cell.replications = M;
      cell.mean_tau_hat = mean(taus[m]);
      const double var_tau = M >= 2 ? sample_variance(taus[m]) : 0.0;
      cell.sd_tau_hat = std::sqrt(var_tau);
      cell.var_sqrt_n_tau = static_cast<double>(n) * var_tau;
      cell.mean_sigma2_hat = mean(sig2[m]);
      cell.coverage = static_cast<double>(covered[m]) / cnt;
      rep.cells.push_back(cell);
    }
    if (want_gamma) rep.gamma_error.push_back({n, gamma_err_sum / cnt});
    if (opt.estimators.count(Method::cupac) || opt.estimators.count(Method::combined))
      rep.predictor_error.push_back({n, f_err_sum / cnt});
    if (opt.selection_panel) {
      MCSelectionRow row;
      row.n = n;
      for (Index j = 0; j < cfg.m; ++j)
        row.selection_rate.emplace_back(std::to_string(j + 1),
                                        static_cast<double>(picked[static_cast<std::size_t>(j)]) / cnt);
      rep.selection.push_back(std::move(row));
    }
  }

  if (want_gamma && rep.gamma_error.size() >= 2) {
    std::vector<double> lx, ly;
    bool positive = true;
    for (const auto& g : rep.gamma_error) {
      positive = positive && g.mean_gamma_error > 0.0;
      lx.push_back(std::log(static_cast<double>(g.n)));
      ly.push_back(std::log(g.mean_gamma_error));
    }
    std::set<std::size_t> distinct(opt.n_grid.begin(), opt.n_grid.end());
    if (positive && distinct.size() >= 2) rep.gamma_error_slope = ls_slope(lx, ly);
  }
  return rep;
}

}  // namespace abvr
