#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "abvr/simulation.hpp"

namespace abvr {
namespace {

double corr(const Vector& a, const Vector& b) {
  const Vector ca = a.array() - a.mean(), cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

TEST(Generate, PureEffect) {
  DGPConfig cfg;
  cfg.sigma_eps = 0.0;
  cfg.beta_g = {0.0};
  cfg.beta_h = {0.0};
  cfg.tau = 1.75;
  const auto ds = generate_additive(cfg, 500);
  for (Index i = 0; i < 500; ++i) EXPECT_EQ(ds.y(i), 1.75 * ds.w[static_cast<std::size_t>(i)]);
  EXPECT_GT(ds.n1(), 0u);
  EXPECT_GT(ds.n0(), 0u);
}

TEST(Generate, PerfectCoupling) {
  DGPConfig cfg;
  cfg.d = 2;
  cfg.m = 2;
  cfg.beta_g = {1.0, 1.0};
  cfg.beta_h = {1.0, 1.0};
  cfg.rho = 1.0;
  const auto ds = generate_additive(cfg, 200);
  EXPECT_LT((ds.z - ds.x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Generate, LawOfLargeNumbers) {
  DGPConfig cfg;
  cfg.rho = 0.6;
  cfg.seed = 2024;
  const auto ds = generate_additive(cfg, 1'000'000);
  EXPECT_NEAR(corr(ds.x.col(0), ds.z.col(0)), 0.6, 0.01);
  EXPECT_NEAR(sample_variance(Vector(ds.z.col(0))), 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(ds.n1()) / 1e6, 0.5, 0.005);
}

TEST(Generate, Deterministic) {
  DGPConfig cfg;
  cfg.seed = 9;
  const auto a = generate_additive(cfg, 1000), b = generate_additive(cfg, 1000);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.w, b.w);
  cfg.seed = 10;
  EXPECT_NE(generate_additive(cfg, 1000).y, a.y);
}

TEST(Generate, InvalidConfigs) {
  DGPConfig cfg;
  cfg.m = 2;
  cfg.beta_h = {1.0, 1.0};
  cfg.rho = 0.3;
  EXPECT_THROW(generate_additive(cfg, 10), contract_error);
  cfg.rho = 0.0;
  EXPECT_NO_THROW(generate_additive(cfg, 10));
  cfg = {};
  cfg.p = 1.0;
  EXPECT_THROW(generate_additive(cfg, 10), contract_error);
  cfg = {};
  cfg.beta_g = {};
  EXPECT_THROW(generate_additive(cfg, 10), contract_error);
}

TEST(Oracle, LinearExample) {
  const auto o = oracle_variances(DGPConfig{});
  EXPECT_EQ(o.v_diff, 6.0);
  EXPECT_EQ(o.v_cupac, 5.0);
  EXPECT_EQ(o.v_combined, 1.0);
  EXPECT_EQ(o.v_diff - o.v_cupac, 1.0);
  EXPECT_EQ(o.v_cupac - o.v_combined, 4.0);
  EXPECT_EQ(o.inflation, 4.0);
  EXPECT_EQ(o.sigma2_combined, 4.0);
  EXPECT_FALSE(o.approximate);
  EXPECT_EQ(o.gamma(0), 2.0);
}

TEST(Oracle, FullCouplingLeavesNothingForZ) {
  DGPConfig cfg;
  cfg.rho = 1.0;
  const auto o = oracle_variances(cfg);
  EXPECT_EQ(o.v_cupac - o.v_combined, 0.0);
}

TEST(Oracle, NoInExperimentSignal) {
  DGPConfig cfg;
  cfg.beta_h = {0.0};
  cfg.rho = 0.4;
  const auto o = oracle_variances(cfg);
  EXPECT_EQ(o.v_cupac, 1.0);
  EXPECT_EQ(o.v_combined, 1.0);
  EXPECT_EQ(o.v_diff, 2.0);
}

DGPConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coef(-2.0, 2.0), unit(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 4);
  DGPConfig cfg;
  cfg.d = dim(rng);
  cfg.m = std::uniform_int_distribution<int>(0, static_cast<int>(cfg.d))(rng);
  cfg.beta_g.resize(static_cast<std::size_t>(cfg.d));
  cfg.beta_h.resize(static_cast<std::size_t>(cfg.m));
  for (auto& b : cfg.beta_g) b = coef(rng);
  for (auto& b : cfg.beta_h) b = coef(rng);
  cfg.rho = 2.0 * unit(rng) - 1.0;
  cfg.sigma_eps = 2.0 * unit(rng);
  cfg.p = 0.05 + 0.9 * unit(rng);
  return cfg;
}

TEST(Oracle, OrderingForRandomConfigs) {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 500; ++rep) {
    const auto cfg = random_config(rng);
    const auto o = oracle_variances(cfg);
    const double se2 = cfg.sigma_eps * cfg.sigma_eps;
    EXPECT_LE(o.v_combined, o.v_cupac);
    EXPECT_LE(o.v_cupac, o.v_diff + 1e-12);
    EXPECT_GE(o.v_combined, se2);
    EXPECT_NEAR(o.inflation, 1.0 / cfg.p + 1.0 / (1.0 - cfg.p), 1e-12);
  }
}

TEST(Oracle, CupacDecreasingInRho) {
  DGPConfig cfg;
  cfg.beta_h = {1.5};
  double prev = INFINITY;
  for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    cfg.rho = rho;
    const double v = oracle_variances(cfg).v_cupac;
    EXPECT_LT(v, prev) << rho;
    prev = v;
  }
}

TEST(Oracle, ReductionsIndependentOfNoise) {
  std::mt19937_64 rng(78);
  for (int rep = 0; rep < 100; ++rep) {
    auto cfg = random_config(rng);
    const auto a = oracle_variances(cfg);
    cfg.sigma_eps *= std::sqrt(2.0);
    const auto b = oracle_variances(cfg);
    EXPECT_LT(std::abs((a.v_diff - a.v_cupac) - (b.v_diff - b.v_cupac)), 1e-12);
    EXPECT_LT(std::abs((a.v_cupac - a.v_combined) - (b.v_cupac - b.v_combined)), 1e-12);
  }
}

TEST(Oracle, IntegratorMatchesLinearClosedForm) {
  DGPConfig cfg;
  cfg.d = 2;
  cfg.m = 2;
  cfg.beta_g = {1.0, -0.5};
  cfg.beta_h = {2.0, 0.7};
  cfg.rho = 0.5;
  const auto exact = oracle_variances(cfg);
  const auto mc = detail::integrate_oracle(cfg, 2'000'000, 5);
  EXPECT_TRUE(mc.approximate);
  EXPECT_NEAR(mc.v_diff, exact.v_diff, 0.01 * exact.v_diff);
  EXPECT_NEAR(mc.v_cupac, exact.v_cupac, 0.01 * exact.v_cupac);
  EXPECT_NEAR(mc.v_combined, exact.v_combined, 0.01 * exact.v_combined);
  EXPECT_LT((mc.gamma - exact.gamma).norm(), 0.01);
}

TEST(Oracle, CubicIntegratorMatchesHermiteAlgebra) {
  // He3 is orthogonal to every linear function of a Gaussian and
  // E[He3(Z) | X] = rho^3 He3(X), so gamma = 0 and
  // v_cupac = (1 - rho^6) |beta_h|^2 + sigma^2.
  DGPConfig cfg;
  cfg.h_kind = HKind::cubic;
  cfg.rho = 0.7;
  const auto o = oracle_variances(cfg);
  EXPECT_TRUE(o.approximate);
  const double r6 = std::pow(0.7, 6);
  EXPECT_NEAR(o.v_diff, 1.0 + 4.0 + 1.0, 0.02);
  EXPECT_NEAR(o.v_cupac, (1.0 - r6) * 4.0 + 1.0, 0.02);
  EXPECT_NEAR(o.v_combined, o.v_cupac, 1e-3);
  EXPECT_NEAR(o.gamma(0), 0.0, 0.01);
}

TEST(OracleF, MatchesConditionalMean) {
  DGPConfig cfg;
  cfg.rho = 0.5;
  cfg.tau = 2.0;
  Matrix x(2, 1);
  x << 1.0, -2.0;
  const Vector f = oracle_f(cfg, x);
  EXPECT_DOUBLE_EQ(f(0), 1.0 + 2.0 * 0.5 * 1.0 + 1.0);
  EXPECT_DOUBLE_EQ(f(1), -2.0 + 2.0 * 0.5 * -2.0 + 1.0);
  cfg.h_kind = HKind::cubic;
  EXPECT_DOUBLE_EQ(oracle_f(cfg, x)(0), 1.0 + 2.0 * 0.125 * detail::hermite3(1.0) + 1.0);
}

TEST(MonteCarlo, NoiselessDgp) {
  DGPConfig cfg;
  cfg.sigma_eps = 0.0;
  cfg.beta_g = {0.0};
  cfg.beta_h = {0.0};
  cfg.tau = 1.0;
  MonteCarloOptions opt;
  opt.n_grid = {200, 2000};
  opt.replications = 20;
  const auto rep = run_monte_carlo(cfg, opt);
  for (std::size_t n : opt.n_grid) {
    EXPECT_EQ(rep.cell(Method::diff, n)->mean_tau_hat, 1.0);
    EXPECT_EQ(rep.cell(Method::diff, n)->sd_tau_hat, 0.0);
    EXPECT_NEAR(rep.cell(Method::cupac, n)->mean_tau_hat, 1.0, 1e-12);
    EXPECT_NEAR(rep.cell(Method::cupac, n)->sd_tau_hat, 0.0, 1e-12);
    // Pooled linear adjustments pick up the sample correlation of W with
    // X or Z, an O(1/n) perturbation.
    for (Method m : {Method::cuped, Method::combined}) {
      const auto* c = rep.cell(m, n);
      EXPECT_LT(std::abs(c->mean_tau_hat - 1.0), 20.0 / static_cast<double>(n)) << to_string(m);
      EXPECT_LT(c->sd_tau_hat, 20.0 / static_cast<double>(n)) << to_string(m);
    }
  }
}

TEST(MonteCarlo, ReplicationSeedsAreSeedPlusIndex) {
  DGPConfig cfg;
  cfg.seed = 40;
  MonteCarloOptions opt;
  opt.n_grid = {300};
  opt.replications = 1;
  opt.estimators = {Method::diff};
  auto rep = run_monte_carlo(cfg, opt);
  EXPECT_EQ(rep.cell(Method::diff, 300)->mean_tau_hat, estimate_diff(generate_additive(cfg, 300)).tau_hat);
  opt.replications = 3;
  rep = run_monte_carlo(cfg, opt);
  double s = 0.0;
  for (std::uint64_t r = 0; r < 3; ++r) {
    auto c = cfg;
    c.seed = cfg.seed + r;
    s += estimate_diff(generate_additive(c, 300)).tau_hat;
  }
  EXPECT_NEAR(rep.cell(Method::diff, 300)->mean_tau_hat, s / 3.0, 1e-15);
}

TEST(MonteCarlo, Deterministic) {
  DGPConfig cfg;
  cfg.rho = 0.3;
  MonteCarloOptions opt;
  opt.n_grid = {500, 1000};
  opt.replications = 30;
  opt.predictor_mode = PredictorMode::fit_gbt;
  opt.gbt.n_trees = 10;
  const auto a = run_monte_carlo(cfg, opt), b = run_monte_carlo(cfg, opt);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    EXPECT_EQ(a.cells[k].mean_tau_hat, b.cells[k].mean_tau_hat);
    EXPECT_EQ(a.cells[k].var_sqrt_n_tau, b.cells[k].var_sqrt_n_tau);
    EXPECT_EQ(a.cells[k].mean_sigma2_hat, b.cells[k].mean_sigma2_hat);
    EXPECT_EQ(a.cells[k].coverage, b.cells[k].coverage);
  }
  EXPECT_FALSE(a.gamma_error_slope);
}

TEST(MonteCarlo, GammaErrorShrinksAtRootN) {
  DGPConfig cfg;
  cfg.rho = 0.5;
  MonteCarloOptions opt;
  opt.n_grid = {1000, 10'000};
  opt.replications = 100;
  opt.estimators = {Method::combined};
  const auto rep = run_monte_carlo(cfg, opt);
  ASSERT_TRUE(rep.gamma_error_slope);
  EXPECT_GE(*rep.gamma_error_slope, -0.6);
  EXPECT_LE(*rep.gamma_error_slope, -0.4);
  EXPECT_EQ(rep.gamma_error.size(), 2u);
}

TEST(MonteCarlo, CubicHGivesNoInExperimentGain) {
  // The linear projection of a standardized He3 term onto Z is zero, so the
  // target below is 0 and the check is absolute, on the scale of Var[h].
  DGPConfig cfg;
  cfg.h_kind = HKind::cubic;
  MonteCarloOptions opt;
  opt.n_grid = {100'000};
  opt.replications = 500;
  opt.estimators = {Method::cupac, Method::combined};
  const auto rep = run_monte_carlo(cfg, opt);
  const double gap = rep.cell(Method::cupac, 100'000)->mean_sigma2_hat -
                     rep.cell(Method::combined, 100'000)->mean_sigma2_hat;
  const double target = rep.oracle.inflation * rep.oracle.gamma.squaredNorm();
  EXPECT_NEAR(gap, target, 0.15 * rep.oracle.inflation * 4.0);
  EXPECT_GE(gap, 0.0);
  EXPECT_NEAR(rep.cell(Method::cupac, 100'000)->mean_sigma2_hat, rep.oracle.sigma2_cupac,
              0.05 * rep.oracle.sigma2_cupac);
}

TEST(MonteCarlo, SelectionPanel) {
  DGPConfig cfg;
  MonteCarloOptions opt;
  opt.n_grid = {2000};
  opt.replications = 40;
  opt.estimators = {Method::diff};
  opt.selection_panel = SelectionConfig{};
  const auto rep = run_monte_carlo(cfg, opt);
  ASSERT_EQ(rep.selection.size(), 1u);
  EXPECT_GE(rep.selection[0].selection_rate[0].second, 0.8);
}

TEST(MonteCarlo, FailureNamesSeed) {
  DGPConfig cfg;
  MonteCarloOptions opt;
  opt.n_grid = {4};
  opt.replications = 200;
  try {
    run_monte_carlo(cfg, opt);
    FAIL() << "expected a degenerate replication";
  } catch (const error& e) {
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos) << e.what();
  }
}

TEST(MonteCarlo, OptionBounds) {
  MonteCarloOptions opt;
  opt.replications = 0;
  EXPECT_THROW(run_monte_carlo(DGPConfig{}, opt), contract_error);
  opt = {};
  opt.n_grid = {};
  EXPECT_THROW(run_monte_carlo(DGPConfig{}, opt), contract_error);
}

}  // namespace
}  // namespace abvr
