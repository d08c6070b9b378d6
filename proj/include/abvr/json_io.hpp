#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "abvr/estimators.hpp"
#include "abvr/ingest.hpp"
#include "abvr/predictors.hpp"
#include "abvr/selection.hpp"
#include "abvr/simulation.hpp"

// JSON views of the report types. Key order is fixed by insertion.
namespace abvr::json {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";

inline Json vec(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <class T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json opt(const std::optional<Vector>& v) { return v ? vec(*v) : Json(nullptr); }

inline Json to_json(const EstimateReport& r) {
  Json j;
  j["method"] = to_string(r.method);
  j["tau_hat"] = r.tau_hat;
  j["sigma2_hat"] = r.sigma2_hat;
  j["se"] = r.se;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["level"] = r.level;
  j["n"] = r.n;
  j["n1"] = r.n1;
  j["n0"] = r.n0;
  j["r2_model"] = opt(r.r2_model);
  j["theta_hat"] = opt(r.theta_hat);
  j["gamma_hat"] = opt(r.gamma_hat);
  j["adjustment_rank_deficient"] = r.adjustment_rank_deficient;
  j["ridge_used"] = r.ridge_used;
  return j;
}

inline Json to_json(const ComparisonMetrics& m) {
  Json j;
  j["sqrt_r2_gain"] = m.sqrt_r2_gain;
  j["vr_cupac_vs_diff"] = m.vr_cupac_vs_diff;
  j["vr_combined_vs_cupac"] = m.vr_combined_vs_cupac;
  return j;
}

inline Json to_json(const ValidationReport& v) {
  Json j;
  j["ok"] = v.ok;
  Json issues = Json::array();
  for (const auto& is : v.issues) {
    Json e;
    e["severity"] = to_string(is.severity);
    e["column"] = is.column;
    e["message"] = is.message;
    issues.push_back(std::move(e));
  }
  j["issues"] = std::move(issues);
  Json miss = Json::object();
  for (const auto& [k, f] : v.missing_fraction_per_x_column) miss[k] = f;
  j["missing_fraction_per_x_column"] = std::move(miss);
  return j;
}

inline Json to_json(const SelectionConfig& c) {
  Json j;
  j["alpha"] = c.alpha;
  j["test"] = to_string(c.test);
  j["correction"] = to_string(c.correction);
  j["min_nonzero_fraction"] = c.min_nonzero_fraction;
  return j;
}

inline Json to_json(const SelectionResult& r) {
  Json j;
  Json table = Json::array();
  for (const auto& row : r.per_experiment_pvalues) {
    Json e;
    e["experiment_id"] = row.experiment_id;
    e["pvalues"] = Json(row.pvalues);
    table.push_back(std::move(e));
  }
  j["per_experiment_pvalues"] = std::move(table);
  j["combined_pvalues"] = Json(r.combined_pvalues);
  j["adjusted_pvalues"] = Json(r.adjusted_pvalues);
  j["selected"] = r.selected;
  j["rejected"] = r.rejected;
  j["filtered_out"] = r.filtered_out;
  return j;
}

inline Json to_json(const DGPConfig& c) {
  Json j;
  j["d"] = c.d;
  j["m"] = c.m;
  j["beta_g"] = c.beta_g;
  j["beta_h"] = c.beta_h;
  j["h_kind"] = to_string(c.h_kind);
  j["tau"] = c.tau;
  j["p"] = c.p;
  j["sigma_eps"] = c.sigma_eps;
  j["rho"] = c.rho;
  j["seed"] = c.seed;
  return j;
}

inline Json to_json(const OracleVariances& o) {
  Json j;
  j["v_diff"] = o.v_diff;
  j["v_cupac"] = o.v_cupac;
  j["v_combined"] = o.v_combined;
  j["inflation"] = o.inflation;
  j["sigma2_diff"] = o.sigma2_diff;
  j["sigma2_cupac"] = o.sigma2_cupac;
  j["sigma2_combined"] = o.sigma2_combined;
  j["gamma"] = vec(o.gamma);
  j["approximate"] = o.approximate;
  return j;
}

inline Json to_json(const MCReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  j["n_grid"] = r.options.n_grid;
  j["replications"] = r.options.replications;
  Json est = Json::array();
  for (Method m : r.options.estimators) est.push_back(to_string(m));
  j["estimators"] = std::move(est);
  j["predictor_mode"] = to_string(r.options.predictor_mode);
  j["level"] = r.options.level;
  j["oracle_variances"] = to_json(r.oracle);
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json e;
    e["estimator"] = to_string(c.estimator);
    e["n"] = c.n;
    e["replications"] = c.replications;
    e["mean_tau_hat"] = c.mean_tau_hat;
    e["sd_tau_hat"] = c.sd_tau_hat;
    e["var_sqrt_n_tau"] = c.var_sqrt_n_tau;
    e["mean_sigma2_hat"] = c.mean_sigma2_hat;
    e["coverage"] = c.coverage;
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  Json ge = Json::array();
  for (const auto& g : r.gamma_error) ge.push_back(Json{{"n", g.n}, {"mean_gamma_error", g.mean_gamma_error}});
  j["gamma_error"] = std::move(ge);
  j["gamma_error_slope"] = opt(r.gamma_error_slope);
  Json pe = Json::array();
  for (const auto& p : r.predictor_error) pe.push_back(Json{{"n", p.n}, {"mean_f_rmse", p.mean_f_rmse}});
  j["predictor_error"] = std::move(pe);
  Json sel = Json::array();
  for (const auto& s : r.selection) {
    Json rates = Json::object();
    for (const auto& [k, v] : s.selection_rate) rates[k] = v;
    sel.push_back(Json{{"n", s.n}, {"selection_rate", std::move(rates)}});
  }
  j["selection"] = std::move(sel);
  return j;
}

inline constexpr const char* kTreeDumpFormat = "abvr-gbt";
inline constexpr int kTreeDumpVersion = 1;

// Versioned dump of a boosted ensemble; each node is
// [feature, threshold, left, right, value] with feature -1 for leaves.
inline Json dump_trees(const BoostedTrees& m) {
  Json j;
  j["format"] = kTreeDumpFormat;
  j["version"] = kTreeDumpVersion;
  j["base_score"] = m.base_score;
  j["learning_rate"] = m.learning_rate;
  j["n_features"] = m.n_features;
  Json trees = Json::array();
  for (const auto& t : m.trees) {
    Json nodes = Json::array();
    for (const auto& nd : t.nodes) nodes.push_back(Json::array({nd.feature, nd.threshold, nd.left, nd.right, nd.value}));
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j;
}

inline BoostedTrees load_trees(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != kTreeDumpFormat)
      throw contract_error("not a boosted-tree dump");
    if (j.at("version").get<int>() != kTreeDumpVersion)
      throw contract_error("unsupported tree dump version");
    BoostedTrees m;
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.n_features = j.at("n_features").get<Index>();
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      for (const auto& nd : t) {
        RegressionTree::Node node;
        node.feature = nd.at(0).get<int>();
        node.threshold = nd.at(1).get<double>();
        node.left = nd.at(2).get<int>();
        node.right = nd.at(3).get<int>();
        node.value = nd.at(4).get<double>();
        tree.nodes.push_back(node);
      }
      const auto count = static_cast<int>(tree.nodes.size());
      // Children always follow their parent, which also rules out cycles.
      for (int at = 0; at < count; ++at) {
        const auto& node = tree.nodes[static_cast<std::size_t>(at)];
        if (node.feature >= 0 &&
            (node.feature >= m.n_features || node.left <= at || node.left >= count ||
             node.right <= at || node.right >= count))
          throw contract_error("tree dump has an out-of-range node reference");
      }
      if (tree.nodes.empty()) throw contract_error("tree dump has an empty tree");
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw contract_error(std::string("malformed tree dump: ") + e.what());
  }
}

}  // namespace abvr::json
