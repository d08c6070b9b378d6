#pragma once

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "abvr/errors.hpp"
#include "abvr/estimators.hpp"
#include "abvr/ingest.hpp"
#include "abvr/json_io.hpp"
#include "abvr/predictors.hpp"
#include "abvr/selection.hpp"
#include "abvr/simulation.hpp"

// Command-line front end: `estimate`, `select` and `simulate`.
// Exit codes: 0 success, 2 user-input error, 1 internal error.
namespace abvr::cli {

inline constexpr const char* kToolVersion = "0.1.0";

using json::Json;

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  struct Guard {
    EVP_MD_CTX* c;
    ~Guard() { EVP_MD_CTX_free(c); }
  } guard{ctx};
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = in.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(got)) != 1)
      throw std::runtime_error("sha256 update failed");
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, md, &len) != 1) throw std::runtime_error("sha256 final failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

// Provenance block embedded in every report.
class RunManifest {
 public:
  explicit RunManifest(std::string command)
      : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void add_input(const std::string& path) { inputs_.push_back({path, sha256_file(path)}); }
  void set_config(Json c) { config_ = std::move(c); }
  void set_seeds(Json s) { seeds_ = std::move(s); }

  Json to_json() const {
    Json j;
    j["command"] = command_;
    j["config"] = config_;
    Json in = Json::array();
    for (const auto& [p, h] : inputs_) in.push_back(Json{{"path", p}, {"sha256", h}});
    j["inputs"] = std::move(in);
    j["tool_version"] = kToolVersion;
    j["seeds"] = seeds_;
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    j["duration_seconds"] = dt.count();
    return j;
  }

 private:
  std::string command_;
  Json config_ = Json::object();
  Json seeds_ = Json::array();
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::chrono::steady_clock::time_point start_;
};

inline void write_report(const Json& report, const std::string& out_path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw error("cannot write '" + out_path + "'");
  f << text;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ','))
    if (auto t = std::string(csv::trim(cur)); !t.empty()) out.push_back(t);
  return out;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(std::string("invalid JSON in '") + path + "': " + e.what(), 1);
  }
}

inline TwoSampleTest parse_test(const std::string& s) {
  if (s == "mw" || s == "mann_whitney") return TwoSampleTest::mann_whitney;
  if (s == "welch" || s == "welch_t") return TwoSampleTest::welch_t;
  throw contract_error("unknown test '" + s + "' (expected mw or welch)");
}

inline Correction parse_correction(const std::string& s) {
  if (s == "none") return Correction::none;
  if (s == "bonferroni") return Correction::bonferroni;
  if (s == "holm") return Correction::holm;
  throw contract_error("unknown correction '" + s + "' (expected none, bonferroni or holm)");
}

inline Method parse_method(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "diff") return Method::diff;
  if (s == "cuped") return Method::cuped;
  if (s == "cupac") return Method::cupac;
  if (s == "combined") return Method::combined;
  throw contract_error("unknown method '" + s + "' (expected diff, cuped, cupac, combined or all)");
}

inline std::vector<Method> parse_methods(const std::string& s) {
  if (s == "all") return {Method::diff, Method::cuped, Method::cupac, Method::combined};
  std::set<Method> uniq;
  for (const auto& part : split_list(s)) uniq.insert(parse_method(part));
  if (uniq.empty()) throw contract_error("--method is empty");
  return {uniq.begin(), uniq.end()};
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string data;
  std::string method = "all";
  std::string predictor = "gbt";
  std::string z_select = "auto";
  std::string impute = "mean";
  std::string test = "mw";
  std::string out;
  std::string dump_model;
  double alpha = 0.05;
  double level = 0.95;
  int cross_fit = 0;
  GbtHyperparams gbt{};
};

namespace detail {

inline std::vector<std::string> selected_from_file(const std::string& path) {
  const Json j = read_json_file(path);
  const Json* sel = nullptr;
  if (j.contains("selected")) sel = &j["selected"];
  else if (j.contains("result") && j["result"].contains("selected")) sel = &j["result"]["selected"];
  if (!sel || !sel->is_array()) throw contract_error("'" + path + "' has no 'selected' list");
  std::vector<std::string> out;
  for (const auto& v : *sel) {
    if (!v.is_string()) throw contract_error("'" + path + "': selected entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline Index resolve_z_name(const ExperimentDataset& ds, const std::string& name) {
  Index j = ds.z_index(name);
  if (j < 0 && name.starts_with("z_")) j = ds.z_index(name.substr(2));
  if (j < 0) throw contract_error("unknown in-experiment covariate '" + name + "'");
  return j;
}

}  // namespace detail

inline int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  RunManifest manifest("estimate");
  const auto methods = parse_methods(a.method);
  const auto has = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  if (!(a.level > 0.0 && a.level < 1.0)) throw contract_error("--level must lie in (0, 1)");
  if (a.impute != "mean" && a.impute != "zero") throw contract_error("--impute must be mean or zero");
  if (a.cross_fit < 0 || a.cross_fit == 1) throw contract_error("--cross-fit must be 0 (off) or >= 2");

  manifest.add_input(a.data);
  const ExperimentDataset raw = load_experiment_csv(a.data);
  const ExperimentDataset ds = impute_missing_pre(
      raw, a.impute == "mean" ? ImputePolicy::mean_plus_indicator : ImputePolicy::zero_plus_indicator);

  Json report;
  report["schema_version"] = json::kSchemaVersion;

  // In-experiment covariates for the combined estimator.
  std::vector<Index> z_subset;
  Json z_block = nullptr;
  if (has(Method::combined)) {
    if (ds.m() == 0) throw contract_error("no in-experiment covariates (z_* columns) in '" + a.data + "'");
    z_block = Json::object();
    z_block["mode"] = a.z_select;
    std::vector<std::string> names;
    if (a.z_select == "auto") {
      SelectionConfig cfg;
      cfg.alpha = a.alpha;
      cfg.test = parse_test(a.test);
      const auto sel = select_covariates(ds, cfg);
      names = sel.selected;
      z_block["selection_config"] = json::to_json(cfg);
      z_block["selection"] = json::to_json(sel);
    } else if (a.z_select.starts_with("file:")) {
      const std::string path = a.z_select.substr(5);
      manifest.add_input(path);
      names = detail::selected_from_file(path);
    } else {
      names = split_list(a.z_select);
    }
    for (const auto& nm : names) {
      const Index j = detail::resolve_z_name(ds, nm);
      if (std::find(z_subset.begin(), z_subset.end(), j) == z_subset.end()) z_subset.push_back(j);
    }
    if (z_subset.empty()) throw contract_error("no in-experiment covariates selected for the combined estimator");
    Json used = Json::array();
    for (Index j : z_subset) used.push_back(ds.z_names[static_cast<std::size_t>(j)]);
    z_block["used"] = std::move(used);
  }

  // Validate what the estimators will see: all of x, the chosen z columns.
  ExperimentDataset view = ds;
  view.z = Matrix(ds.z.rows(), static_cast<Index>(z_subset.size()));
  view.z_names.clear();
  for (std::size_t k = 0; k < z_subset.size(); ++k) {
    view.z.col(static_cast<Index>(k)) = ds.z.col(z_subset[k]);
    view.z_names.push_back(ds.z_names[static_cast<std::size_t>(z_subset[k])]);
  }
  const ValidationReport validation = validate_dataset(view);
  if (!validation.ok) {
    for (const auto& is : validation.issues)
      if (is.severity == Severity::error)
        err << "validation error" << (is.column.empty() ? "" : " [" + is.column + "]") << ": " << is.message << "\n";
    return 2;
  }

  std::optional<Predictor> pred;
  Json pred_block = nullptr;
  if (has(Method::cupac) || has(Method::combined)) {
    std::function<Predictor(const Matrix&, const Vector&)> fitter;
    if (a.predictor == "linear") {
      fitter = [](const Matrix& x, const Vector& y) { return fit_linear_predictor(x, y); };
    } else if (a.predictor == "gbt") {
      fitter = [h = a.gbt](const Matrix& x, const Vector& y) { return fit_gbt_predictor(x, y, h); };
    } else if (a.predictor.starts_with("external:")) {
      const std::string path = a.predictor.substr(9);
      manifest.add_input(path);
      pred = load_external_predictions(path, ds);
    } else {
      throw contract_error("unknown predictor '" + a.predictor + "' (expected linear, gbt or external:<path>)");
    }
    if (fitter) {
      if (a.cross_fit >= 2) pred = cross_fit_predictor(ds.x, ds.y, a.cross_fit, fitter);
      else pred = fitter(ds.x, ds.y);
    } else if (a.cross_fit >= 2) {
      throw contract_error("--cross-fit applies to fitted predictors only");
    }
    pred_block = Json::object();
    pred_block["spec"] = a.predictor;
    pred_block["kind"] = to_string(pred->kind());
    pred_block["cross_fit_folds"] = a.cross_fit;
    if (const auto* gb = pred->boosted()) {
      pred_block["n_trees"] = gb->trees.size();
      pred_block["final_training_mse"] = gb->training_mse.back();
      if (!a.dump_model.empty()) {
        std::ofstream f(a.dump_model, std::ios::binary);
        if (!f) throw error("cannot write '" + a.dump_model + "'");
        f << json::dump_trees(*gb).dump(2) << "\n";
      }
    }
  }

  std::map<Method, EstimateReport> est;
  for (Method m : methods) {
    switch (m) {
      case Method::diff: est[m] = estimate_diff(ds, a.level); break;
      case Method::cuped: est[m] = estimate_cuped(ds, a.level); break;
      case Method::cupac: est[m] = estimate_cupac(ds, *pred, a.level); break;
      case Method::combined: est[m] = estimate_combined(ds, *pred, z_subset, a.level); break;
    }
  }

  Json config;
  config["data"] = a.data;
  Json mlist = Json::array();
  for (Method m : methods) mlist.push_back(to_string(m));
  config["methods"] = std::move(mlist);
  config["predictor"] = a.predictor;
  config["z_select"] = a.z_select;
  config["test"] = to_string(parse_test(a.test));
  config["alpha"] = a.alpha;
  config["level"] = a.level;
  config["impute"] = a.impute;
  config["cross_fit"] = a.cross_fit;
  config["gbt"] = Json{{"n_trees", a.gbt.n_trees},
                       {"max_depth", a.gbt.max_depth},
                       {"learning_rate", a.gbt.learning_rate},
                       {"min_samples_leaf", a.gbt.min_samples_leaf},
                       {"n_split_candidates", a.gbt.n_split_candidates}};
  manifest.set_config(std::move(config));

  report["experiment_id"] = ds.experiment_id;
  report["validation"] = json::to_json(validation);
  report["imputed_columns"] = Json::array();
  for (std::size_t j = raw.x_names.size(); j < ds.x_names.size(); ++j)
    report["imputed_columns"].push_back(ds.x_names[j]);
  report["z_selection"] = std::move(z_block);
  report["predictor"] = std::move(pred_block);
  Json estimates = Json::array();
  for (const auto& [m, r] : est) estimates.push_back(json::to_json(r));
  report["estimates"] = std::move(estimates);
  report["metrics"] = nullptr;
  if (has(Method::diff) && has(Method::cupac) && has(Method::combined)) {
    try {
      report["metrics"] = json::to_json(comparison_metrics(est[Method::diff], est[Method::cupac], est[Method::combined]));
    } catch (const degenerate_input_error& e) {
      report["metrics_note"] = e.what();
    }
  }
  report["manifest"] = manifest.to_json();
  write_report(report, a.out, out);
  return 0;
}

// ------------------------------------------------------------------ select

struct SelectArgs {
  std::vector<std::string> data;
  std::string data_dir;
  std::string test = "mw";
  std::string correction = "none";
  double alpha = 0.05;
  double min_nonzero = 0.01;
  std::string out;
};

inline int cmd_select(const SelectArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest("select");
  SelectionConfig cfg;
  cfg.alpha = a.alpha;
  cfg.test = parse_test(a.test);
  cfg.correction = parse_correction(a.correction);
  cfg.min_nonzero_fraction = a.min_nonzero;
  cfg.validate();

  std::vector<std::string> files = a.data;
  if (!a.data_dir.empty()) {
    if (!std::filesystem::is_directory(a.data_dir)) throw contract_error("'" + a.data_dir + "' is not a directory");
    std::vector<std::string> found;
    for (const auto& e : std::filesystem::directory_iterator(a.data_dir))
      if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path().string());
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
  }
  if (files.empty()) throw contract_error("no experiment files given (use --data or --data-dir)");

  std::vector<ExperimentDataset> exps;
  for (const auto& f : files) {
    manifest.add_input(f);
    exps.push_back(load_experiment_csv(f));
  }
  const auto res = select_covariates(exps, cfg);

  Json config = json::to_json(cfg);
  config["files"] = files;
  manifest.set_config(std::move(config));

  Json report;
  report["schema_version"] = json::kSchemaVersion;
  report["config"] = json::to_json(cfg);
  report["result"] = json::to_json(res);
  report["selected"] = res.selected;
  report["manifest"] = manifest.to_json();
  write_report(report, a.out, out);
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config;
  std::string emit_data;
  std::string out;
};

struct SimulationPlan {
  DGPConfig dgp;
  MonteCarloOptions options;
  std::optional<std::size_t> emit_n;
};

namespace detail {

// Field-level config reader: every failure names the offending key.
class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw contract_error(where_ + (key.empty() ? "" : "." + key) + ": " + msg);
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  double number(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<std::int64_t>();
  }

  std::string string(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  const Json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(key, "required field missing");
    return j_.at(key);
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(k, "unknown field");
  }

  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline SimulationPlan parse_simulation_config(const Json& root) {
  SimulationPlan plan;
  detail::ConfigReader top(root, "config");
  detail::ConfigReader g(top.at("dgp"), "config.dgp");
  auto& dgp = plan.dgp;
  if (g.has("beta_g")) dgp.beta_g = g.numbers("beta_g");
  if (g.has("beta_h")) dgp.beta_h = g.numbers("beta_h");
  dgp.d = g.has("d") ? g.integer("d") : static_cast<Index>(dgp.beta_g.size());
  dgp.m = g.has("m") ? g.integer("m") : static_cast<Index>(dgp.beta_h.size());
  if (g.has("h_kind")) {
    const auto h = g.string("h_kind");
    if (h == "linear") dgp.h_kind = HKind::linear;
    else if (h == "cubic") dgp.h_kind = HKind::cubic;
    else g.fail("h_kind", "expected linear or cubic");
  }
  if (g.has("tau")) dgp.tau = g.number("tau");
  if (g.has("p")) dgp.p = g.number("p");
  if (g.has("sigma_eps")) dgp.sigma_eps = g.number("sigma_eps");
  if (g.has("rho")) dgp.rho = g.number("rho");
  if (g.has("seed")) {
    const auto s = g.integer("seed");
    if (s < 0) g.fail("seed", "must be >= 0");
    dgp.seed = static_cast<std::uint64_t>(s);
  }
  g.reject_unknown();
  try {
    dgp.validate();
  } catch (const contract_error& e) {
    throw contract_error("config.dgp: " + std::string(e.what()));
  }

  auto& opt = plan.options;
  if (top.has("n_grid")) {
    opt.n_grid.clear();
    const auto& a = top.at("n_grid");
    if (!a.is_array()) top.fail("n_grid", "expected an array of integers");
    for (const auto& e : a) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 4) top.fail("n_grid", "every n must be an integer ≥ 4");
      opt.n_grid.push_back(e.get<std::size_t>());
    }
    if (opt.n_grid.empty()) top.fail("n_grid", "must not be empty");
  }
  if (top.has("replications")) {
    const auto m = top.integer("replications");
    if (m < 1) top.fail("replications", "replications must be ≥ 1");
    opt.replications = static_cast<std::size_t>(m);
  }
  if (top.has("estimators")) {
    const auto& a = top.at("estimators");
    if (!a.is_array()) top.fail("estimators", "expected an array of method names");
    opt.estimators.clear();
    for (const auto& e : a) {
      if (!e.is_string()) top.fail("estimators", "expected an array of method names");
      try {
        opt.estimators.insert(parse_method(e.get<std::string>()));
      } catch (const contract_error& ex) {
        top.fail("estimators", ex.what());
      }
    }
    if (opt.estimators.empty()) top.fail("estimators", "must not be empty");
  }
  if (top.has("predictor_mode")) {
    const auto s = top.string("predictor_mode");
    if (s == "oracle_f") opt.predictor_mode = PredictorMode::oracle_f;
    else if (s == "fit_linear") opt.predictor_mode = PredictorMode::fit_linear;
    else if (s == "fit_gbt") opt.predictor_mode = PredictorMode::fit_gbt;
    else top.fail("predictor_mode", "expected oracle_f, fit_linear or fit_gbt");
  }
  if (top.has("level")) {
    opt.level = top.number("level");
    if (!(opt.level > 0.0 && opt.level < 1.0)) top.fail("level", "must lie in (0, 1)");
  }
  if (top.has("selection_panel")) {
    const auto& v = top.at("selection_panel");
    if (!v.is_boolean()) top.fail("selection_panel", "expected true or false");
    if (v.get<bool>()) opt.selection_panel = SelectionConfig{};
  }
  if (top.has("emit_n")) {
    const auto n = top.integer("emit_n");
    if (n < 4) top.fail("emit_n", "must be ≥ 4");
    plan.emit_n = static_cast<std::size_t>(n);
  }
  top.reject_unknown();
  return plan;
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest("simulate");
  manifest.add_input(a.config);
  const SimulationPlan plan = parse_simulation_config(read_json_file(a.config));

  const MCReport mc = run_monte_carlo(plan.dgp, plan.options);

  Json config;
  config["dgp"] = json::to_json(plan.dgp);
  config["n_grid"] = plan.options.n_grid;
  config["replications"] = plan.options.replications;
  Json est = Json::array();
  for (Method m : plan.options.estimators) est.push_back(to_string(m));
  config["estimators"] = std::move(est);
  config["predictor_mode"] = to_string(plan.options.predictor_mode);
  config["level"] = plan.options.level;
  config["selection_panel"] = plan.options.selection_panel.has_value();
  config["emit_n"] = plan.emit_n ? Json(*plan.emit_n) : Json(nullptr);
  manifest.set_config(std::move(config));
  manifest.set_seeds(Json{{"base", plan.dgp.seed}, {"count", plan.options.replications}});

  Json report;
  report["schema_version"] = json::kSchemaVersion;
  report["report"] = json::to_json(mc);
  report["emitted_data"] = nullptr;
  if (!a.emit_data.empty()) {
    const std::size_t n = plan.emit_n.value_or(plan.options.n_grid.front());
    ExperimentDataset ds = generate_additive(plan.dgp, n);
    ds.unit_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) ds.unit_ids.push_back("u" + std::to_string(i + 1));
    save_experiment_csv(a.emit_data, ds);
    report["emitted_data"] = Json{{"path", a.emit_data}, {"n", n}, {"seed", plan.dgp.seed}};
  }
  report["manifest"] = manifest.to_json();
  write_report(report, a.out, out);
  return 0;
}

// -------------------------------------------------------------------- main

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Average treatment effect estimation with pre- and in-experiment variance reduction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate the ATE with DIFF, CUPED, CUPAC and the combined estimator");
  est->add_option("--data", ea.data, "Experiment CSV (w, y, x_*, z_*)")->required();
  est->add_option("--method", ea.method, "diff|cuped|cupac|combined|all, or a comma list")->capture_default_str();
  est->add_option("--predictor", ea.predictor, "linear|gbt|external:<path>")->capture_default_str();
  est->add_option("--z-select", ea.z_select, "Comma list of z names, auto, or file:<selection.json>")
      ->capture_default_str();
  est->add_option("--alpha", ea.alpha, "Significance level for --z-select auto")->capture_default_str();
  est->add_option("--test", ea.test, "Two-sample test for --z-select auto: mw|welch")->capture_default_str();
  est->add_option("--level", ea.level, "Confidence level")->capture_default_str();
  est->add_option("--impute", ea.impute, "Missing pre-experiment policy: mean|zero")->capture_default_str();
  est->add_option("--cross-fit", ea.cross_fit, "K-fold cross-fitting of the predictor (0 = off)")
      ->capture_default_str();
  est->add_option("--gbt-trees", ea.gbt.n_trees)->capture_default_str();
  est->add_option("--gbt-depth", ea.gbt.max_depth)->capture_default_str();
  est->add_option("--gbt-learning-rate", ea.gbt.learning_rate)->capture_default_str();
  est->add_option("--gbt-min-leaf", ea.gbt.min_samples_leaf)->capture_default_str();
  est->add_option("--gbt-candidates", ea.gbt.n_split_candidates)->capture_default_str();
  est->add_option("--dump-model", ea.dump_model, "Write the boosted-tree model as JSON");
  est->add_option("--out", ea.out, "Report path (default: stdout)");

  SelectArgs sa;
  auto* sel = app.add_subcommand("select", "Select in-experiment covariates with equal arm means");
  sel->add_option("--data", sa.data, "Experiment CSV, repeatable");
  sel->add_option("--data-dir", sa.data_dir, "Directory of experiment CSVs");
  sel->add_option("--test", sa.test, "mw|welch")->capture_default_str();
  sel->add_option("--alpha", sa.alpha)->capture_default_str();
  sel->add_option("--correction", sa.correction, "none|bonferroni|holm")->capture_default_str();
  sel->add_option("--min-nonzero", sa.min_nonzero, "Minimum non-zero fraction in every experiment")
      ->capture_default_str();
  sel->add_option("--out", sa.out, "Report path (default: stdout)");

  SimulateArgs ma;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on the additive model");
  sim->add_option("--config", ma.config, "JSON config")->required();
  sim->add_option("--emit-data", ma.emit_data, "Also write one generated dataset as CSV");
  sim->add_option("--out", ma.out, "Report path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (est->parsed()) return cmd_estimate(ea, out, err);
    if (sel->parsed()) return cmd_select(sa, out, err);
    if (sim->parsed()) return cmd_simulate(ma, out, err);
  } catch (const abvr::error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  err << "internal error: no subcommand dispatched\n";
  return 1;
}

}  // namespace abvr::cli
