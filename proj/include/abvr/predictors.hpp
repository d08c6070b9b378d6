#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "abvr/csv.hpp"
#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"
#include "abvr/stats.hpp"

namespace abvr {

enum class PredictorKind { linear, boosted_trees, external };

inline const char* to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::linear: return "linear";
    case PredictorKind::boosted_trees: return "boosted_trees";
    case PredictorKind::external: return "external";
  }
  return "?";
}

struct GbtHyperparams {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 20;
  int n_split_candidates = 32;

  void validate() const {
    if (n_trees < 1) throw contract_error("n_trees must be >= 1");
    if (max_depth < 1) throw contract_error("max_depth must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
      throw contract_error("learning_rate must lie in (0, 1]");
    if (min_samples_leaf < 1) throw contract_error("min_samples_leaf must be >= 1");
    if (n_split_candidates < 1) throw contract_error("n_split_candidates must be >= 1");
  }
};

// Binary regression tree stored as a flat node array; node 0 is the root.
// A row goes left when row[feature] <= threshold.
struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  template <class Row>
  double predict_row(const Row& row) const {
    std::size_t at = 0;
    while (nodes[at].feature >= 0) {
      const auto& nd = nodes[at];
      at = static_cast<std::size_t>(row(nd.feature) <= nd.threshold ? nd.left : nd.right);
    }
    return nodes[at].value;
  }
};

// Least-squares gradient boosting ensemble. Prediction is
// base_score + learning_rate * sum of tree outputs.
struct BoostedTrees {
  double base_score = 0.0;
  double learning_rate = 0.1;
  Index n_features = 0;
  std::vector<RegressionTree> trees;
  // training_mse[t] is the in-sample MSE after t trees (t = 0 is the base score).
  std::vector<double> training_mse;
};

struct ExternalPredictions {
  Vector values;
};

// Fitted outcome model f(X) shared by CUPAC and the combined estimator.
class Predictor {
 public:
  explicit Predictor(OlsFit fit) : model_(std::move(fit)) {}
  explicit Predictor(BoostedTrees trees) : model_(std::move(trees)) {}
  explicit Predictor(ExternalPredictions ext) : model_(std::move(ext)) {}

  PredictorKind kind() const noexcept {
    return static_cast<PredictorKind>(model_.index());
  }

  const OlsFit* linear() const noexcept { return std::get_if<OlsFit>(&model_); }
  const BoostedTrees* boosted() const noexcept { return std::get_if<BoostedTrees>(&model_); }
  const ExternalPredictions* external() const noexcept {
    return std::get_if<ExternalPredictions>(&model_);
  }

  Vector predict(const Matrix& x) const {
    if (const auto* lin = linear()) return lin->predict(x);
    if (const auto* gb = boosted()) {
      if (x.cols() != gb->n_features)
        throw contract_error("design has " + std::to_string(x.cols()) +
                             " columns, boosted model expects " + std::to_string(gb->n_features));
      Vector out(x.rows());
      for (Index i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (const auto& t : gb->trees) acc += t.predict_row(x.row(i));
        out(i) = gb->base_score + gb->learning_rate * acc;
      }
      return out;
    }
    const auto& ext = std::get<ExternalPredictions>(model_);
    if (x.rows() != ext.values.size())
      throw contract_error("external predictions cover " + std::to_string(ext.values.size()) +
                           " rows, got " + std::to_string(x.rows()));
    return ext.values;
  }

 private:
  // Alternative order matches PredictorKind.
  std::variant<OlsFit, BoostedTrees, ExternalPredictions> model_;
};

namespace detail {

inline void require_complete(const Matrix& x) {
  if (!x.allFinite())
    throw contract_error("pre-experiment covariates contain missing values; impute first");
}

inline void require_rows(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw contract_error("covariate rows differ from outcome length");
}

// Candidate thresholds for one feature: values at evenly spaced quantile
// positions, deduplicated, excluding the maximum (which splits nothing).
inline std::vector<double> split_candidates(const Matrix& x, Index j, int k) {
  std::vector<double> v(x.col(j).data(), x.col(j).data() + x.rows());
  std::sort(v.begin(), v.end());
  std::vector<double> uniq;
  std::unique_copy(v.begin(), v.end(), std::back_inserter(uniq));
  std::vector<double> out;
  if (uniq.size() <= static_cast<std::size_t>(k) + 1) {
    out.assign(uniq.begin(), uniq.end() - (uniq.empty() ? 0 : 1));
    return out;
  }
  const auto n = v.size();
  for (int i = 1; i <= k; ++i) {
    const auto pos = static_cast<std::size_t>(i) * n / static_cast<std::size_t>(k + 1);
    const double t = v[std::min(pos, n - 1)];
    if (t < uniq.back() && (out.empty() || t > out.back())) out.push_back(t);
  }
  return out;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& thresholds,
              const std::vector<std::vector<std::uint16_t>>& bins, const GbtHyperparams& h)
      : thresholds_(thresholds), bins_(bins), h_(h) {}

  // Fits one tree to `residual` and writes each row's leaf value to `leaf_out`.
  RegressionTree build(const Vector& residual, Vector& leaf_out) {
    RegressionTree tree;
    std::vector<std::size_t> rows(static_cast<std::size_t>(residual.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    double ss = 0.0;
    for (Index i = 0; i < residual.size(); ++i) ss += residual(i) * residual(i);
    min_gain_ = 1e-12 * std::max(ss, 1e-300);
    grow(tree, residual, rows, 0, leaf_out);
    return tree;
  }

 private:
  int grow(RegressionTree& tree, const Vector& r, std::vector<std::size_t>& rows, int depth,
           Vector& leaf_out) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    for (auto i : rows) sum += r(static_cast<Index>(i));
    const double cnt = static_cast<double>(rows.size());
    const double node_mean = rows.empty() ? 0.0 : sum / cnt;

    int best_f = -1;
    std::size_t best_k = 0;
    double best_gain = min_gain_;
    const auto min_leaf = static_cast<std::size_t>(h_.min_samples_leaf);
    if (depth < h_.max_depth && rows.size() >= 2 * min_leaf) {
      const double parent = sum * sum / cnt;
      for (std::size_t f = 0; f < thresholds_.size(); ++f) {
        const std::size_t nb = thresholds_[f].size() + 1;
        if (nb < 2) continue;
        hist_sum_.assign(nb, 0.0);
        hist_cnt_.assign(nb, 0);
        for (auto i : rows) {
          const auto b = bins_[f][i];
          hist_sum_[b] += r(static_cast<Index>(i));
          ++hist_cnt_[b];
        }
        double sl = 0.0;
        std::size_t nl = 0;
        for (std::size_t k = 0; k + 1 < nb; ++k) {
          sl += hist_sum_[k];
          nl += hist_cnt_[k];
          const std::size_t nr = rows.size() - nl;
          if (nl < min_leaf) continue;
          if (nr < min_leaf) break;
          const double sr = sum - sl;
          const double gain = sl * sl / static_cast<double>(nl) +
                              sr * sr / static_cast<double>(nr) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_f = static_cast<int>(f);
            best_k = k;
          }
        }
      }
    }

    if (best_f < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = node_mean;
      for (auto i : rows) leaf_out(static_cast<Index>(i)) = node_mean;
      return id;
    }

    std::vector<std::size_t> left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    const auto& fb = bins_[static_cast<std::size_t>(best_f)];
    for (auto i : rows) (fb[i] <= best_k ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();

    const int l = grow(tree, r, left, depth + 1, leaf_out);
    const int rr = grow(tree, r, right, depth + 1, leaf_out);
    auto& nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = best_f;
    nd.threshold = thresholds_[static_cast<std::size_t>(best_f)][best_k];
    nd.left = l;
    nd.right = rr;
    nd.value = node_mean;
    return id;
  }

  const std::vector<std::vector<double>>& thresholds_;
  const std::vector<std::vector<std::uint16_t>>& bins_;
  const GbtHyperparams& h_;
  double min_gain_ = 0.0;
  std::vector<double> hist_sum_;
  std::vector<std::size_t> hist_cnt_;
};

}  // namespace detail

inline Predictor fit_linear_predictor(const Matrix& x, const Vector& y) {
  detail::require_rows(x, y);
  detail::require_complete(x);
  return Predictor(ols_fit(x, y));
}

// Deterministic least-squares gradient boosting over quantile split
// candidates. Split gain ties resolve to the lowest feature index, then the
// lowest threshold.
inline Predictor fit_gbt_predictor(const Matrix& x, const Vector& y, const GbtHyperparams& h = {}) {
  h.validate();
  detail::require_rows(x, y);
  detail::require_complete(x);
  if (x.rows() < 2 * static_cast<Index>(h.min_samples_leaf))
    throw degenerate_input_error("boosting needs at least 2 * min_samples_leaf = " +
                                 std::to_string(2 * h.min_samples_leaf) + " rows, got " +
                                 std::to_string(x.rows()));
  if (h.n_split_candidates > 65534) throw contract_error("n_split_candidates too large");

  const Index n = x.rows();
  const Index d = x.cols();
  std::vector<std::vector<double>> thresholds(static_cast<std::size_t>(d));
  std::vector<std::vector<std::uint16_t>> bins(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) {
    auto& t = thresholds[static_cast<std::size_t>(j)];
    t = detail::split_candidates(x, j, h.n_split_candidates);
    auto& b = bins[static_cast<std::size_t>(j)];
    b.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      b[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(
          std::lower_bound(t.begin(), t.end(), x(i, j)) - t.begin());
  }

  BoostedTrees model;
  model.base_score = mean(y);
  model.learning_rate = h.learning_rate;
  model.n_features = d;
  Vector fitted = Vector::Constant(n, model.base_score);
  Vector residual = y - fitted;
  auto mse = [&] { return residual.squaredNorm() / static_cast<double>(n); };
  model.training_mse.push_back(mse());

  detail::TreeBuilder builder(thresholds, bins, h);
  Vector leaf(n);
  for (int t = 0; t < h.n_trees; ++t) {
    model.trees.push_back(builder.build(residual, leaf));
    fitted += h.learning_rate * leaf;
    residual = y - fitted;
    model.training_mse.push_back(mse());
  }
  return Predictor(std::move(model));
}

inline Predictor make_external_predictor(Vector values) {
  if (!values.allFinite()) throw domain_error("external predictions must be finite");
  return Predictor(ExternalPredictions{std::move(values)});
}

// Out-of-fold predictions: row i belongs to fold i mod `folds`, and its
// prediction comes from a model fit on the other folds.
inline Predictor cross_fit_predictor(
    const Matrix& x, const Vector& y, int folds,
    const std::function<Predictor(const Matrix&, const Vector&)>& fitter) {
  detail::require_rows(x, y);
  if (folds < 2) throw contract_error("cross-fitting needs at least 2 folds");
  const Index n = x.rows();
  if (n < folds) throw degenerate_input_error("fewer rows than folds");
  Vector out(n);
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, hold;
    for (Index i = 0; i < n; ++i) (i % folds == f ? hold : train).push_back(i);
    Matrix xt(static_cast<Index>(train.size()), x.cols());
    Vector yt(static_cast<Index>(train.size()));
    for (std::size_t a = 0; a < train.size(); ++a) {
      xt.row(static_cast<Index>(a)) = x.row(train[a]);
      yt(static_cast<Index>(a)) = y(train[a]);
    }
    Matrix xh(static_cast<Index>(hold.size()), x.cols());
    for (std::size_t a = 0; a < hold.size(); ++a) xh.row(static_cast<Index>(a)) = x.row(hold[a]);
    const Vector ph = fitter(xt, yt).predict(xh);
    for (std::size_t a = 0; a < hold.size(); ++a) out(hold[a]) = ph(static_cast<Index>(a));
  }
  return make_external_predictor(std::move(out));
}

// Reads precomputed predictions. Either a single `f_hat` column in dataset
// row order, or `unit_id,f_hat` joined on the dataset's unit ids.
inline Predictor read_external_predictions(std::istream& in, const ExperimentDataset& ds) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw parse_error("empty predictions file", 1);
  int f_col = -1, id_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = csv::trim(header[c]);
    if (name == "f_hat") f_col = static_cast<int>(c);
    if (name == "unit_id") id_col = static_cast<int>(c);
  }
  if (f_col < 0) throw parse_error("predictions file needs an 'f_hat' column", 1);

  std::vector<double> vals;
  std::vector<std::string> ids;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() != header.size())
      throw parse_error("expected " + std::to_string(header.size()) + " fields", reader.line());
    const auto v = csv::parse_real(fields[static_cast<std::size_t>(f_col)], reader.line(), "f_hat");
    if (!v) throw domain_error("line " + std::to_string(reader.line()) + ": missing f_hat");
    vals.push_back(*v);
    if (id_col >= 0) ids.emplace_back(csv::trim(fields[static_cast<std::size_t>(id_col)]));
  }

  if (vals.size() != ds.n())
    throw alignment_error("predictions file has " + std::to_string(vals.size()) +
                          " rows, dataset has " + std::to_string(ds.n()));
  Vector out(static_cast<Index>(ds.n()));
  if (id_col < 0) {
    for (std::size_t i = 0; i < vals.size(); ++i) out(static_cast<Index>(i)) = vals[i];
    return make_external_predictor(std::move(out));
  }
  if (ds.unit_ids.empty())
    throw alignment_error("predictions are keyed by unit_id but the dataset has no unit_id column");
  std::map<std::string, double> by_id;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!by_id.emplace(ids[i], vals[i]).second)
      throw alignment_error("duplicate unit_id '" + ids[i] + "' in predictions");
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto it = by_id.find(ds.unit_ids[i]);
    if (it == by_id.end())
      throw alignment_error("no prediction for unit_id '" + ds.unit_ids[i] + "'");
    out(static_cast<Index>(i)) = it->second;
  }
  return make_external_predictor(std::move(out));
}

inline Predictor load_external_predictions(const std::filesystem::path& path,
                                           const ExperimentDataset& ds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open '" + path.string() + "'");
  return read_external_predictions(in, ds);
}

// 1 - SSE/SST, SST centered at mean(y). Negative for models worse than the mean.
inline double r_squared(const Vector& y, const Vector& y_hat) {
  if (y.size() != y_hat.size()) throw contract_error("r_squared: length mismatch");
  if (y.size() < 2) throw degenerate_input_error("r_squared needs at least 2 values");
  const double mu = mean(y);
  const double sst = (y.array() - mu).square().sum();
  if (sst == 0.0) throw degenerate_input_error("r_squared undefined for constant outcome");
  const double sse = (y - y_hat).squaredNorm();
  return 1.0 - sse / sst;
}

}  // namespace abvr
