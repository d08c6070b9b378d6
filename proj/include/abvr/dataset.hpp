#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "abvr/errors.hpp"

namespace abvr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Missing pre-experiment entries are stored as quiet NaN until imputed.
inline bool is_missing(double v) noexcept { return std::isnan(v); }

// One experiment, one row per experimental unit.
//
// w is the treatment flag (1 = treatment), y the outcome, x the
// pre-experiment covariates (may hold missing markers before imputation) and
// z the in-experiment covariates (always complete). Column names are stored
// without their `x_` / `z_` prefix.
struct ExperimentDataset {
  std::string experiment_id;
  std::vector<std::uint8_t> w;
  Vector y;
  Matrix x;
  Matrix z;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  // Empty when the source had no unit_id column.
  std::vector<std::string> unit_ids;

  std::size_t n() const noexcept { return w.size(); }
  Index d() const noexcept { return x.cols(); }
  Index m() const noexcept { return z.cols(); }

  std::size_t n1() const noexcept {
    std::size_t c = 0;
    for (auto v : w) c += v;
    return c;
  }
  std::size_t n0() const noexcept { return n() - n1(); }

  bool has_missing_x() const noexcept {
    for (Index j = 0; j < x.cols(); ++j)
      for (Index i = 0; i < x.rows(); ++i)
        if (is_missing(x(i, j))) return true;
    return false;
  }

  // Throws contract_error when the shapes disagree.
  void check_shape() const {
    const auto rows = static_cast<Index>(n());
    if (y.size() != rows || x.rows() != rows || z.rows() != rows)
      throw contract_error("dataset row counts disagree");
    if (static_cast<Index>(x_names.size()) != x.cols() ||
        static_cast<Index>(z_names.size()) != z.cols())
      throw contract_error("dataset column names do not match column counts");
    if (!unit_ids.empty() && unit_ids.size() != n())
      throw contract_error("unit_id column length differs from n");
    for (auto v : w)
      if (v > 1) throw domain_error("treatment flag must be 0 or 1");
  }

  Index z_index(const std::string& name) const {
    for (std::size_t j = 0; j < z_names.size(); ++j)
      if (z_names[j] == name) return static_cast<Index>(j);
    return -1;
  }

  // Splits column v into its treatment and control values.
  template <class Vec>
  void split_by_arm(const Vec& v, std::vector<double>& treated,
                    std::vector<double>& control) const {
    treated.clear();
    control.clear();
    treated.reserve(n1());
    control.reserve(n0());
    for (std::size_t i = 0; i < n(); ++i)
      (w[i] ? treated : control).push_back(v(static_cast<Index>(i)));
  }
};

}  // namespace abvr
