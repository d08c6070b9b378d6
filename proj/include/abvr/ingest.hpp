#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "abvr/csv.hpp"
#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"

namespace abvr {

// Column-naming convention for experiment CSV files.
struct CsvSchema {
  std::string treatment = "w";
  std::string outcome = "y";
  std::string unit_id = "unit_id";
  std::string x_prefix = "x_";
  std::string z_prefix = "z_";
};

enum class Severity { warning, error };

inline const char* to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

struct ValidationIssue {
  Severity severity;
  std::string column;
  std::string message;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;
  // In x column order.
  std::vector<std::pair<std::string, double>> missing_fraction_per_x_column;
};

enum class ImputePolicy { mean_plus_indicator, zero_plus_indicator };

// Parses an experiment from CSV text. Columns other than the treatment,
// outcome, unit id and prefixed covariates are ignored.
inline ExperimentDataset read_experiment_csv(std::istream& in,
                                             const CsvSchema& schema = {},
                                             std::string experiment_id = {}) {
  csv::Reader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw parse_error("empty file, header row required", 1);

  enum class Role { ignored, treatment, outcome, unit_id, x, z };
  std::vector<Role> roles(header.size(), Role::ignored);
  std::vector<Index> slot(header.size(), -1);
  ExperimentDataset ds;
  ds.experiment_id = std::move(experiment_id);
  std::set<std::string> seen;
  int w_col = -1, y_col = -1, id_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name(csv::trim(header[c]));
    if (!seen.insert(name).second)
      throw parse_error("duplicate column '" + name + "'", reader.line());
    if (name == schema.treatment) {
      roles[c] = Role::treatment;
      w_col = static_cast<int>(c);
    } else if (name == schema.outcome) {
      roles[c] = Role::outcome;
      y_col = static_cast<int>(c);
    } else if (name == schema.unit_id) {
      roles[c] = Role::unit_id;
      id_col = static_cast<int>(c);
    } else if (name.starts_with(schema.x_prefix) && name.size() > schema.x_prefix.size()) {
      roles[c] = Role::x;
      slot[c] = static_cast<Index>(ds.x_names.size());
      ds.x_names.push_back(name.substr(schema.x_prefix.size()));
    } else if (name.starts_with(schema.z_prefix) && name.size() > schema.z_prefix.size()) {
      roles[c] = Role::z;
      slot[c] = static_cast<Index>(ds.z_names.size());
      ds.z_names.push_back(name.substr(schema.z_prefix.size()));
    }
  }
  if (w_col < 0) throw parse_error("missing required column '" + schema.treatment + "'", 1);
  if (y_col < 0) throw parse_error("missing required column '" + schema.outcome + "'", 1);

  const auto d = static_cast<Index>(ds.x_names.size());
  const auto m = static_cast<Index>(ds.z_names.size());
  std::vector<double> ys, xs, zs;
  std::vector<std::string> fields;
  std::size_t row = 0;
  while (reader.next(fields)) {
    const std::size_t line = reader.line();
    if (fields.size() != header.size())
      throw parse_error("expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        line);
    ++row;
    const std::size_t x_base = xs.size(), z_base = zs.size();
    xs.resize(x_base + static_cast<std::size_t>(d));
    zs.resize(z_base + static_cast<std::size_t>(m));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      switch (roles[c]) {
        case Role::ignored:
          break;
        case Role::unit_id:
          ds.unit_ids.emplace_back(csv::trim(fields[c]));
          break;
        case Role::treatment: {
          const auto v = csv::parse_real(fields[c], line, header[c]);
          if (!v)
            throw domain_error("row " + std::to_string(row) + " (line " + std::to_string(line) +
                               "): missing treatment flag");
          if (*v != 0.0 && *v != 1.0)
            throw domain_error("row " + std::to_string(row) + " (line " + std::to_string(line) +
                               "): treatment flag must be 0 or 1, got " + csv::format_real(*v));
          ds.w.push_back(*v == 1.0 ? 1 : 0);
          break;
        }
        case Role::outcome: {
          const auto v = csv::parse_real(fields[c], line, header[c]);
          if (!v)
            throw domain_error("row " + std::to_string(row) + " (line " + std::to_string(line) +
                               "): missing outcome");
          ys.push_back(*v);
          break;
        }
        case Role::x: {
          const auto v = csv::parse_real(fields[c], line, header[c]);
          xs[x_base + static_cast<std::size_t>(slot[c])] =
              v ? *v : std::numeric_limits<double>::quiet_NaN();
          break;
        }
        case Role::z: {
          const auto v = csv::parse_real(fields[c], line, header[c]);
          if (!v)
            throw domain_error("row " + std::to_string(row) + " (line " + std::to_string(line) +
                               "): missing in-experiment covariate '" + header[c] + "'");
          zs[z_base + static_cast<std::size_t>(slot[c])] = *v;
          break;
        }
      }
    }
  }

  const auto n = static_cast<Index>(row);
  ds.y = Eigen::Map<const Vector>(ys.data(), n);
  // Row-major staging buffers.
  ds.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, d);
  ds.z = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      zs.data(), n, m);
  if (id_col < 0) ds.unit_ids.clear();
  return ds;
}

inline ExperimentDataset load_experiment_csv(const std::filesystem::path& path,
                                             const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open '" + path.string() + "'");
  return read_experiment_csv(in, schema, path.stem().string());
}

inline void write_experiment_csv(std::ostream& os, const ExperimentDataset& ds,
                                 const CsvSchema& schema = {}) {
  ds.check_shape();
  const bool ids = !ds.unit_ids.empty();
  bool first = true;
  auto sep = [&] {
    if (!first) os << ',';
    first = false;
  };
  if (ids) {
    sep();
    csv::write_field(os, schema.unit_id);
  }
  sep();
  csv::write_field(os, schema.treatment);
  sep();
  csv::write_field(os, schema.outcome);
  for (const auto& nm : ds.x_names) {
    sep();
    csv::write_field(os, schema.x_prefix + nm);
  }
  for (const auto& nm : ds.z_names) {
    sep();
    csv::write_field(os, schema.z_prefix + nm);
  }
  os << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto r = static_cast<Index>(i);
    if (ids) {
      csv::write_field(os, ds.unit_ids[i]);
      os << ',';
    }
    os << static_cast<int>(ds.w[i]) << ',' << csv::format_real(ds.y(r));
    for (Index j = 0; j < ds.d(); ++j) {
      os << ',';
      if (!is_missing(ds.x(r, j))) os << csv::format_real(ds.x(r, j));
    }
    for (Index j = 0; j < ds.m(); ++j) os << ',' << csv::format_real(ds.z(r, j));
    os << '\n';
  }
}

inline void save_experiment_csv(const std::filesystem::path& path, const ExperimentDataset& ds,
                                const CsvSchema& schema = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write '" + path.string() + "'");
  write_experiment_csv(out, ds, schema);
}

// Diagnoses problems that would make the estimators or the selection step
// ill-defined. Never throws.
inline ValidationReport validate_dataset(const ExperimentDataset& ds) {
  ValidationReport rep;
  auto add = [&](Severity s, std::string col, std::string msg) {
    if (s == Severity::error) rep.ok = false;
    rep.issues.push_back({s, std::move(col), std::move(msg)});
  };

  try {
    ds.check_shape();
  } catch (const std::exception& e) {
    add(Severity::error, "", e.what());
    return rep;
  }

  const std::size_t n1 = ds.n1(), n0 = ds.n0();
  if (n1 < 2) add(Severity::error, "w", "n1 < 2");
  if (n0 < 2) add(Severity::error, "w", "n0 < 2");

  const auto rows = static_cast<Index>(ds.n());
  for (Index j = 0; j < ds.m(); ++j) {
    const auto& name = ds.z_names[static_cast<std::size_t>(j)];
    if (rows == 0) break;
    bool constant = true;
    for (Index i = 1; i < rows && constant; ++i) constant = ds.z(i, j) == ds.z(0, j);
    if (constant) {
      add(Severity::error, name,
          "zero-variance in-experiment covariate; its adjustment coefficient is undefined");
      continue;
    }
    for (int arm = 0; arm <= 1; ++arm) {
      bool any = false, arm_constant = true;
      double first = 0.0;
      for (Index i = 0; i < rows; ++i) {
        if (ds.w[static_cast<std::size_t>(i)] != arm) continue;
        if (!any) {
          first = ds.z(i, j);
          any = true;
        } else if (ds.z(i, j) != first) {
          arm_constant = false;
          break;
        }
      }
      if (any && arm_constant)
        add(Severity::warning, name,
            std::string("constant within the ") + (arm ? "treatment" : "control") + " arm");
    }
  }

  bool any_missing = false;
  for (Index j = 0; j < ds.d(); ++j) {
    std::size_t miss = 0;
    for (Index i = 0; i < rows; ++i) miss += is_missing(ds.x(i, j)) ? 1 : 0;
    const double frac = rows ? static_cast<double>(miss) / static_cast<double>(rows) : 0.0;
    rep.missing_fraction_per_x_column.emplace_back(ds.x_names[static_cast<std::size_t>(j)], frac);
    any_missing = any_missing || miss > 0;
  }
  if (any_missing)
    add(Severity::warning, "", "pre-experiment covariates have missing entries; impute before estimating");
  return rep;
}

// Replaces every x column that has missing entries by its imputed version
// and appends a 0/1 missingness indicator `<name>__miss`. The fill value is
// the pooled mean over observed entries (0 if none are observed) or 0.
inline ExperimentDataset impute_missing_pre(const ExperimentDataset& ds, ImputePolicy policy) {
  ExperimentDataset out = ds;
  const auto rows = out.x.rows();
  std::vector<Index> affected;
  for (Index j = 0; j < out.d(); ++j) {
    bool miss = false;
    for (Index i = 0; i < rows && !miss; ++i) miss = is_missing(out.x(i, j));
    if (miss) affected.push_back(j);
  }
  if (affected.empty()) return out;

  const Index d_old = out.d();
  out.x.conservativeResize(Eigen::NoChange, d_old + static_cast<Index>(affected.size()));
  for (std::size_t a = 0; a < affected.size(); ++a) {
    const Index j = affected[a];
    const Index ind = d_old + static_cast<Index>(a);
    double fill = 0.0;
    if (policy == ImputePolicy::mean_plus_indicator) {
      double s = 0.0;
      std::size_t c = 0;
      for (Index i = 0; i < rows; ++i)
        if (!is_missing(out.x(i, j))) {
          s += out.x(i, j);
          ++c;
        }
      fill = c ? s / static_cast<double>(c) : 0.0;
    }
    for (Index i = 0; i < rows; ++i) {
      const bool miss = is_missing(out.x(i, j));
      out.x(i, ind) = miss ? 1.0 : 0.0;
      if (miss) out.x(i, j) = fill;
    }
    out.x_names.push_back(out.x_names[static_cast<std::size_t>(j)] + "__miss");
  }
  return out;
}

}  // namespace abvr
