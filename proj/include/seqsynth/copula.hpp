#pragma once

// Gaussian copula over the context table (one row per sequence).
//
// Each column gets an empirical marginal. Numeric columns use the ECDF with
// linear interpolation between order statistics; categorical columns map each
// category onto its cumulative-frequency interval of [0, 1]. Rows are turned
// into normal scores, the scores' Pearson correlation is the copula, and
// sampling runs the same mapping backwards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "seqsynth/error.hpp"
#include "seqsynth/random.hpp"

namespace seqsynth {

/// One column of a context table. Categorical columns store category codes
/// (0 .. category_count-1) in values.
struct CopulaColumn {
  std::string name;
  std::size_t category_count = 0;  // 0 for numeric columns
  std::vector<double> values;

  bool categorical() const { return category_count > 0; }
};

struct ContextTable {
  std::vector<std::string> keys;
  std::vector<CopulaColumn> columns;

  std::size_t row_count() const { return keys.size(); }
};

struct NumericMarginal {
  std::vector<double> sorted;

  double cdf(double x) const {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
    return static_cast<double>(count) / static_cast<double>(sorted.size());
  }

  /// Interpolated inverse ECDF through the points ((i + 0.5) / n, x_(i));
  /// bounded by the observed minimum and maximum.
  double quantile(double u) const {
    const auto n = static_cast<double>(sorted.size());
    const double pos = u * n - 0.5;
    if (pos <= 0.0) return sorted.front();
    if (pos >= n - 1.0) return sorted.back();
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
  }
};

struct CategoricalMarginal {
  /// Interval bounds: category k owns [cumulative[k], cumulative[k+1]).
  std::vector<double> cumulative;

  std::size_t category_of(double u) const {
    const auto it = std::upper_bound(cumulative.begin() + 1, cumulative.end() - 1, u);
    return static_cast<std::size_t>(it - (cumulative.begin() + 1));
  }
};

using Marginal = std::variant<NumericMarginal, CategoricalMarginal>;

struct CopulaModel {
  std::vector<std::string> names;
  std::vector<std::size_t> category_counts;
  std::vector<Marginal> marginals;
  Eigen::MatrixXd correlation;
  /// Prefix of generated sequence keys; no fitted key starts with it.
  std::string key_prefix = "key-";
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_quantile(double u) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), u);
}

/// Nearest unit-diagonal PSD matrix by eigenvalue clipping at 0 and
/// diagonal renormalization. Returns the input when it is already PSD.
inline Eigen::MatrixXd repair_correlation(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() == 0) return matrix;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
  if (solver.eigenvalues().minCoeff() >= 0.0) return matrix;
  const Eigen::VectorXd clipped = solver.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd repaired = solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().transpose();
  Eigen::VectorXd scale = repaired.diagonal();
  for (Eigen::Index i = 0; i < scale.size(); ++i) scale[i] = scale[i] > 0.0 ? 1.0 / std::sqrt(scale[i]) : 0.0;
  repaired = scale.asDiagonal() * repaired * scale.asDiagonal();
  for (Eigen::Index i = 0; i < repaired.rows(); ++i) repaired(i, i) = 1.0;
  return repaired;
}

inline CopulaModel fit_copula(const ContextTable& table, std::uint64_t seed) {
  const std::size_t n = table.row_count();
  if (n == 0) throw Error(ErrorCode::EmptyContextTable, "the context table has no rows");
  const auto p = static_cast<Eigen::Index>(table.columns.size());

  CopulaModel model;
  Rng rng(seed);
  const double lo = 1.0 / (2.0 * static_cast<double>(n));
  const double hi = 1.0 - lo;
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(n), p);

  for (Eigen::Index c = 0; c < p; ++c) {
    const auto& column = table.columns[static_cast<std::size_t>(c)];
    if (column.values.size() != n) {
      throw Error(ErrorCode::ShapeMismatch, "context column '" + column.name + "' has the wrong row count");
    }
    model.names.push_back(column.name);
    model.category_counts.push_back(column.category_count);
    if (column.categorical()) {
      std::vector<double> counts(column.category_count, 0.0);
      for (double code : column.values) counts.at(static_cast<std::size_t>(code)) += 1.0;
      CategoricalMarginal marginal{{0.0}};
      for (double count : counts) marginal.cumulative.push_back(marginal.cumulative.back() + count / static_cast<double>(n));
      marginal.cumulative.back() = 1.0;
      for (std::size_t r = 0; r < n; ++r) {
        const auto k = static_cast<std::size_t>(column.values[r]);
        const double u = marginal.cumulative[k] + rng.uniform() * (marginal.cumulative[k + 1] - marginal.cumulative[k]);
        scores(static_cast<Eigen::Index>(r), c) = normal_quantile(std::clamp(u, lo, hi));
      }
      model.marginals.emplace_back(std::move(marginal));
    } else {
      NumericMarginal marginal{column.values};
      std::sort(marginal.sorted.begin(), marginal.sorted.end());
      for (std::size_t r = 0; r < n; ++r) {
        scores(static_cast<Eigen::Index>(r), c) = normal_quantile(std::clamp(marginal.cdf(column.values[r]), lo, hi));
      }
      model.marginals.emplace_back(std::move(marginal));
    }
  }

  // Pearson correlation of the scores; zero-variance columns stay uncorrelated.
  Eigen::MatrixXd centered = scores.rowwise() - scores.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  model.correlation = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a + 1; b < p; ++b) {
      if (norms[a] <= 1e-12 || norms[b] <= 1e-12) continue;
      const double r = std::clamp(centered.col(a).dot(centered.col(b)) / (norms[a] * norms[b]), -1.0, 1.0);
      model.correlation(a, b) = model.correlation(b, a) = r;
    }
  }
  model.correlation = repair_correlation(model.correlation);

  std::unordered_set<std::string> real_keys(table.keys.begin(), table.keys.end());
  auto collides = [&](const std::string& prefix) {
    return std::any_of(real_keys.begin(), real_keys.end(),
                       [&](const std::string& key) { return key.rfind(prefix, 0) == 0; });
  };
  while (collides(model.key_prefix)) model.key_prefix = "s" + model.key_prefix;
  return model;
}

/// Draws n fresh context rows with keys key_prefix + 0 .. key_prefix + (n-1).
inline ContextTable sample_context(const CopulaModel& model, std::size_t n, std::uint64_t seed) {
  const auto p = static_cast<Eigen::Index>(model.marginals.size());
  ContextTable table;
  for (std::size_t i = 0; i < n; ++i) table.keys.push_back(model.key_prefix + std::to_string(i));
  for (Eigen::Index c = 0; c < p; ++c) {
    table.columns.push_back({model.names[static_cast<std::size_t>(c)], model.category_counts[static_cast<std::size_t>(c)], {}});
    table.columns.back().values.reserve(n);
  }
  if (p == 0) return table;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(model.correlation);
  const Eigen::MatrixXd factor =
      solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  Rng rng(seed);
  Eigen::VectorXd draw(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < p; ++c) draw[c] = rng.normal();
    const Eigen::VectorXd z = factor * draw;
    for (Eigen::Index c = 0; c < p; ++c) {
      const double u = normal_cdf(z[c]);
      const auto& marginal = model.marginals[static_cast<std::size_t>(c)];
      double value = 0.0;
      if (const auto* num = std::get_if<NumericMarginal>(&marginal)) {
        value = num->quantile(u);
      } else {
        value = static_cast<double>(std::get<CategoricalMarginal>(marginal).category_of(u));
      }
      table.columns[static_cast<std::size_t>(c)].values.push_back(value);
    }
  }
  return table;
}

inline nlohmann::json to_json(const CopulaModel& model) {
  nlohmann::json j;
  j["key_prefix"] = model.key_prefix;
  j["columns"] = nlohmann::json::array();
  for (std::size_t c = 0; c < model.marginals.size(); ++c) {
    nlohmann::json column{{"name", model.names[c]}, {"category_count", model.category_counts[c]}};
    if (const auto* num = std::get_if<NumericMarginal>(&model.marginals[c])) {
      column["sorted"] = num->sorted;
    } else {
      column["cumulative"] = std::get<CategoricalMarginal>(model.marginals[c]).cumulative;
    }
    j["columns"].push_back(std::move(column));
  }
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.correlation.rows(); ++r) {
    std::vector<double> row(model.correlation.cols());
    for (Eigen::Index c = 0; c < model.correlation.cols(); ++c) row[static_cast<std::size_t>(c)] = model.correlation(r, c);
    rows.push_back(row);
  }
  j["correlation"] = std::move(rows);
  return j;
}

inline CopulaModel copula_from_json(const nlohmann::json& j) {
  CopulaModel model;
  model.key_prefix = j.at("key_prefix").get<std::string>();
  for (const auto& column : j.at("columns")) {
    model.names.push_back(column.at("name").get<std::string>());
    model.category_counts.push_back(column.at("category_count").get<std::size_t>());
    if (model.category_counts.back() == 0) {
      model.marginals.emplace_back(NumericMarginal{column.at("sorted").get<std::vector<double>>()});
    } else {
      model.marginals.emplace_back(CategoricalMarginal{column.at("cumulative").get<std::vector<double>>()});
    }
  }
  const auto p = static_cast<Eigen::Index>(model.marginals.size());
  model.correlation = Eigen::MatrixXd::Identity(p, p);
  const auto& rows = j.at("correlation");
  if (static_cast<Eigen::Index>(rows.size()) != p) throw Error(ErrorCode::ShapeMismatch, "correlation has the wrong size");
  for (Eigen::Index r = 0; r < p; ++r) {
    for (Eigen::Index c = 0; c < p; ++c) model.correlation(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return model;
}

}  // namespace seqsynth
