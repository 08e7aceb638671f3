#pragma once

// Multi-sequence aggregate similarity.
//
// For a per-sequence statistic, collect its value over every real sequence
// and over every synthetic sequence, then score 1 - D where D is the
// two-sample Kolmogorov-Smirnov statistic. Column scores are averaged.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqsynth/error.hpp"
#include "seqsynth/table.hpp"

namespace seqsynth {

struct StatisticKind {
  enum class Type { length, mean, median, stddev, inter_row_diff };

  Type type = Type::length;
  std::size_t lag = 0;  // inter_row_diff only

  static StatisticKind length() { return {Type::length, 0}; }
  static StatisticKind mean() { return {Type::mean, 0}; }
  static StatisticKind median() { return {Type::median, 0}; }
  static StatisticKind stddev() { return {Type::stddev, 0}; }
  static StatisticKind inter_row_diff(std::size_t lag) {
    if (lag == 0) throw Error(ErrorCode::InvalidConfig, "inter-row difference lag must be at least 1");
    return {Type::inter_row_diff, lag};
  }

  std::string name() const {
    switch (type) {
      case Type::length: return "length";
      case Type::mean: return "mean";
      case Type::median: return "median";
      case Type::stddev: return "std";
      case Type::inter_row_diff: return "inter_row_diff_lag_" + std::to_string(lag);
    }
    return "?";
  }

  bool operator==(const StatisticKind&) const = default;
};

/// sup |F_x - F_y| over the pooled sample.
inline double ks_statistic(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw Error(ErrorCode::EmptySample, "KS statistic needs two non-empty samples");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto n = static_cast<double>(a.size());
  const auto m = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

/// Value of a statistic for one sequence, or nullopt when the sequence has
/// nothing to contribute (too short for the lag, or no usable values).
inline std::optional<double> sequence_statistic(std::span<const Record> steps, std::size_t column, ColumnKind kind,
                                                const StatisticKind& stat) {
  using Type = StatisticKind::Type;
  if (stat.type == Type::length) return static_cast<double>(steps.size());
  if (!is_numeric(kind)) throw Error(ErrorCode::NonNumericColumn, "value statistics need a numeric column");

  if (stat.type == Type::inter_row_diff) {
    if (steps.size() < stat.lag + 1) return std::nullopt;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t t = 0; t + stat.lag < steps.size(); ++t) {
      const Cell& lo = steps[t][column];
      const Cell& hi = steps[t + stat.lag][column];
      if (is_missing(lo) || is_missing(hi)) continue;
      sum += as_number(hi) - as_number(lo);
      ++pairs;
    }
    if (pairs == 0) return std::nullopt;
    return sum / static_cast<double>(pairs);
  }

  std::vector<double> values;
  for (const auto& row : steps) {
    if (!is_missing(row[column])) values.push_back(as_number(row[column]));
  }
  if (values.empty()) return std::nullopt;
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  switch (stat.type) {
    case Type::mean: return mean;
    case Type::median: {
      std::sort(values.begin(), values.end());
      const std::size_t h = values.size() / 2;
      return values.size() % 2 == 1 ? values[h] : 0.5 * (values[h - 1] + values[h]);
    }
    default: {
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      return std::sqrt(ss / n);
    }
  }
}

struct ColumnScore {
  std::string column;
  double score = 0.0;
};

struct MsasEntry {
  StatisticKind kind;
  std::vector<ColumnScore> columns;  // empty for the length statistic
  /// Mean of the column scores (the length score itself for length); empty
  /// when no column had values on either side.
  std::optional<double> aggregate;
  std::size_t skipped_real = 0;
  std::size_t skipped_synthetic = 0;
};

/// Step columns scored by the value statistics: numeric, not the sequence index.
inline std::vector<std::size_t> value_columns(const Schema& schema) {
  std::vector<std::size_t> out;
  const auto index = schema.index_step_position();
  for (std::size_t c = 0; c < schema.step_columns.size(); ++c) {
    if (index && *index == c) continue;
    if (is_numeric(schema.step_spec(c).kind)) out.push_back(c);
  }
  return out;
}

inline MsasEntry msas(const Schema& schema, std::span<const Sequence> real, std::span<const Sequence> synthetic,
                      const StatisticKind& stat) {
  if (real.empty() || synthetic.empty()) {
    throw Error(ErrorCode::EmptySample, "MSAS needs at least one sequence on each side");
  }
  MsasEntry entry{stat, {}, std::nullopt, 0, 0};
  if (stat.type == StatisticKind::Type::length) {
    std::vector<double> x, y;
    for (const auto& s : real) x.push_back(static_cast<double>(s.steps.size()));
    for (const auto& s : synthetic) y.push_back(static_cast<double>(s.steps.size()));
    entry.aggregate = 1.0 - ks_statistic(x, y);
    return entry;
  }

  const auto columns = value_columns(schema);
  if (columns.empty()) throw Error(ErrorCode::NoApplicableColumn, "no numeric step column for " + stat.name());
  double total = 0.0;
  for (std::size_t c : columns) {
    const auto kind = schema.step_spec(c).kind;
    std::vector<double> x, y;
    for (const auto& s : real) {
      if (auto v = sequence_statistic(s.steps, c, kind, stat)) {
        x.push_back(*v);
      } else {
        ++entry.skipped_real;
      }
    }
    for (const auto& s : synthetic) {
      if (auto v = sequence_statistic(s.steps, c, kind, stat)) {
        y.push_back(*v);
      } else {
        ++entry.skipped_synthetic;
      }
    }
    if (x.empty() && y.empty()) continue;
    // Values on one side only: the distributions share nothing.
    const double score = x.empty() || y.empty() ? 0.0 : 1.0 - ks_statistic(x, y);
    entry.columns.push_back({schema.step_spec(c).name, score});
    total += score;
  }
  if (!entry.columns.empty()) entry.aggregate = total / static_cast<double>(entry.columns.size());
  return entry;
}

struct MsasReport {
  std::vector<MsasEntry> entries;  // length, mean, median, std, lags 1..max_lag
  std::size_t max_lag = 25;

  const MsasEntry* find(const StatisticKind& kind) const {
    for (const auto& e : entries) {
      if (e.kind == kind) return &e;
    }
    return nullptr;
  }

  /// Mean of the per-lag aggregates.
  std::optional<double> inter_row_average() const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries) {
      if (e.kind.type == StatisticKind::Type::inter_row_diff && e.aggregate) {
        total += *e.aggregate;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
  }
};

inline MsasReport evaluate_msas(const Schema& schema, std::span<const Sequence> real,
                                std::span<const Sequence> synthetic, std::size_t max_lag = 25) {
  MsasReport report;
  report.max_lag = max_lag;
  for (const auto& kind : {StatisticKind::length(), StatisticKind::mean(), StatisticKind::median(),
                           StatisticKind::stddev()}) {
    report.entries.push_back(msas(schema, real, synthetic, kind));
  }
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    report.entries.push_back(msas(schema, real, synthetic, StatisticKind::inter_row_diff(lag)));
  }
  return report;
}

namespace detail {
inline nlohmann::json optional_score(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }
}  // namespace detail

inline nlohmann::json to_json(const MsasReport& report) {
  nlohmann::json stats = nlohmann::json::object();
  for (const auto& e : report.entries) {
    nlohmann::json columns = nlohmann::json::object();
    for (const auto& c : e.columns) columns[c.column] = c.score;
    stats[e.kind.name()] = {{"aggregate", detail::optional_score(e.aggregate)},
                            {"columns", columns},
                            {"skipped_real", e.skipped_real},
                            {"skipped_synthetic", e.skipped_synthetic}};
  }
  nlohmann::json j;
  j["max_lag"] = report.max_lag;
  j["statistics"] = std::move(stats);
  j["inter_row_diff_average"] = detail::optional_score(report.inter_row_average());
  return j;
}

/// Plain-text summary: the seven headline rows, then per-column breakdowns.
inline std::string format_report(const MsasReport& report) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  auto aggregate_of = [&](const StatisticKind& kind) -> std::optional<double> {
    const auto* e = report.find(kind);
    return e ? e->aggregate : std::nullopt;
  };
  auto line = [](const std::string& label, const std::string& value) {
    std::string s = label;
    s.resize(std::max<std::size_t>(s.size() + 1, 44), ' ');
    return s + value + "\n";
  };

  std::string out = line("Statistic", "MSAS Score");
  out += std::string(54, '-') + "\n";
  out += line("Sequence Length", cell(aggregate_of(StatisticKind::length())));
  out += line("Column Mean", cell(aggregate_of(StatisticKind::mean())));
  out += line("Column Median", cell(aggregate_of(StatisticKind::median())));
  out += line("Column Standard Deviation", cell(aggregate_of(StatisticKind::stddev())));
  if (report.max_lag >= 1) {
    out += line("Inter-Row Difference (rows n, n+1)", cell(aggregate_of(StatisticKind::inter_row_diff(1))));
  }
  if (report.max_lag >= 5) {
    out += line("Inter-Row Difference (rows n, n+5)", cell(aggregate_of(StatisticKind::inter_row_diff(5))));
  }
  out += line("Inter-Row Difference (average)", cell(report.inter_row_average()));

  std::vector<std::string> names;
  for (const auto& e : report.entries) {
    for (const auto& c : e.columns) {
      if (std::find(names.begin(), names.end(), c.column) == names.end()) names.push_back(c.column);
    }
  }
  if (names.empty()) return out;

  out += "\n";
  std::string header = "Statistic";
  header.resize(28, ' ');
  for (const auto& n : names) {
    std::string h = n;
    h.resize(std::max<std::size_t>(h.size() + 2, 12), ' ');
    header += h;
  }
  out += header + "\n";
  for (const auto& e : report.entries) {
    if (e.kind.type == StatisticKind::Type::length) continue;
    std::string row = e.kind.type == StatisticKind::Type::inter_row_diff ? "lag " + std::to_string(e.kind.lag)
                                                                          : e.kind.name();
    row.resize(28, ' ');
    for (const auto& n : names) {
      std::optional<double> v;
      for (const auto& c : e.columns) {
        if (c.column == n) v = c.score;
      }
      std::string s = cell(v);
      s.resize(std::max<std::size_t>(n.size() + 2, 12), ' ');
      row += s;
    }
    out += row + "\n";
  }
  return out;
}

}  // namespace seqsynth
