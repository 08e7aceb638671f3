#pragma once

// Tables, column types and multi-sequence metadata.
//
// A multi-sequence table holds many independent sequences. The sequence key
// column says which sequence a row belongs to, the optional sequence index
// orders rows within a sequence, and context columns hold values that are
// constant within a sequence.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqsynth/csv.hpp"
#include "seqsynth/error.hpp"

namespace seqsynth {

enum class ColumnKind { continuous, discrete, categorical, datetime, boolean };

inline constexpr std::string_view to_string(ColumnKind kind) noexcept {
  switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::discrete: return "discrete";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::datetime: return "datetime";
    case ColumnKind::boolean: return "boolean";
  }
  return "unknown";
}

inline ColumnKind parse_column_kind(std::string_view text) {
  for (auto kind : {ColumnKind::continuous, ColumnKind::discrete, ColumnKind::categorical,
                    ColumnKind::datetime, ColumnKind::boolean}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown column type '" + std::string(text) + "'");
}

/// Kinds whose cells are numbers (datetimes as epoch seconds).
inline constexpr bool is_numeric(ColumnKind kind) noexcept {
  return kind == ColumnKind::continuous || kind == ColumnKind::discrete || kind == ColumnKind::datetime;
}

/// A typed cell: missing, a number, or a label.
using Cell = std::variant<std::monostate, double, std::string>;
using Record = std::vector<Cell>;

inline bool is_missing(const Cell& cell) noexcept { return std::holds_alternative<std::monostate>(cell); }
inline double as_number(const Cell& cell) { return std::get<double>(cell); }
inline const std::string& as_label(const Cell& cell) { return std::get<std::string>(cell); }

struct Metadata {
  std::string sequence_key;
  std::optional<std::string> sequence_index;
  std::vector<std::string> context_columns;
  std::map<std::string, ColumnKind> column_types;
};

inline nlohmann::json to_json(const Metadata& metadata) {
  nlohmann::json j;
  j["sequence_key"] = metadata.sequence_key;
  j["sequence_index"] = metadata.sequence_index ? nlohmann::json(*metadata.sequence_index) : nlohmann::json();
  j["context_columns"] = metadata.context_columns;
  auto& types = j["column_types"] = nlohmann::json::object();
  for (const auto& [name, kind] : metadata.column_types) types[name] = std::string(to_string(kind));
  return j;
}

inline Metadata metadata_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "metadata must be a JSON object");
  if (!j.contains("sequence_key") || !j["sequence_key"].is_string()) {
    throw Error(ErrorCode::UnknownColumn, "metadata is missing the 'sequence_key' field");
  }
  Metadata metadata;
  metadata.sequence_key = j["sequence_key"].get<std::string>();
  if (j.contains("sequence_index") && !j["sequence_index"].is_null()) {
    metadata.sequence_index = j["sequence_index"].get<std::string>();
  }
  if (j.contains("context_columns")) {
    metadata.context_columns = j["context_columns"].get<std::vector<std::string>>();
  }
  if (!j.contains("column_types") || !j["column_types"].is_object()) {
    throw Error(ErrorCode::UnknownColumn, "metadata is missing the 'column_types' field");
  }
  for (const auto& [name, kind] : j["column_types"].items()) {
    metadata.column_types[name] = parse_column_kind(kind.get<std::string>());
  }
  return metadata;
}

inline Metadata read_metadata_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return metadata_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Datetimes are epoch seconds (UTC).

namespace detail {

// Days since 1970-01-01 of a proleptic Gregorian date.
inline constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

inline constexpr CivilDate civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<int> parse_fixed_int(std::string_view text) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace detail

struct ParsedDatetime {
  double epoch_seconds;
  bool has_time;
};

/// Parses YYYY-MM-DD with an optional [T ]HH:MM[:SS] part and trailing Z.
inline std::optional<ParsedDatetime> parse_datetime(std::string_view text) {
  text = detail::trim(text);
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  const auto year = detail::parse_fixed_int(text.substr(0, 4));
  const auto month = detail::parse_fixed_int(text.substr(5, 2));
  const auto day = detail::parse_fixed_int(text.substr(8, 2));
  if (!year || !month || !day || *month < 1 || *month > 12 || *day < 1 || *day > 31) return std::nullopt;
  const auto days = detail::days_from_civil(*year, static_cast<unsigned>(*month), static_cast<unsigned>(*day));
  if (detail::civil_from_days(days).day != static_cast<unsigned>(*day)) return std::nullopt;
  std::int64_t seconds = 0;
  bool has_time = false;
  if (text.size() > 10) {
    if (text[10] != 'T' && text[10] != ' ') return std::nullopt;
    const auto time = text.substr(11);
    if (time.size() != 5 && time.size() != 8) return std::nullopt;
    const auto hh = detail::parse_fixed_int(time.substr(0, 2));
    const auto mm = detail::parse_fixed_int(time.substr(3, 2));
    std::optional<int> ss = 0;
    if (time[2] != ':') return std::nullopt;
    if (time.size() == 8) {
      if (time[5] != ':') return std::nullopt;
      ss = detail::parse_fixed_int(time.substr(6, 2));
    }
    if (!hh || !mm || !ss || *hh > 23 || *mm > 59 || *ss > 59 || *hh < 0 || *mm < 0 || *ss < 0) {
      return std::nullopt;
    }
    seconds = *hh * 3600 + *mm * 60 + *ss;
    has_time = true;
  }
  return ParsedDatetime{static_cast<double>(days * 86400 + seconds), has_time};
}

inline std::string format_datetime(double epoch_seconds, bool date_only) {
  auto total = static_cast<std::int64_t>(std::llround(epoch_seconds));
  if (date_only) total = static_cast<std::int64_t>(std::llround(epoch_seconds / 86400.0)) * 86400;
  std::int64_t days = total / 86400;
  std::int64_t rem = total % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const auto date = detail::civil_from_days(days);
  char buffer[40];
  if (date_only) {
    std::snprintf(buffer, sizeof buffer, "%04lld-%02u-%02u", static_cast<long long>(date.year), date.month,
                  date.day);
  } else {
    std::snprintf(buffer, sizeof buffer, "%04lld-%02u-%02u %02lld:%02lld:%02lld",
                  static_cast<long long>(date.year), date.month, date.day, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
  }
  return buffer;
}

/// Shortest decimal text that reads back as the same double.
inline std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, ptr);
}

// ---------------------------------------------------------------------------

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
  /// Datetime columns written back without a time of day.
  bool date_only = true;
};

/// Column layout of a validated table, in header order.
struct Schema {
  std::vector<ColumnSpec> columns;
  std::size_t key_column = 0;
  std::optional<std::size_t> index_column;
  std::vector<std::size_t> context_columns;  // metadata order
  std::vector<std::size_t> step_columns;     // header order, without key and context

  /// Position of the sequence index among the step columns.
  std::optional<std::size_t> index_step_position() const {
    if (!index_column) return std::nullopt;
    const auto it = std::find(step_columns.begin(), step_columns.end(), *index_column);
    return static_cast<std::size_t>(it - step_columns.begin());
  }

  std::vector<std::string> header() const {
    std::vector<std::string> names;
    for (const auto& c : columns) names.push_back(c.name);
    return names;
  }

  const ColumnSpec& step_spec(std::size_t step_position) const { return columns[step_columns[step_position]]; }
  const ColumnSpec& context_spec(std::size_t context_position) const {
    return columns[context_columns[context_position]];
  }
};

inline nlohmann::json to_json(const Schema& schema) {
  nlohmann::json columns = nlohmann::json::array();
  for (const auto& c : schema.columns) {
    columns.push_back({{"name", c.name}, {"kind", std::string(to_string(c.kind))}, {"date_only", c.date_only}});
  }
  return columns;
}

/// Resolves metadata against a header and checks the metadata invariants.
inline Schema make_schema(std::span<const std::string> header, const Metadata& metadata) {
  Schema schema;
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second) {
      throw Error(ErrorCode::ParseError, "duplicate column '" + header[i] + "' in header");
    }
  }
  auto find = [&](const std::string& name, std::string_view role) {
    const auto it = position.find(name);
    if (it == position.end()) {
      throw Error(ErrorCode::UnknownColumn, std::string(role) + " column '" + name + "' is not in the header");
    }
    return it->second;
  };

  schema.key_column = find(metadata.sequence_key, "sequence key");
  if (metadata.sequence_index) schema.index_column = find(*metadata.sequence_index, "sequence index");
  for (const auto& name : metadata.context_columns) schema.context_columns.push_back(find(name, "context"));
  for (const auto& [name, kind] : metadata.column_types) find(name, "typed");

  for (const auto& name : header) {
    ColumnSpec spec{name};
    const auto it = metadata.column_types.find(name);
    if (it != metadata.column_types.end()) {
      spec.kind = it->second;
    } else if (name != metadata.sequence_key) {
      throw Error(ErrorCode::UnknownColumn, "column '" + name + "' has no entry in column_types");
    }
    schema.columns.push_back(spec);
  }

  const auto& ctx = schema.context_columns;
  if (std::find(ctx.begin(), ctx.end(), schema.key_column) != ctx.end()) {
    throw Error(ErrorCode::InvalidConfig, "the sequence key cannot be a context column");
  }
  if (std::set<std::size_t>(ctx.begin(), ctx.end()).size() != ctx.size()) {
    throw Error(ErrorCode::InvalidConfig, "context_columns lists a column twice");
  }
  if (schema.index_column) {
    if (*schema.index_column == schema.key_column) {
      throw Error(ErrorCode::InvalidConfig, "the sequence key cannot be the sequence index");
    }
    if (std::find(ctx.begin(), ctx.end(), *schema.index_column) != ctx.end()) {
      throw Error(ErrorCode::InvalidConfig, "the sequence index cannot be a context column");
    }
    if (!is_numeric(schema.columns[*schema.index_column].kind)) {
      throw Error(ErrorCode::UnorderableIndex,
                  "sequence index '" + *metadata.sequence_index + "' must be numeric or datetime");
    }
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == schema.key_column || std::find(ctx.begin(), ctx.end(), i) != ctx.end()) continue;
    schema.step_columns.push_back(i);
  }
  return schema;
}

inline Schema schema_from_json(const nlohmann::json& columns, const Metadata& metadata) {
  std::vector<std::string> header;
  for (const auto& c : columns) header.push_back(c.at("name").get<std::string>());
  Schema schema = make_schema(header, metadata);
  for (std::size_t i = 0; i < columns.size(); ++i) schema.columns[i].date_only = columns[i].at("date_only").get<bool>();
  return schema;
}

/// A validated multi-sequence table. Rows are grouped by sequence (groups in
/// order of first appearance) and sorted by the sequence index within a group.
struct Dataset {
  Schema schema;
  Metadata metadata;
  std::vector<Record> rows;
};

/// One sequence: its key, its context values (metadata order) and its ordered
/// rows restricted to the step columns.
struct Sequence {
  std::string key;
  Record context;
  std::vector<Record> steps;
};

inline bool operator==(const Sequence& a, const Sequence& b) {
  return a.key == b.key && a.context == b.context && a.steps == b.steps;
}

namespace detail {

inline std::optional<std::string> canonical_boolean(std::string_view text) {
  std::string lower;
  for (char c : trim(text)) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "true" || lower == "1" || lower == "yes" || lower == "t" || lower == "y") return "True";
  if (lower == "false" || lower == "0" || lower == "no" || lower == "f" || lower == "n") return "False";
  return std::nullopt;
}

inline Cell parse_cell(std::string_view text, ColumnSpec& spec, bool is_key, std::size_t line) {
  auto fail = [&](std::string_view what) -> Error {
    return Error(ErrorCode::InvalidValue, "line " + std::to_string(line) + ", column '" + spec.name + "': " +
                                              std::string(what) + " '" + std::string(text) + "'");
  };
  if (is_key) {
    if (text.empty()) throw fail("missing sequence key");
    return std::string(text);
  }
  if (text.empty()) return std::monostate{};
  switch (spec.kind) {
    case ColumnKind::continuous: {
      const auto v = parse_double(text);
      if (!v) throw fail("not a number");
      return *v;
    }
    case ColumnKind::discrete: {
      const auto v = parse_double(text);
      if (!v) throw fail("not a number");
      if (*v != std::round(*v)) throw fail("discrete value is not a whole number");
      return *v;
    }
    case ColumnKind::datetime: {
      const auto v = parse_datetime(text);
      if (!v) throw fail("not a datetime");
      if (v->has_time) spec.date_only = false;
      return v->epoch_seconds;
    }
    case ColumnKind::boolean: {
      auto v = canonical_boolean(text);
      if (!v) throw fail("not a boolean");
      return std::move(*v);
    }
    case ColumnKind::categorical:
      return std::string(text);
  }
  return std::monostate{};
}

}  // namespace detail

/// Parses and checks a raw table against metadata.
inline Dataset validate(const RawTable& table, const Metadata& metadata) {
  Dataset dataset{make_schema(table.header, metadata), metadata, {}};
  auto& schema = dataset.schema;
  const std::size_t width = schema.columns.size();

  std::vector<Record> parsed;
  parsed.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& raw = table.rows[r];
    if (raw.size() != width) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(r + 1) + " has " + std::to_string(raw.size()) +
                                             " fields, expected " + std::to_string(width));
    }
    Record record(width);
    for (std::size_t c = 0; c < width; ++c) {
      record[c] = detail::parse_cell(raw[c], schema.columns[c], c == schema.key_column, r + 2);
    }
    if (schema.index_column && is_missing(record[*schema.index_column])) {
      throw Error(ErrorCode::UnorderableIndex,
                  "line " + std::to_string(r + 2) + ": sequence index value is missing");
    }
    parsed.push_back(std::move(record));
  }

  // Group rows by key in order of first appearance.
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < parsed.size(); ++r) {
    const auto& key = as_label(parsed[r][schema.key_column]);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(r);
  }

  dataset.rows.reserve(parsed.size());
  for (const auto& key : keys) {
    auto& members = groups[key];
    if (schema.index_column) {
      const std::size_t idx = *schema.index_column;
      std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        return as_number(parsed[a][idx]) < as_number(parsed[b][idx]);
      });
    }
    for (std::size_t c : schema.context_columns) {
      const Cell& first = parsed[members.front()][c];
      for (std::size_t r : members) {
        if (parsed[r][c] != first) {
          throw Error(ErrorCode::NonConstantContext, "context column '" + schema.columns[c].name +
                                                         "' varies within sequence '" + key + "'");
        }
      }
    }
    for (std::size_t r : members) dataset.rows.push_back(std::move(parsed[r]));
  }
  return dataset;
}

/// Splits a validated dataset into its sequences.
inline std::vector<Sequence> partition_sequences(const Dataset& dataset) {
  const auto& schema = dataset.schema;
  std::vector<Sequence> sequences;
  for (const auto& row : dataset.rows) {
    const auto& key = as_label(row[schema.key_column]);
    if (sequences.empty() || sequences.back().key != key) {
      Sequence s;
      s.key = key;
      for (std::size_t c : schema.context_columns) s.context.push_back(row[c]);
      sequences.push_back(std::move(s));
    }
    Record step;
    step.reserve(schema.step_columns.size());
    for (std::size_t c : schema.step_columns) step.push_back(row[c]);
    sequences.back().steps.push_back(std::move(step));
  }
  return sequences;
}

/// Inverse of partition_sequences: full-width rows in header order.
inline std::vector<Record> assemble_rows(const Schema& schema, std::span<const Sequence> sequences) {
  std::vector<Record> rows;
  for (const auto& s : sequences) {
    for (const auto& step : s.steps) {
      Record row(schema.columns.size());
      row[schema.key_column] = s.key;
      for (std::size_t i = 0; i < schema.context_columns.size(); ++i) row[schema.context_columns[i]] = s.context[i];
      for (std::size_t i = 0; i < schema.step_columns.size(); ++i) row[schema.step_columns[i]] = step[i];
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string format_cell(const Cell& cell, const ColumnSpec& spec) {
  if (is_missing(cell)) return {};
  if (const auto* label = std::get_if<std::string>(&cell)) return *label;
  const double v = as_number(cell);
  switch (spec.kind) {
    case ColumnKind::discrete: return std::to_string(std::llround(v));
    case ColumnKind::datetime: return format_datetime(v, spec.date_only);
    default: return format_double(v);
  }
}

inline RawTable to_raw_table(const Schema& schema, std::span<const Record> rows) {
  RawTable table;
  table.header = schema.header();
  for (const auto& row : rows) {
    std::vector<std::string> fields;
    for (std::size_t c = 0; c < row.size(); ++c) fields.push_back(format_cell(row[c], schema.columns[c]));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

}  // namespace seqsynth
