#pragma once

// Reversible numeric encoding of sequences.
//
//  continuous / datetime  -> (z-score, missing flag)
//  discrete               -> (min-max value, missing flag)
//  categorical / boolean  -> one-hot (missing is its own category)
//
// Framing adds a start row and a stop row to every sequence, plus two marker
// slots (start, stop) at the end of every encoded row. Context values are
// encoded once per sequence, outside the rows.
//
// A sequence index is carried as per-step deltas (first delta 0) through the
// continuous pathway; the start value travels beside the framed rows.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqsynth/error.hpp"
#include "seqsynth/table.hpp"

namespace seqsynth {

struct ContinuousEncoder {
  double mean = 0.0;
  double std = 1.0;  // population std; 1 for a constant column
};

struct DiscreteEncoder {
  double min = 0.0;
  double max = 0.0;
  double impute = 0.0;  // column mean, raw space

  double span() const { return max - min; }
};

struct CategoricalEncoder {
  std::vector<std::string> categories;
  /// Position of the missing-value category, when the column had missing cells.
  std::optional<std::size_t> missing_category;
};

using ColumnEncoder = std::variant<ContinuousEncoder, DiscreteEncoder, CategoricalEncoder>;

struct ColumnTransform {
  ColumnSpec spec;
  ColumnEncoder encoder;
  bool has_missing = false;

  std::size_t width() const {
    if (const auto* cat = std::get_if<CategoricalEncoder>(&encoder)) return cat->categories.size();
    return 2;
  }
};

/// Encoded row: the concatenated column fragments, then start, then stop.
using NumericRow = std::vector<double>;

struct FramedSequence {
  std::string key;
  std::vector<double> context;
  std::vector<NumericRow> steps;
  /// First sequence index value; the rows only carry deltas.
  std::optional<double> index_start;
};

struct IndexCodec {
  std::size_t step_position = 0;
  ColumnKind kind = ColumnKind::continuous;
  /// Observed first index values of the fitted sequences, sorted.
  std::vector<double> starts;
};

struct TransformState {
  std::vector<ColumnTransform> context;
  std::vector<ColumnTransform> steps;
  std::optional<IndexCodec> index;

  std::size_t context_width() const {
    std::size_t w = 0;
    for (const auto& c : context) w += c.width();
    return w;
  }
  /// Offset of each step column's fragment within a NumericRow.
  std::vector<std::size_t> step_offsets() const {
    std::vector<std::size_t> offsets;
    std::size_t w = 0;
    for (const auto& c : steps) {
      offsets.push_back(w);
      w += c.width();
    }
    return offsets;
  }
  std::size_t start_slot() const {
    std::size_t w = 0;
    for (const auto& c : steps) w += c.width();
    return w;
  }
  std::size_t stop_slot() const { return start_slot() + 1; }
  std::size_t row_width() const { return start_slot() + 2; }
};

// ---------------------------------------------------------------------------
// Per-column fitting and encoding.

namespace detail {

inline ColumnTransform fit_column(const ColumnSpec& spec, std::span<const Cell* const> cells) {
  ColumnTransform column{spec, ContinuousEncoder{}, false};
  for (const Cell* cell : cells) column.has_missing |= is_missing(*cell);

  if (!is_numeric(spec.kind)) {
    CategoricalEncoder enc;
    if (spec.kind == ColumnKind::boolean) enc.categories = {"False", "True"};
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < enc.categories.size(); ++i) seen.emplace(enc.categories[i], i);
    for (const Cell* cell : cells) {
      if (is_missing(*cell)) {
        if (!enc.missing_category) {
          enc.missing_category = enc.categories.size();
          enc.categories.emplace_back();
        }
        continue;
      }
      const auto& label = as_label(*cell);
      if (seen.emplace(label, enc.categories.size()).second) enc.categories.push_back(label);
    }
    if (enc.categories.empty()) throw Error(ErrorCode::EmptyColumn, "column '" + spec.name + "' has no values");
    column.encoder = std::move(enc);
    return column;
  }

  double sum = 0.0;
  std::size_t n = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Cell* cell : cells) {
    if (is_missing(*cell)) continue;
    const double v = as_number(*cell);
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptyColumn, "column '" + spec.name + "' has no non-missing value");
  const double mean = sum / static_cast<double>(n);

  if (spec.kind == ColumnKind::discrete) {
    column.encoder = DiscreteEncoder{lo, hi, mean};
    return column;
  }
  double ss = 0.0;
  for (const Cell* cell : cells) {
    if (is_missing(*cell)) continue;
    const double d = as_number(*cell) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  column.encoder = ContinuousEncoder{mean, sd > 0.0 ? sd : 1.0};
  return column;
}

}  // namespace detail

/// Appends the encoded fragment of one cell to out.
inline void encode_into(const ColumnTransform& column, const Cell& cell, std::vector<double>& out) {
  std::visit(
      [&](const auto& enc) {
        using T = std::decay_t<decltype(enc)>;
        if constexpr (std::is_same_v<T, CategoricalEncoder>) {
          std::size_t hot = 0;
          if (is_missing(cell)) {
            if (!enc.missing_category) {
              throw Error(ErrorCode::UnseenCategory, "column '" + column.spec.name + "' saw no missing values");
            }
            hot = *enc.missing_category;
          } else {
            const auto& label = as_label(cell);
            const auto it = std::find(enc.categories.begin(), enc.categories.end(), label);
            if (it == enc.categories.end() || (enc.missing_category && label.empty())) {
              throw Error(ErrorCode::UnseenCategory,
                          "column '" + column.spec.name + "' has no category '" + label + "'");
            }
            hot = static_cast<std::size_t>(it - enc.categories.begin());
          }
          for (std::size_t i = 0; i < enc.categories.size(); ++i) out.push_back(i == hot ? 1.0 : 0.0);
        } else if constexpr (std::is_same_v<T, DiscreteEncoder>) {
          const double x = is_missing(cell) ? enc.impute : as_number(cell);
          out.push_back(enc.span() > 0.0 ? (x - enc.min) / enc.span() : 0.0);
          out.push_back(is_missing(cell) ? 1.0 : 0.0);
        } else {
          const double x = is_missing(cell) ? enc.mean : as_number(cell);
          out.push_back((x - enc.mean) / enc.std);
          out.push_back(is_missing(cell) ? 1.0 : 0.0);
        }
      },
      column.encoder);
}

inline std::vector<double> encode_value(const ColumnTransform& column, const Cell& cell) {
  std::vector<double> out;
  encode_into(column, cell, out);
  return out;
}

/// Inverse of encode_value. Discrete values are rounded and clamped to the
/// fitted range; a one-hot fragment decodes to its argmax.
inline Cell decode_value(const ColumnTransform& column, std::span<const double> fragment) {
  if (fragment.size() != column.width()) {
    throw Error(ErrorCode::MalformedFragment, "column '" + column.spec.name + "' expects a fragment of width " +
                                                  std::to_string(column.width()) + ", got " +
                                                  std::to_string(fragment.size()));
  }
  for (double v : fragment) {
    if (!std::isfinite(v)) throw Error(ErrorCode::MalformedFragment, "non-finite value in '" + column.spec.name + "'");
  }
  return std::visit(
      [&](const auto& enc) -> Cell {
        using T = std::decay_t<decltype(enc)>;
        if constexpr (std::is_same_v<T, CategoricalEncoder>) {
          const auto hot = static_cast<std::size_t>(std::max_element(fragment.begin(), fragment.end()) -
                                                    fragment.begin());
          if (enc.missing_category && hot == *enc.missing_category) return std::monostate{};
          return enc.categories[hot];
        } else {
          if (fragment[1] >= 0.5) return std::monostate{};
          if constexpr (std::is_same_v<T, DiscreteEncoder>) {
            const double raw = enc.min + fragment[0] * enc.span();
            return std::clamp(std::round(raw), enc.min, enc.max);
          } else {
            const double raw = std::fma(fragment[0], enc.std, enc.mean);
            return column.spec.kind == ColumnKind::datetime ? std::round(raw) : raw;
          }
        }
      },
      column.encoder);
}

/// Fragment for framing rows: numeric 0 with flag 0, one-hot on the first category.
inline void neutral_into(const ColumnTransform& column, std::vector<double>& out) {
  const std::size_t w = column.width();
  if (std::holds_alternative<CategoricalEncoder>(column.encoder)) {
    for (std::size_t i = 0; i < w; ++i) out.push_back(i == 0 ? 1.0 : 0.0);
  } else {
    out.push_back(0.0);
    out.push_back(0.0);
  }
}

// ---------------------------------------------------------------------------
// Sequence index deltas.

/// Copy of the step rows with the index column replaced by per-step deltas.
inline std::vector<Record> to_index_deltas(std::span<const Record> steps, std::size_t position) {
  std::vector<Record> out(steps.begin(), steps.end());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t][position] = t == 0 ? 0.0 : as_number(steps[t][position]) - as_number(steps[t - 1][position]);
  }
  return out;
}

/// Rounds a reconstructed index value to the resolution of its column.
inline double round_index(double value, ColumnKind kind) {
  return kind == ColumnKind::continuous ? value : std::round(value);
}

// ---------------------------------------------------------------------------

/// Fits encoders on full-column statistics of the sequences.
inline TransformState fit(const Schema& schema, std::span<const Sequence> sequences) {
  TransformState state;
  const auto index_position = schema.index_step_position();

  for (std::size_t c = 0; c < schema.context_columns.size(); ++c) {
    std::vector<const Cell*> cells;
    for (const auto& s : sequences) cells.push_back(&s.context[c]);
    state.context.push_back(detail::fit_column(schema.context_spec(c), cells));
  }

  std::vector<std::vector<Record>> delta_steps;
  if (index_position) {
    IndexCodec codec{*index_position, schema.step_spec(*index_position).kind, {}};
    for (const auto& s : sequences) {
      delta_steps.push_back(to_index_deltas(s.steps, *index_position));
      codec.starts.push_back(as_number(s.steps.front()[*index_position]));
    }
    std::sort(codec.starts.begin(), codec.starts.end());
    state.index = std::move(codec);
  }

  for (std::size_t c = 0; c < schema.step_columns.size(); ++c) {
    std::vector<const Cell*> cells;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      const auto& rows = index_position ? delta_steps[i] : sequences[i].steps;
      for (const auto& row : rows) cells.push_back(&row[c]);
    }
    ColumnSpec spec = schema.step_spec(c);
    if (index_position && c == *index_position) spec.kind = ColumnKind::continuous;
    state.steps.push_back(detail::fit_column(spec, cells));
  }
  return state;
}

inline TransformState fit(const Dataset& dataset) {
  const auto sequences = partition_sequences(dataset);
  return fit(dataset.schema, sequences);
}

inline std::vector<double> encode_context(const TransformState& state, const Record& context) {
  if (context.size() != state.context.size()) {
    throw Error(ErrorCode::MalformedFragment, "context record has " + std::to_string(context.size()) +
                                                  " cells, expected " + std::to_string(state.context.size()));
  }
  std::vector<double> out;
  for (std::size_t c = 0; c < context.size(); ++c) encode_into(state.context[c], context[c], out);
  return out;
}

inline Record decode_context(const TransformState& state, std::span<const double> encoded) {
  if (encoded.size() != state.context_width()) {
    throw Error(ErrorCode::MalformedFragment, "encoded context has the wrong width");
  }
  Record context;
  std::size_t offset = 0;
  for (const auto& column : state.context) {
    context.push_back(decode_value(column, encoded.subspan(offset, column.width())));
    offset += column.width();
  }
  return context;
}

/// Encodes one step record (index already replaced by its delta).
inline NumericRow encode_step(const TransformState& state, const Record& step) {
  if (step.size() != state.steps.size()) {
    throw Error(ErrorCode::MalformedFragment, "step record has " + std::to_string(step.size()) +
                                                  " cells, expected " + std::to_string(state.steps.size()));
  }
  NumericRow row;
  row.reserve(state.row_width());
  for (std::size_t c = 0; c < step.size(); ++c) encode_into(state.steps[c], step[c], row);
  row.push_back(0.0);
  row.push_back(0.0);
  return row;
}

inline NumericRow framing_row(const TransformState& state, bool start) {
  NumericRow row;
  row.reserve(state.row_width());
  for (const auto& column : state.steps) neutral_into(column, row);
  row.push_back(start ? 1.0 : 0.0);
  row.push_back(start ? 0.0 : 1.0);
  return row;
}

inline FramedSequence frame(const TransformState& state, const Sequence& sequence) {
  FramedSequence framed;
  framed.key = sequence.key;
  framed.context = encode_context(state, sequence.context);
  framed.steps.reserve(sequence.steps.size() + 2);
  framed.steps.push_back(framing_row(state, true));
  if (state.index && !sequence.steps.empty()) {
    framed.index_start = as_number(sequence.steps.front()[state.index->step_position]);
    for (const auto& step : to_index_deltas(sequence.steps, state.index->step_position)) {
      framed.steps.push_back(encode_step(state, step));
    }
  } else {
    for (const auto& step : sequence.steps) framed.steps.push_back(encode_step(state, step));
  }
  framed.steps.push_back(framing_row(state, false));
  return framed;
}

/// Decodes the interior rows of a framed sequence. Only the first and last
/// rows are treated as framing; interior markers are ignored.
inline Sequence unframe(const TransformState& state, const FramedSequence& framed) {
  const std::size_t width = state.row_width();
  if (framed.steps.size() < 2 || framed.steps.front().size() != width || framed.steps.back().size() != width ||
      framed.steps.front()[state.start_slot()] < 0.5 || framed.steps.back()[state.stop_slot()] < 0.5) {
    throw Error(ErrorCode::MissingFraming, "sequence '" + framed.key + "' lacks start/stop rows");
  }
  Sequence sequence;
  sequence.key = framed.key;
  sequence.context = decode_context(state, framed.context);

  const auto offsets = state.step_offsets();
  double index_value = 0.0;
  if (state.index) {
    if (!framed.index_start) {
      throw Error(ErrorCode::MalformedFragment, "sequence '" + framed.key + "' has no index start value");
    }
    index_value = *framed.index_start;
  }
  for (std::size_t t = 1; t + 1 < framed.steps.size(); ++t) {
    const auto& row = framed.steps[t];
    if (row.size() != width) throw Error(ErrorCode::MalformedFragment, "encoded row has the wrong width");
    Record step;
    for (std::size_t c = 0; c < state.steps.size(); ++c) {
      step.push_back(decode_value(state.steps[c], std::span(row).subspan(offsets[c], state.steps[c].width())));
    }
    if (state.index) {
      auto& cell = step[state.index->step_position];
      // A missing delta would make the index unorderable; treat it as no advance.
      const double delta = is_missing(cell) || t == 1 ? 0.0 : as_number(cell);
      index_value += delta;
      cell = round_index(index_value, state.index->kind);
    }
    sequence.steps.push_back(std::move(step));
  }
  return sequence;
}

// ---------------------------------------------------------------------------
// Persistence.

inline nlohmann::json to_json(const ColumnTransform& column) {
  nlohmann::json j;
  j["name"] = column.spec.name;
  j["kind"] = std::string(to_string(column.spec.kind));
  j["date_only"] = column.spec.date_only;
  j["has_missing"] = column.has_missing;
  std::visit(
      [&](const auto& enc) {
        using T = std::decay_t<decltype(enc)>;
        if constexpr (std::is_same_v<T, CategoricalEncoder>) {
          j["encoder"] = "categorical";
          j["categories"] = enc.categories;
          j["missing_category"] = enc.missing_category ? nlohmann::json(*enc.missing_category) : nlohmann::json();
        } else if constexpr (std::is_same_v<T, DiscreteEncoder>) {
          j["encoder"] = "discrete";
          j["min"] = enc.min;
          j["max"] = enc.max;
          j["impute"] = enc.impute;
        } else {
          j["encoder"] = "continuous";
          j["mean"] = enc.mean;
          j["std"] = enc.std;
        }
      },
      column.encoder);
  return j;
}

inline ColumnTransform column_transform_from_json(const nlohmann::json& j) {
  ColumnTransform column;
  column.spec.name = j.at("name").get<std::string>();
  column.spec.kind = parse_column_kind(j.at("kind").get<std::string>());
  column.spec.date_only = j.at("date_only").get<bool>();
  column.has_missing = j.at("has_missing").get<bool>();
  const auto encoder = j.at("encoder").get<std::string>();
  if (encoder == "categorical") {
    CategoricalEncoder enc;
    enc.categories = j.at("categories").get<std::vector<std::string>>();
    if (!j.at("missing_category").is_null()) enc.missing_category = j.at("missing_category").get<std::size_t>();
    column.encoder = std::move(enc);
  } else if (encoder == "discrete") {
    column.encoder = DiscreteEncoder{j.at("min").get<double>(), j.at("max").get<double>(), j.at("impute").get<double>()};
  } else {
    column.encoder = ContinuousEncoder{j.at("mean").get<double>(), j.at("std").get<double>()};
  }
  return column;
}

inline nlohmann::json to_json(const TransformState& state) {
  nlohmann::json j;
  j["context"] = nlohmann::json::array();
  for (const auto& c : state.context) j["context"].push_back(to_json(c));
  j["steps"] = nlohmann::json::array();
  for (const auto& c : state.steps) j["steps"].push_back(to_json(c));
  if (state.index) {
    j["index"] = {{"step_position", state.index->step_position},
                  {"kind", std::string(to_string(state.index->kind))},
                  {"starts", state.index->starts}};
  } else {
    j["index"] = nullptr;
  }
  return j;
}

inline TransformState transform_state_from_json(const nlohmann::json& j) {
  TransformState state;
  for (const auto& c : j.at("context")) state.context.push_back(column_transform_from_json(c));
  for (const auto& c : j.at("steps")) state.steps.push_back(column_transform_from_json(c));
  if (!j.at("index").is_null()) {
    const auto& idx = j.at("index");
    state.index = IndexCodec{idx.at("step_position").get<std::size_t>(),
                             parse_column_kind(idx.at("kind").get<std::string>()),
                             idx.at("starts").get<std::vector<double>>()};
  }
  return state;
}

}  // namespace seqsynth
