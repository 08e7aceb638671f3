#pragma once

// End-to-end fitting and sampling: validate -> fit transforms -> frame ->
// fit copula on the context table -> train CPAR; and back again.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqsynth/copula.hpp"
#include "seqsynth/cpar.hpp"
#include "seqsynth/csv.hpp"
#include "seqsynth/error.hpp"
#include "seqsynth/random.hpp"
#include "seqsynth/table.hpp"
#include "seqsynth/transforms.hpp"

namespace seqsynth {

struct RunConfig {
  std::size_t epochs = 128;
  std::size_t hidden = 64;
  std::size_t input_layers = 1;
  std::size_t hidden_layers = 1;
  double learning_rate = 1e-3;
  std::size_t batches_per_epoch = 1;
  double clip_norm = 10.0;
  MeanActivation mean_activation = MeanActivation::softplus;
  std::uint64_t seed = 0;
  /// 0: four times the longest real sequence.
  std::size_t max_sequence_length = 0;
  /// 0: as many sequences as the real data has.
  std::size_t sample_count = 0;
  std::size_t max_lag = 25;

  CparConfig cpar() const {
    CparConfig c;
    c.epochs = epochs;
    c.hidden = hidden;
    c.input_layers = input_layers;
    c.hidden_layers = hidden_layers;
    c.learning_rate = learning_rate;
    c.batches_per_epoch = batches_per_epoch;
    c.clip_norm = clip_norm;
    c.mean_activation = mean_activation;
    c.max_sequence_length = max_sequence_length;
    c.seed = seed;
    return c;
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"epochs", c.epochs},
          {"hidden", c.hidden},
          {"input_layers", c.input_layers},
          {"hidden_layers", c.hidden_layers},
          {"learning_rate", c.learning_rate},
          {"batches_per_epoch", c.batches_per_epoch},
          {"clip_norm", c.clip_norm},
          {"mean_activation", std::string(to_string(c.mean_activation))},
          {"seed", c.seed},
          {"max_sequence_length", c.max_sequence_length},
          {"sample_count", c.sample_count},
          {"max_lag", c.max_lag}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {}) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "run config must be a JSON object");
  static const std::set<std::string> known{"epochs",       "hidden",        "input_layers", "hidden_layers",
                                           "learning_rate", "batches_per_epoch", "clip_norm", "mean_activation",
                                           "seed",          "max_sequence_length", "sample_count", "max_lag"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("hidden", c.hidden);
    get("input_layers", c.input_layers);
    get("hidden_layers", c.hidden_layers);
    get("learning_rate", c.learning_rate);
    get("batches_per_epoch", c.batches_per_epoch);
    get("clip_norm", c.clip_norm);
    if (j.contains("mean_activation")) c.mean_activation = parse_mean_activation(j.at("mean_activation").get<std::string>());
    get("seed", c.seed);
    get("max_sequence_length", c.max_sequence_length);
    get("sample_count", c.sample_count);
    get("max_lag", c.max_lag);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("run config: ") + e.what());
  }
  if (c.hidden == 0 || c.batches_per_epoch == 0 || !(c.learning_rate > 0.0) || !(c.clip_norm >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "hidden, batches_per_epoch and learning_rate must be positive");
  }
  return c;
}

inline RunConfig read_run_config(const std::string& path, RunConfig defaults = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return run_config_from_json(nlohmann::json::parse(in), defaults);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Context table for the copula

/// Numeric context columns become a value column (missing cells imputed)
/// plus a 0/1 missing-flag column when the column had missing cells;
/// categorical columns become category codes.
inline ContextTable build_context_table(const TransformState& state, std::span<const Sequence> sequences) {
  ContextTable table;
  for (const auto& s : sequences) table.keys.push_back(s.key);
  for (std::size_t c = 0; c < state.context.size(); ++c) {
    const auto& column = state.context[c];
    if (const auto* cat = std::get_if<CategoricalEncoder>(&column.encoder)) {
      CopulaColumn out{column.spec.name, cat->categories.size(), {}};
      for (const auto& s : sequences) {
        const auto fragment = encode_value(column, s.context[c]);
        out.values.push_back(static_cast<double>(std::max_element(fragment.begin(), fragment.end()) - fragment.begin()));
      }
      table.columns.push_back(std::move(out));
      continue;
    }
    const double fill = std::holds_alternative<DiscreteEncoder>(column.encoder)
                            ? std::get<DiscreteEncoder>(column.encoder).impute
                            : std::get<ContinuousEncoder>(column.encoder).mean;
    CopulaColumn values{column.spec.name, 0, {}};
    CopulaColumn flags{column.spec.name + "#missing", 2, {}};
    for (const auto& s : sequences) {
      const bool missing = is_missing(s.context[c]);
      values.values.push_back(missing ? fill : as_number(s.context[c]));
      flags.values.push_back(missing ? 1.0 : 0.0);
    }
    table.columns.push_back(std::move(values));
    if (column.has_missing) table.columns.push_back(std::move(flags));
  }
  return table;
}

/// Inverse of build_context_table for one row.
inline Record context_record(const TransformState& state, const ContextTable& table, std::size_t row) {
  Record record;
  std::size_t t = 0;
  for (const auto& column : state.context) {
    if (const auto* cat = std::get_if<CategoricalEncoder>(&column.encoder)) {
      const auto code = static_cast<std::size_t>(table.columns.at(t++).values.at(row));
      if (cat->missing_category && code == *cat->missing_category) {
        record.emplace_back(std::monostate{});
      } else {
        record.emplace_back(cat->categories.at(code));
      }
      continue;
    }
    double value = table.columns.at(t++).values.at(row);
    const bool missing = column.has_missing && table.columns.at(t++).values.at(row) >= 0.5;
    if (missing) {
      record.emplace_back(std::monostate{});
      continue;
    }
    if (const auto* disc = std::get_if<DiscreteEncoder>(&column.encoder)) {
      value = std::clamp(std::round(value), disc->min, disc->max);
    } else if (column.spec.kind == ColumnKind::datetime) {
      value = std::round(value);
    }
    record.emplace_back(value);
  }
  return record;
}

// ---------------------------------------------------------------------------

struct Pipeline {
  Metadata metadata;
  Schema schema;
  TransformState transforms;
  CopulaModel copula;
  CparModel cpar;
  RunConfig config;
  std::size_t real_sequence_count = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

inline Pipeline fit_pipeline(const Dataset& dataset, const RunConfig& config, const EpochCallback& on_epoch = {}) {
  const auto sequences = partition_sequences(dataset);
  if (sequences.empty()) throw Error(ErrorCode::EmptyContextTable, "the data has no sequences");

  Pipeline p;
  p.metadata = dataset.metadata;
  p.schema = dataset.schema;
  p.config = config;
  p.real_sequence_count = sequences.size();
  p.transforms = fit(dataset.schema, sequences);

  std::vector<FramedSequence> framed;
  framed.reserve(sequences.size());
  std::size_t longest = 0;
  for (const auto& s : sequences) {
    framed.push_back(frame(p.transforms, s));
    longest = std::max(longest, s.steps.size());
  }

  p.copula = fit_copula(build_context_table(p.transforms, sequences), derive_seed(config.seed, "copula"));
  p.cpar = init_model(make_layout(p.transforms), p.transforms.context_width(), config.cpar(), longest);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const double loss = train_epoch(p.cpar, framed);
    if (on_epoch) on_epoch(e + 1, loss);
  }
  return p;
}

struct SampleResult {
  std::vector<Sequence> sequences;
  std::size_t capped = 0;  // sequences ended by the length cap
};

inline SampleResult sample_pipeline(const Pipeline& p, std::size_t n, std::uint64_t seed) {
  const std::uint64_t root = derive_seed(seed, "sampling");
  const auto contexts = sample_context(p.copula, n, derive_seed(root, "context"));

  SampleResult result;
  result.sequences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Record context = context_record(p.transforms, contexts, i);
    const auto encoded = encode_context(p.transforms, context);
    const std::uint64_t sequence_seed = derive_seed(root, static_cast<std::uint64_t>(i));
    auto sampled = sample_sequence(p.cpar, encoded, sequence_seed);
    if (!sampled.terminated_by_tau) ++result.capped;
    sampled.framed.key = contexts.keys[i];
    if (p.transforms.index) {
      const auto& starts = p.transforms.index->starts;
      Rng rng(derive_seed(sequence_seed, "index_start"));
      sampled.framed.index_start = starts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(starts.size()) - 1))];
    }
    result.sequences.push_back(unframe(p.transforms, sampled.framed));
  }
  return result;
}

inline RawTable sequences_to_table(const Schema& schema, std::span<const Sequence> sequences) {
  return to_raw_table(schema, assemble_rows(schema, sequences));
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr const char* kModelFormat = "seqsynth-model";
inline constexpr int kModelVersion = 1;

inline nlohmann::json to_json(const Pipeline& p) {
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"metadata", to_json(p.metadata)},
          {"schema", to_json(p.schema)},
          {"transforms", to_json(p.transforms)},
          {"copula", to_json(p.copula)},
          {"cpar", to_json(p.cpar)},
          {"config", to_json(p.config)},
          {"seed", p.config.seed},
          {"real_sequence_count", p.real_sequence_count}};
}

inline Pipeline pipeline_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kModelFormat) {
    throw Error(ErrorCode::ParseError, "not a seqsynth model file");
  }
  if (j.at("version").get<int>() != kModelVersion) {
    throw Error(ErrorCode::VersionMismatch, "model file version " + j.at("version").dump() + ", expected " +
                                                std::to_string(kModelVersion));
  }
  try {
    Pipeline p;
    p.metadata = metadata_from_json(j.at("metadata"));
    p.schema = schema_from_json(j.at("schema"), p.metadata);
    p.transforms = transform_state_from_json(j.at("transforms"));
    p.copula = copula_from_json(j.at("copula"));
    p.cpar = cpar_model_from_json(j.at("cpar"));
    p.config = run_config_from_json(j.at("config"));
    p.real_sequence_count = j.at("real_sequence_count").get<std::size_t>();
    if (p.transforms.steps.size() != p.schema.step_columns.size() ||
        p.transforms.context.size() != p.schema.context_columns.size() ||
        p.cpar.layout.row_width != p.transforms.row_width() || p.cpar.context_width != p.transforms.context_width()) {
      throw Error(ErrorCode::SchemaMismatch, "model file sections disagree about the column layout");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const Pipeline& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << to_json(p).dump(1) << '\n';
}

inline Pipeline load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  return pipeline_from_json(j);
}

}  // namespace seqsynth
