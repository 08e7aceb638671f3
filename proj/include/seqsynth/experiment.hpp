#pragma once

// Bundled "drift" data generator and the fit -> sample -> evaluate run.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqsynth/csv.hpp"
#include "seqsynth/msas.hpp"
#include "seqsynth/pipeline.hpp"
#include "seqsynth/random.hpp"
#include "seqsynth/table.hpp"

namespace seqsynth {

struct DriftOptions {
  std::size_t sequences = 50;
  std::size_t min_length = 15;
  std::size_t max_length = 40;
  double missing_rate = 0.03;  // volume cells left empty
  std::uint64_t seed = 7;
};

struct GeneratedData {
  RawTable table;
  Metadata metadata;
};

/// Fifty independent sequences with a per-sequence segment and base level.
///
///   level_t  = base + 0.3 t + e_t,  e_t = 0.8 e_{t-1} + N(0, 1)
///   volume_t = 100 + v_t,           v_t = 0.7 v_{t-1} + N(0, 10^2)
///   phase    = open on the first row, closed on the last, active otherwise
///   date     advances one day per row, three days with probability 0.1
inline GeneratedData generate_drift(const DriftOptions& options = {}) {
  GeneratedData out;
  out.metadata.sequence_key = "sequence_id";
  out.metadata.sequence_index = "date";
  out.metadata.context_columns = {"segment", "base"};
  out.metadata.column_types = {{"segment", ColumnKind::categorical}, {"base", ColumnKind::continuous},
                               {"date", ColumnKind::datetime},       {"level", ColumnKind::continuous},
                               {"volume", ColumnKind::continuous},   {"phase", ColumnKind::categorical}};
  out.table.header = {"sequence_id", "segment", "base", "date", "level", "volume", "phase"};

  const std::vector<std::string> segments{"alpha", "beta", "gamma"};
  const std::vector<double> segment_weights{0.5, 0.3, 0.2};
  const auto first_day = detail::days_from_civil(2021, 1, 4);
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };

  Rng rng(derive_seed(options.seed, "drift"));
  for (std::size_t i = 0; i < options.sequences; ++i) {
    char key[16];
    std::snprintf(key, sizeof key, "S%03zu", i);
    const std::size_t segment = rng.categorical(segment_weights);
    const double base = 40.0 + 20.0 * static_cast<double>(segment) + 10.0 * rng.uniform();
    const auto length = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(options.min_length),
                                                                  static_cast<std::int64_t>(options.max_length)));
    auto day = first_day + rng.uniform_int(0, 60);
    double e = rng.normal(0.0, 1.0 / std::sqrt(1.0 - 0.64));
    double v = rng.normal(0.0, 10.0 / std::sqrt(1.0 - 0.49));
    for (std::size_t t = 0; t < length; ++t) {
      if (t > 0) {
        day += rng.bernoulli(0.1) ? 3 : 1;
        e = 0.8 * e + rng.normal();
        v = 0.7 * v + rng.normal(0.0, 10.0);
      }
      const double level = base + 0.3 * static_cast<double>(t) + e;
      const bool volume_missing = rng.bernoulli(options.missing_rate);
      const char* phase = t == 0 ? "open" : t + 1 == length ? "closed" : "active";
      out.table.rows.push_back({key, segments[segment], fixed(base), format_datetime(static_cast<double>(day) * 86400.0, true),
                                fixed(level), volume_missing ? std::string() : fixed(100.0 + v), phase});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Reads both tables against the metadata and scores the synthetic one.
inline MsasReport evaluate_tables(const RawTable& real, const RawTable& synthetic, const Metadata& metadata,
                                  std::size_t max_lag = 25) {
  if (real.header != synthetic.header) {
    throw Error(ErrorCode::SchemaMismatch, "real and synthetic tables have different columns");
  }
  const auto real_data = validate(real, metadata);
  const auto synthetic_data = validate(synthetic, metadata);
  const auto real_sequences = partition_sequences(real_data);
  const auto synthetic_sequences = partition_sequences(synthetic_data);
  return evaluate_msas(real_data.schema, real_sequences, synthetic_sequences, max_lag);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

struct ExperimentInput {
  std::string data_path;      // empty: use the drift generator
  std::string metadata_path;
  DriftOptions drift;
};

struct ExperimentResult {
  MsasReport report;
  std::size_t real_sequences = 0;
  std::size_t synthetic_sequences = 0;
  std::size_t capped = 0;
  nlohmann::json manifest;
};

/// fit -> sample -> evaluate, writing real.csv, metadata.json, model.json,
/// synthetic.csv, msas.json, msas.txt and manifest.json into out_dir.
inline ExperimentResult run_experiment(const RunConfig& config, const ExperimentInput& input,
                                       const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {}) {
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };
  std::filesystem::create_directories(out_dir);

  RawTable real;
  Metadata metadata;
  if (input.data_path.empty()) {
    auto generated = generate_drift(input.drift);
    real = std::move(generated.table);
    metadata = std::move(generated.metadata);
  } else {
    real = read_csv_file(input.data_path);
    metadata = read_metadata_file(input.metadata_path);
  }
  write_csv_file((out_dir / "real.csv").string(), real);
  write_text_file(out_dir / "metadata.json", to_json(metadata).dump(2) + "\n");

  ExperimentResult result;
  nlohmann::json timings;

  auto t0 = clock::now();
  const auto dataset = validate(real, metadata);
  const auto pipeline = fit_pipeline(dataset, config, on_epoch);
  timings["fit_seconds"] = seconds_since(t0);
  save_model((out_dir / "model.json").string(), pipeline);
  result.real_sequences = pipeline.real_sequence_count;

  t0 = clock::now();
  const std::size_t n = config.sample_count > 0 ? config.sample_count : pipeline.real_sequence_count;
  const auto sampled = sample_pipeline(pipeline, n, config.seed);
  const auto synthetic = sequences_to_table(pipeline.schema, sampled.sequences);
  write_csv_file((out_dir / "synthetic.csv").string(), synthetic);
  timings["sample_seconds"] = seconds_since(t0);
  result.synthetic_sequences = sampled.sequences.size();
  result.capped = sampled.capped;

  t0 = clock::now();
  result.report = evaluate_tables(real, read_csv_file((out_dir / "synthetic.csv").string()), metadata, config.max_lag);
  timings["evaluate_seconds"] = seconds_since(t0);
  write_text_file(out_dir / "msas.json", to_json(result.report).dump(2) + "\n");
  write_text_file(out_dir / "msas.txt", format_report(result.report));

  const std::uint64_t root = config.seed;
  result.manifest = {
      {"config", to_json(config)},
      {"input", input.data_path.empty() ? nlohmann::json{{"generator", "drift"},
                                                         {"sequences", input.drift.sequences},
                                                         {"min_length", input.drift.min_length},
                                                         {"max_length", input.drift.max_length},
                                                         {"missing_rate", input.drift.missing_rate},
                                                         {"seed", input.drift.seed}}
                                        : nlohmann::json{{"data", input.data_path}, {"metadata", input.metadata_path}}},
      {"seeds",
       {{"root", root},
        {"init", derive_seed(root, "init")},
        {"training", derive_seed(root, "training")},
        {"copula", derive_seed(root, "copula")},
        {"sampling", derive_seed(root, "sampling")}}},
      {"real_sequences", result.real_sequences},
      {"synthetic_sequences", result.synthetic_sequences},
      {"capped_sequences", result.capped},
      {"wall_times", timings}};
  write_text_file(out_dir / "manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

}  // namespace seqsynth
