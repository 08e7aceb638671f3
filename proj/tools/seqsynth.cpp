// seqsynth command-line tool: fit, sample, evaluate, experiment.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "seqsynth/seqsynth.hpp"

namespace {

struct Options {
  std::string data, metadata, model, out, config, synthetic;
  std::optional<std::size_t> n, epochs;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

seqsynth::RunConfig load_config(const Options& o) {
  seqsynth::RunConfig config;
  if (!o.config.empty()) config = seqsynth::read_run_config(o.config);
  if (o.epochs) config.epochs = *o.epochs;
  if (o.seed) config.seed = *o.seed;
  if (o.n) config.sample_count = *o.n;
  return config;
}

seqsynth::EpochCallback epoch_printer(const Options& o) {
  if (o.quiet) return {};
  return [](std::size_t epoch, double loss) { std::cout << "epoch " << epoch << " loss " << seqsynth::format_double(loss) << '\n'; };
}

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw CLI::RequiredError(std::string(command) + " needs " + flag);
}

int cmd_fit(const Options& o) {
  require(o.data, "--data", "fit");
  require(o.metadata, "--metadata", "fit");
  require(o.model, "--model", "fit");
  const auto config = load_config(o);
  const auto dataset = seqsynth::validate(seqsynth::read_csv_file(o.data), seqsynth::read_metadata_file(o.metadata));
  const auto pipeline = seqsynth::fit_pipeline(dataset, config, epoch_printer(o));
  seqsynth::save_model(o.model, pipeline);
  std::cout << "wrote " << o.model << '\n';
  return 0;
}

int cmd_sample(const Options& o) {
  require(o.model, "--model", "sample");
  require(o.out, "--out", "sample");
  const auto pipeline = seqsynth::load_model(o.model);
  const std::size_t n = o.n ? *o.n : pipeline.real_sequence_count;
  const auto seed = o.seed ? *o.seed : pipeline.config.seed;
  const auto result = seqsynth::sample_pipeline(pipeline, n, seed);
  seqsynth::write_csv_file(o.out, seqsynth::sequences_to_table(pipeline.schema, result.sequences));
  std::cout << "wrote " << result.sequences.size() << " sequences to " << o.out << " (" << result.capped
            << " ended by the length cap)\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  require(o.data, "--data", "evaluate");
  require(o.synthetic, "--synthetic", "evaluate");
  require(o.metadata, "--metadata", "evaluate");
  const auto config = load_config(o);
  const auto report = seqsynth::evaluate_tables(seqsynth::read_csv_file(o.data), seqsynth::read_csv_file(o.synthetic),
                                                seqsynth::read_metadata_file(o.metadata), config.max_lag);
  std::cout << seqsynth::format_report(report);
  if (!o.out.empty()) seqsynth::write_text_file(o.out, seqsynth::to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_experiment(const Options& o) {
  require(o.out, "--out", "experiment");
  if (o.data.empty() != o.metadata.empty()) throw CLI::ValidationError("--data and --metadata go together");
  const auto config = load_config(o);
  seqsynth::ExperimentInput input;
  input.data_path = o.data;
  input.metadata_path = o.metadata;
  const auto result = seqsynth::run_experiment(config, input, o.out, epoch_printer(o));
  std::cout << seqsynth::format_report(result.report);
  std::cout << result.synthetic_sequences << " synthetic sequences, " << result.capped
            << " ended by the length cap; bundle in " << o.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit, sample and evaluate synthetic multi-sequence tables"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON run config");
    cmd->add_option("--seed", o.seed, "root random seed");
  };

  auto* fit = app.add_subcommand("fit", "train a model on a CSV table");
  fit->add_option("--data", o.data, "input CSV");
  fit->add_option("--metadata", o.metadata, "metadata JSON");
  fit->add_option("--model", o.model, "model file to write");
  fit->add_option("--epochs", o.epochs, "training epochs");
  fit->add_flag("--quiet", o.quiet, "do not print per-epoch losses");
  add_common(fit);

  auto* sample = app.add_subcommand("sample", "draw synthetic sequences from a model");
  sample->add_option("--model", o.model, "model file");
  sample->add_option("--out", o.out, "CSV to write");
  sample->add_option("--n", o.n, "number of sequences (default: the real count)");
  add_common(sample);

  auto* evaluate = app.add_subcommand("evaluate", "score a synthetic table against the real one");
  evaluate->add_option("--data", o.data, "real CSV");
  evaluate->add_option("--synthetic", o.synthetic, "synthetic CSV");
  evaluate->add_option("--metadata", o.metadata, "metadata JSON");
  evaluate->add_option("--out", o.out, "MSAS JSON to write");
  add_common(evaluate);

  auto* experiment = app.add_subcommand("experiment", "fit, sample and evaluate end to end");
  experiment->add_option("--data", o.data, "input CSV (default: bundled drift generator)");
  experiment->add_option("--metadata", o.metadata, "metadata JSON");
  experiment->add_option("--out", o.out, "output directory");
  experiment->add_option("--n", o.n, "number of sequences to sample");
  experiment->add_option("--epochs", o.epochs, "training epochs");
  experiment->add_flag("--quiet", o.quiet, "do not print per-epoch losses");
  add_common(experiment);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*sample) return cmd_sample(o);
    if (*evaluate) return cmd_evaluate(o);
    return cmd_experiment(o);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const seqsynth::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return seqsynth::is_numeric_failure(e.code()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
