#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "seqsynth/experiment.hpp"
#include "seqsynth/pipeline.hpp"

using namespace seqsynth;

namespace {

RunConfig quick_config() {
  RunConfig c;
  c.epochs = 3;
  c.hidden = 8;
  c.seed = 11;
  return c;
}

Dataset small_drift() {
  DriftOptions o;
  o.sequences = 12;
  o.min_length = 4;
  o.max_length = 8;
  const auto g = generate_drift(o);
  return validate(g.table, g.metadata);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("seqsynth_pipeline_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(ContextTable, RoundTripsEveryRow) {
  Metadata m;
  m.sequence_key = "id";
  m.context_columns = {"g", "n", "x"};
  m.column_types = {{"g", ColumnKind::categorical}, {"n", ColumnKind::discrete},
                    {"x", ColumnKind::continuous},  {"v", ColumnKind::continuous}};
  const auto ds = validate(parse_csv("id,g,n,x,v\n"
                                     "a,p,3,0.5,1\n"
                                     "b,,7,,2\n"
                                     "c,q,5,1.25,3\n"),
                           m);
  const auto seqs = partition_sequences(ds);
  const auto state = fit(ds);
  const auto table = build_context_table(state, seqs);
  // g, n, x and the missing flag for x.
  ASSERT_EQ(table.columns.size(), 4u);
  EXPECT_EQ(table.columns[3].name, "x#missing");
  for (std::size_t i = 0; i < seqs.size(); ++i) EXPECT_EQ(context_record(state, table, i), seqs[i].context);
}

TEST(Pipeline, SavedModelSamplesLikeTheFittedOne) {
  const auto p = fit_pipeline(small_drift(), quick_config());
  const auto dir = scratch("save");
  save_model((dir / "model.json").string(), p);
  const auto back = load_model((dir / "model.json").string());
  const auto a = sample_pipeline(p, 10, 5);
  const auto b = sample_pipeline(back, 10, 5);
  EXPECT_EQ(a.sequences, b.sequences);
  EXPECT_EQ(to_json(back).dump(), to_json(p).dump());
}

TEST(Pipeline, VersionMismatch) {
  auto j = to_json(fit_pipeline(small_drift(), quick_config()));
  j["version"] = 99;
  try {
    pipeline_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
  }
  j["format"] = "other";
  EXPECT_THROW(pipeline_from_json(j), Error);
}

TEST(Pipeline, SampledTablePreservesSchemaAndUsesFreshKeys) {
  const auto ds = small_drift();
  const auto p = fit_pipeline(ds, quick_config());
  const auto sampled = sample_pipeline(p, 30, 2);
  ASSERT_EQ(sampled.sequences.size(), 30u);
  const auto table = sequences_to_table(p.schema, sampled.sequences);
  EXPECT_EQ(table.header, to_raw_table(ds.schema, ds.rows).header);
  // The sampled table validates against the same metadata.
  const auto again = validate(table, ds.metadata);
  std::set<std::string> real_keys;
  for (const auto& s : partition_sequences(ds)) real_keys.insert(s.key);
  for (const auto& s : partition_sequences(again)) EXPECT_FALSE(real_keys.count(s.key)) << s.key;
  EXPECT_EQ(partition_sequences(again).size(), 30u);
}

TEST(Pipeline, ZeroSamplesGiveHeaderOnlyTable) {
  const auto p = fit_pipeline(small_drift(), quick_config());
  const auto sampled = sample_pipeline(p, 0, 1);
  EXPECT_TRUE(sampled.sequences.empty());
  const auto table = sequences_to_table(p.schema, sampled.sequences);
  EXPECT_EQ(table.header.size(), 7u);
  EXPECT_TRUE(table.rows.empty());
}

TEST(Pipeline, FitAndSampleAreDeterministic) {
  const auto ds = small_drift();
  const auto a = fit_pipeline(ds, quick_config());
  const auto b = fit_pipeline(ds, quick_config());
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(sample_pipeline(a, 8, 3).sequences, sample_pipeline(b, 8, 3).sequences);
  EXPECT_NE(sample_pipeline(a, 8, 3).sequences, sample_pipeline(a, 8, 4).sequences);
}

TEST(Pipeline, EpochCallbackSeesEveryEpoch) {
  std::vector<std::size_t> epochs;
  fit_pipeline(small_drift(), quick_config(), [&](std::size_t e, double loss) {
    epochs.push_back(e);
    EXPECT_TRUE(std::isfinite(loss));
  });
  EXPECT_EQ(epochs, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(RunConfig, JsonRoundTripAndUnknownKeys) {
  RunConfig c = quick_config();
  c.mean_activation = MeanActivation::identity;
  c.batches_per_epoch = 4;
  EXPECT_EQ(to_json(run_config_from_json(to_json(c))), to_json(c));
  const auto partial = run_config_from_json(nlohmann::json{{"epochs", 7}});
  EXPECT_EQ(partial.epochs, 7u);
  EXPECT_EQ(partial.hidden, 64u);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"epoch", 7}}), Error);
}

TEST(Experiment, WritesAllArtifacts) {
  RunConfig c = quick_config();
  c.max_lag = 3;
  ExperimentInput input;
  input.drift.sequences = 10;
  input.drift.min_length = 4;
  input.drift.max_length = 6;
  const auto dir = scratch("experiment");
  const auto result = run_experiment(c, input, dir);
  for (const char* f : {"real.csv", "metadata.json", "model.json", "synthetic.csv", "msas.json", "msas.txt",
                        "manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(result.real_sequences, 10u);
  EXPECT_EQ(result.synthetic_sequences, 10u);
  EXPECT_EQ(result.report.entries.size(), 7u);
}

TEST(Experiment, EvaluateTablesRejectsDifferentHeaders) {
  const auto g = generate_drift();
  auto other = g.table;
  other.header.back() = "stage";
  try {
    evaluate_tables(g.table, other, g.metadata);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
  }
}
