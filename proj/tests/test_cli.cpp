#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "seqsynth/csv.hpp"
#include "seqsynth/experiment.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "seqsynth_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string command = std::string(SEQSYNTH_CLI) + " " + args + " > " + (work_dir() / "out.txt").string() + " 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

void write(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

std::string read(const std::string& name) {
  std::ifstream in(path(name));
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_drift() {
  seqsynth::DriftOptions o;
  o.sequences = 8;
  o.min_length = 3;
  o.max_length = 6;
  const auto g = seqsynth::generate_drift(o);
  seqsynth::write_csv_file(path("real.csv"), g.table);
  write("metadata.json", seqsynth::to_json(g.metadata).dump());
}

}  // namespace

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("bogus"), 1);
  EXPECT_EQ(run("fit --data x.csv"), 1);
  EXPECT_EQ(run("sample --model m.json --n notanumber --out o.csv"), 1);
}

TEST(Cli, HelpExitsWithZero) { EXPECT_EQ(run("--help"), 0); }

TEST(Cli, MissingMetadataFieldIsADataError) {
  write("bad.csv", "id,v\na,1\n");
  write("bad_meta.json", R"({"column_types": {"v": "continuous"}})");
  EXPECT_EQ(run("fit --data " + path("bad.csv") + " --metadata " + path("bad_meta.json") + " --model " +
                path("bad_model.json")),
            2);
  EXPECT_EQ(run("fit --data " + path("nothing.csv") + " --metadata " + path("bad_meta.json") + " --model " +
                path("bad_model.json")),
            2);
}

TEST(Cli, FitSampleEvaluateFlow) {
  write_drift();
  ASSERT_EQ(run("fit --data " + path("real.csv") + " --metadata " + path("metadata.json") + " --model " +
                path("model.json") + " --epochs 2 --seed 3"),
            0)
      << read("out.txt");
  EXPECT_NE(read("out.txt").find("epoch 2 loss"), std::string::npos);
  ASSERT_EQ(run("sample --model " + path("model.json") + " --out " + path("synthetic.csv") + " --n 5"), 0)
      << read("out.txt");
  const auto synthetic = seqsynth::read_csv_file(path("synthetic.csv"));
  EXPECT_EQ(synthetic.header, seqsynth::read_csv_file(path("real.csv")).header);
  ASSERT_EQ(run("evaluate --data " + path("real.csv") + " --synthetic " + path("synthetic.csv") + " --metadata " +
                path("metadata.json") + " --out " + path("msas.json")),
            0)
      << read("out.txt");
  EXPECT_NE(read("out.txt").find("Sequence Length"), std::string::npos);
  EXPECT_NE(read("msas.json").find("inter_row_diff_average"), std::string::npos);
}

TEST(Cli, SampleFromCorruptModelIsADataError) {
  write("corrupt.json", "{\"format\": \"seqsynth-model\", \"version\": 1}");
  EXPECT_EQ(run("sample --model " + path("corrupt.json") + " --out " + path("x.csv")), 2);
}
