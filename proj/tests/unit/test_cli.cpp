#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "nnfuse/dataset.hpp"

namespace fs = std::filesystem;

namespace nnfuse {
namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nnfuse_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" + NNFUSE_CLI_PATH + "' " + args +
                            " >stdout.txt 2>stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string file(const std::string& name) const { return read_file(dir_ / name); }
  bool exists(const std::string& name) const { return fs::exists(dir_ / name); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  void generate_pair() {
    ASSERT_EQ(run("gen --households 300 --seed 1 --missingness 0.9 --out-full src_full.enc --out-missing src.enc"), 0);
    ASSERT_EQ(run("gen --households 80 --seed 2 --missingness 0 --survey-id GT --out-full cand.enc --out-missing cand_dup.enc"), 0);
  }

  fs::path dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("impute --bogus"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(Cli, MissingSeedIsUsageError) {
  EXPECT_EQ(run("gen --households 10 --out-full a.enc --out-missing b.enc"), 2);
  EXPECT_FALSE(exists("a.enc"));
  generate_pair();
  EXPECT_EQ(run("impute --source src.enc --candidate cand.enc --tie-break random --out r.csv"), 2);
}

TEST_F(Cli, MissingInputIsIoError) {
  EXPECT_EQ(run("describe --data nope.enc"), 3);
  EXPECT_NE(file("stderr.txt").find("nope.enc"), std::string::npos);
}

TEST_F(Cli, DictionaryMismatchWritesNothing) {
  generate_pair();
  auto text = file("cand.enc");
  // Re-serialize the candidate under a different feature layout.
  auto ds = parse_dataset(text, "cand");
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (const auto& g : ds.dictionary.groups()) groups.emplace_back(g.name, g.categories);
  std::swap(groups[0].second[0], groups[0].second[1]);
  ds.dictionary = FeatureDictionary::from_groups(groups);
  write("other.enc", serialize_dataset(ds));
  EXPECT_EQ(run("impute --source src.enc --candidate other.enc --out r.csv"), 7);
  EXPECT_FALSE(exists("r.csv"));
  EXPECT_FALSE(exists("r_households.csv"));
  EXPECT_FALSE(exists("r.csv.manifest.json"));
}

TEST_F(Cli, IngestAndDescribe) {
  write("spec.json", R"({"version": 1,
    "surveys": {"T": {"household_id": "hh", "person_id": "pid", "day_id": "day"}},
    "target": {"sources": {"T": {"table": "day", "columns": ["n"]}}},
    "features": [{"name": "Sex", "categories": ["F", "M"],
                  "sources": {"T": {"table": "person", "column": "sex", "values": {"f": "F", "m": "M"}}}}]})");
  write("h.csv", "hh\n1\n2\n");
  write("p.csv", "hh,pid,sex\n1,1,f\n2,1,m\n");
  write("d.csv", "hh,pid,day,n\n1,1,1,2\n2,1,1,\n");
  ASSERT_EQ(run("ingest --households h.csv --persons p.csv --days d.csv --spec spec.json --survey-id T --year 2017 --out t.enc"), 0);
  EXPECT_TRUE(exists("t.enc.manifest.json"));
  ASSERT_EQ(run("describe --data t.enc --out t.json --totals-out t_totals.csv"), 0);
  const auto j = nlohmann::json::parse(file("t.json"));
  EXPECT_EQ(j["samples"], 2);
  EXPECT_EQ(j["missing_percent"], 50);
  EXPECT_EQ(file("t_totals.csv"), "household_id,y_total\n1,2\n");

  write("p_bad.csv", "hh,pid,sex\n1,1,x\n2,1,m\n");
  EXPECT_EQ(run("ingest --households h.csv --persons p_bad.csv --days d.csv --spec spec.json --survey-id T --year 2017 --out bad.enc"), 6);
  write("bad_spec.json", R"({"surveys": {}})");
  EXPECT_EQ(run("ingest --households h.csv --persons p.csv --days d.csv --spec bad_spec.json --survey-id T --year 2017 --out bad.enc"), 5);
  EXPECT_FALSE(exists("bad.enc"));
}

TEST_F(Cli, FullPipelineIsReproducible) {
  generate_pair();
  ASSERT_EQ(run("describe --data src_full.enc --totals-out truth.csv --out d.json"), 0);
  ASSERT_EQ(run("impute --source src.enc --candidate cand.enc --out imp.csv"), 0);
  ASSERT_EQ(run("impute --source src.enc --method mean --out base.csv"), 0);
  ASSERT_EQ(run("evaluate --imputed imp_households.csv --truth truth.csv --cutoffs 10,20 --seed 3 --baseline base_households.csv --out eval.json"), 0);
  ASSERT_EQ(run("spike --a truth.csv --b imp_households.csv --n 100 --seed 4 --out spike.json"), 0);
  ASSERT_EQ(run("attribute --data src.enc --candidate cand.enc --limit 20 --seed 5 --out attr.json"), 0);
  ASSERT_EQ(run("synthesize --source2 src.enc --source1 src_full.enc --candidate cand.enc --out syn.enc"), 0);
  for (const char* f : {"imp.csv", "imp_households.csv", "eval.json", "spike.json", "attr.json", "syn.enc", "syn_provenance.csv"}) {
    EXPECT_TRUE(exists(f)) << f;
  }
  const auto manifest = nlohmann::json::parse(file("eval.json.manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "evaluate");
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_EQ(manifest["inputs"].size(), 3u);
  EXPECT_EQ(manifest["inputs"][0]["sha256"].get<std::string>().size(), 64u);

  const auto eval = file("eval.json");
  const auto attr = file("attr.json");
  ASSERT_EQ(run("evaluate --imputed imp_households.csv --truth truth.csv --cutoffs 10,20 --seed 3 --baseline base_households.csv --out eval.json --threads 4"), 0);
  ASSERT_EQ(run("attribute --data src.enc --candidate cand.enc --limit 20 --seed 5 --out attr.json --threads 4"), 0);
  EXPECT_EQ(file("eval.json"), eval);
  EXPECT_EQ(file("attr.json"), attr);
}

TEST_F(Cli, ConfigFileSuppliesOptions) {
  generate_pair();
  ASSERT_EQ(run("describe --data src_full.enc --totals-out truth.csv"), 0);
  write("eval.toml", "[evaluate]\nimputed = \"truth.csv\"\ntruth = \"truth.csv\"\ncutoffs = \"5\"\nseed = 2\nout = \"e.json\"\n");
  ASSERT_EQ(run("evaluate --config eval.toml"), 0);
  const auto j = nlohmann::json::parse(file("e.json"));
  EXPECT_EQ(j["per_cutoff"][0]["mse_mean"], 0.0);
}

TEST_F(Cli, EvaluateRejectsOversizedSubset) {
  generate_pair();
  ASSERT_EQ(run("describe --data src_full.enc --totals-out truth.csv"), 0);
  EXPECT_EQ(run("evaluate --imputed truth.csv --truth truth.csv --n 100000 --seed 1 --out e.json"), 11);
}

}  // namespace
}  // namespace nnfuse
