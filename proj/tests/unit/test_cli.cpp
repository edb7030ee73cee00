#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "iball/iball.hpp"

namespace fs = std::filesystem;
using namespace iball;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args, const std::string& env = "") {
  std::string cmd = env + (env.empty() ? "" : " ") + std::string(IBALL_CLI) + " " + args + " 2>&1";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fixture(const std::string& name) { return std::string(IBALL_FIXTURES) + "/" + name; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("iball_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string with(const std::string& sub, const std::string& extra = "") const {
    return sub + " --config " + fixture("cfg.toml") + " --workdir " + dir_.string() + " " + extra;
  }
  Outcome stage(const std::string& sub, const std::string& extra = "") const {
    Outcome r = run(with(sub, extra));
    EXPECT_EQ(r.code, 0) << sub << ": " << r.output;
    return r;
  }

  fs::path dir_;
};

// id -> (domain, actual, predicted) as written in predictions.csv
std::map<std::string, std::tuple<long, double, double>> read_predictions(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "id,domain,actual,predicted");
  std::map<std::string, std::tuple<long, double, double>> out;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string id, d, a, q;
    std::getline(row, id, ',');
    std::getline(row, d, ',');
    std::getline(row, a, ',');
    std::getline(row, q, ',');
    out[id] = {std::stol(d), std::stod(a), std::stod(q)};
  }
  return out;
}

}  // namespace

TEST(CliBasics, HelpExitsZero) {
  Outcome r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("Usage"), std::string::npos);
  for (const char* sub : {"ingest", "partition", "fit", "update", "predict", "bench", "heatmap"})
    EXPECT_NE(r.output.find(sub), std::string::npos) << sub;
  EXPECT_EQ(run("fit --help").code, 0);
}

TEST(CliBasics, UnknownSubcommandExitsOne) {
  EXPECT_EQ(run("frobnicate --config x.toml").code, 1);
  EXPECT_EQ(run("").code, 1);
}

TEST(CliBasics, ConfigIsRequired) { EXPECT_EQ(run("fit").code, 1); }

TEST(CliBasics, MissingConfigExitsThreeNamingThePath) {
  Outcome r = run("fit --config /nonexistent/missing.toml");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("/nonexistent/missing.toml"), std::string::npos);
}

TEST_F(Cli, InvalidValuesExitOne) {
  EXPECT_EQ(run(with("fit", "--lambda -1")).code, 1);
  EXPECT_EQ(run(with("fit", "--method svm")).code, 1);
  EXPECT_EQ(run(with("fit", "--theta abc")).code, 1);
}

TEST_F(Cli, MissingStageInputsExitThree) {
  EXPECT_EQ(run(with("partition")).code, 3);
  EXPECT_EQ(run(with("heatmap")).code, 3);
  Outcome r = run(with("ingest", "--corpus /nonexistent/corpus.txt"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("/nonexistent/corpus.txt"), std::string::npos);
}

TEST_F(Cli, FitBeforePartitionIsValidationError) {
  stage("ingest");
  Outcome r = run(with("fit"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("partition"), std::string::npos);
}

TEST_F(Cli, BenchWritesReports) {
  stage("ingest");
  stage("partition");
  stage("bench");
  std::string csv = slurp(dir_ / "report.csv");
  EXPECT_EQ(csv.rfind("step,n,method,rmse,seconds\n", 0), 0u);
  for (const char* m : {"predict0", "sum3", "kernel-combine", "iball-linear", "iball-fast"})
    EXPECT_NE(csv.find(m), std::string::npos) << m;
  EXPECT_EQ(csv.find("nan"), std::string::npos);
  auto j = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(j["config"]["domains"]["n_d"], 3);
  EXPECT_EQ(j["config"]["model"]["theta"], 0.01);
  EXPECT_GE(j["steps"].size(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "config.resolved.toml"));
}

TEST_F(Cli, PipelineMatchesInProcessRun) {
  stage("ingest");
  stage("partition");
  stage("fit");
  Outcome pr = stage("predict");
  EXPECT_NE(pr.output.find("rmse"), std::string::npos);
  stage("heatmap");

  Config c = load_config(fixture("cfg.toml"));
  std::ifstream corpus(c.corpus);
  auto records = ingest::build_series(ingest::parse_corpus(corpus).entries, c.kind);
  ingest::ExampleOptions opts{c.window(), c.feature_horizon, c.label_horizon, c.normalizer()};
  auto examples = ingest::make_examples(records, opts);
  auto part = domains::make_partition(ingest::feature_matrix(examples), c.knn, c.resolved_domains(), c.seed);
  for (std::size_t s = 0; s < examples.size(); ++s) examples[s].domain = part.assignments[s];
  // The CLI reloads features from examples.csv; counts are integers so nothing is lost.
  auto graph = domains::domain_adjacency(part.centroids, c.resolved_adjacency_sigma());
  auto sched = ingest::split_stream(examples, c.resolved_domains(), c.split());
  auto fast = models::fit_fast_initial(ingest::gather(examples, sched.initial, 3), graph, c.hyperparams());
  for (const auto& b : sched.batches) fast = models::update_fast(fast, ingest::gather(examples, b, 3), graph, c.hyperparams());
  auto test = eval::make_test_set(examples, sched.test, part.centroids);
  Vector pred = models::predict_all(fast, test.x, test.domains);

  auto got = read_predictions(dir_ / "predictions.csv");
  ASSERT_EQ(got.size(), sched.test.size());
  for (std::size_t k = 0; k < sched.test.size(); ++k) {
    const auto& [dom, actual, predicted] = got.at(examples[sched.test[k]].id);
    EXPECT_EQ(dom, test.domains[k]);
    EXPECT_NEAR(actual, test.y(static_cast<Index>(k)), 5e-7);
    EXPECT_NEAR(predicted, pred(static_cast<Index>(k)), 5e-7);
  }

  std::string tsv = slurp(dir_ / "partition.tsv");
  std::istringstream in(tsv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#' && line.rfind("id", 0) != 0) ++rows;
  EXPECT_EQ(rows, examples.size());

  std::string heat = slurp(dir_ / "heatmap.csv");
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 9);
}

TEST_F(Cli, UpdateContinuesTheStream) {
  stage("ingest");
  stage("partition");
  stage("fit", "--max-steps 0");
  stage("update");
  stage("update");
  stage("predict");
  std::string stepped = slurp(dir_ / "predictions.csv");
  stage("fit", "--max-steps 2");
  stage("predict");
  EXPECT_EQ(slurp(dir_ / "predictions.csv"), stepped);

  stage("fit", "--max-steps 0");
  stage("update", "--batches 2");
  stage("predict");
  EXPECT_EQ(slurp(dir_ / "predictions.csv"), stepped);

  Outcome tail = stage("update", "--batches 100");
  EXPECT_NE(tail.output.find("applied"), std::string::npos);
  Outcome done = stage("update");
  EXPECT_NE(done.output.find("no batches left"), std::string::npos);
}

TEST_F(Cli, UpdateRejectsOtherMethods) {
  stage("ingest");
  stage("partition");
  stage("fit", "--method kernel-separate");
  EXPECT_EQ(run(with("update")).code, 1);
}

TEST_F(Cli, EveryMethodFitsAndPredicts) {
  stage("ingest");
  stage("partition");
  for (auto m : models::kAllMethods) {
    stage("fit", "--method " + std::string(models::method_name(m)));
    stage("predict");
  }
}

TEST_F(Cli, ThreadCapDoesNotChangeResults) {
  stage("ingest");
  stage("partition");
  stage("fit");
  stage("predict");
  std::string many = slurp(dir_ / "predictions.csv");
  Outcome r = run(with("predict"), "IBALL_THREADS=1");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir_ / "predictions.csv"), many);
}

TEST_F(Cli, MinMaxScaleCarriesAcrossStages) {
  stage("ingest", "--normalization minmax");
  std::string resolved = slurp(dir_ / "config.resolved.toml");
  Config c = parse_config(resolved);
  EXPECT_GT(c.max_count, 0.0);
  stage("partition", "--normalization minmax");
  stage("fit", "--normalization minmax --method sum3");
  stage("predict", "--normalization minmax");
  EXPECT_EQ(parse_config(slurp(dir_ / "config.resolved.toml")).max_count, c.max_count);
}

TEST_F(Cli, SingularSystemExitsTwo) {
  // Every sample identical: X'X is rank one and lambda is negligible.
  std::ofstream out(dir_ / "examples.csv");
  out << "id,f1,f2,f3,label,year,domain\n";
  for (int k = 0; k < 30; ++k) out << "s" << 100 + k << ",1.000000,1.000000,1.000000,1.000000," << 1990 + k << "," << k % 3 << "\n";
  out.close();
  Outcome r = run(with("fit", "--method linear-separate --lambda 1e-300"));
  EXPECT_EQ(r.code, 2) << r.output;
}
