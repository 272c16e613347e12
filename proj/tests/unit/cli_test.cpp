#include <gtest/gtest.h>

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../common/process.hpp"
#include "support.hpp"
#include "thmsearch/detail/io.hpp"

namespace {

class Cli : public ::testing::Test {
 protected:
  process::Result run(std::vector<std::string> args) {
    args.insert(args.begin(), THMSEARCH_CLI);
    return process::run(args, dir_ / "stderr.txt");
  }
  process::Result stage(const std::string& name, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{name, "--out", work(), "--mock-providers"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }
  std::string work() const { return (dir_ / "work").string(); }
  std::string corpus() const { return testing_support::fixture("mini_corpus.jsonl").string(); }
  void build() {
    ASSERT_EQ(run({"ingest", "--out", work(), "--corpus", corpus()}).exit_code, 0);
    ASSERT_EQ(stage("informalize").exit_code, 0);
    ASSERT_EQ(stage("embed").exit_code, 0);
    ASSERT_EQ(run({"index", "--out", work()}).exit_code, 0);
  }

  testing_support::TempDir dir_{"cli"};
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).exit_code, 0);
  EXPECT_EQ(run({}).exit_code, 1);
  EXPECT_EQ(run({"frobnicate"}).exit_code, 1);
  EXPECT_EQ(run({"ingest"}).exit_code, 1);
  EXPECT_EQ(run({"search", "x", "--k", "0", "--out", work()}).exit_code, 1);
  EXPECT_EQ(run({"ingest", "--out", work(), "--corpus", corpus(), "--config", (dir_ / "none.json").string()}).exit_code,
            1);
}

TEST_F(Cli, IngestReportsAndStrictFails) {
  auto ok = run({"ingest", "--out", work(), "--corpus", corpus()});
  EXPECT_EQ(ok.exit_code, 0) << ok.err;
  EXPECT_NE(ok.out.find("ingested 9 records"), std::string::npos) << ok.out;
  auto src = dir_ / "bad.jsonl";
  thmsearch::detail::write_file_atomic(src, thmsearch::detail::read_file(corpus()) + "{\"id\": 3}\n");
  auto lenient = run({"ingest", "--out", work(), "--corpus", src.string()});
  EXPECT_EQ(lenient.exit_code, 0);
  EXPECT_NE(lenient.err.find("line 15"), std::string::npos) << lenient.err;
  EXPECT_EQ(run({"ingest", "--out", work(), "--corpus", src.string(), "--strict"}).exit_code, 2);
  EXPECT_EQ(run({"ingest", "--out", work(), "--corpus", (dir_ / "missing").string()}).exit_code, 2);
}

TEST_F(Cli, OutOfOrderStageIsDataError) {
  auto r = stage("embed");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("ingest"), std::string::npos) << r.err;
}

TEST_F(Cli, PipelineSearchAndBench) {
  build();
  auto text = run({"search", "--out", work(), "--mock-providers", "infinitely many primes", "--k", "3"});
  EXPECT_EQ(text.exit_code, 0) << text.err;
  EXPECT_NE(text.out.find("   1  "), std::string::npos) << text.out;
  EXPECT_NE(text.out.find("Nat.exists_infinite_primes"), std::string::npos) << text.out;

  auto a = run({"search", "--out", work(), "--mock-providers", "--json", "modus tollens"});
  auto b = run({"search", "--out", work(), "--mock-providers", "--json", "modus tollens"});
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["results"].size(), 9u);

  auto bench = run({"bench", "--out", work(), "--mock-providers", "--benchmark",
                    testing_support::fixture("sample_benchmark.json").string(), "--engine", "bm25", "--json"});
  ASSERT_EQ(bench.exit_code, 0) << bench.err;
  auto report = nlohmann::json::parse(bench.out);
  EXPECT_EQ(report["engine"], "bm25");
  EXPECT_EQ(report["query_count"], 8);

  auto runfile = run({"bench", "--out", work(), "--benchmark", testing_support::fixture("sample_benchmark.json").string(),
                      "--engine", "runfile", "--run", testing_support::fixture("sample_run.jsonl").string()});
  EXPECT_EQ(runfile.exit_code, 0) << runfile.err;
  EXPECT_NE(runfile.out.find("0.927"), std::string::npos) << runfile.out;
  EXPECT_EQ(run({"bench", "--out", work(), "--benchmark", testing_support::fixture("sample_benchmark.json").string(),
                 "--engine", "runfile"})
                .exit_code,
            1);
}

TEST_F(Cli, ProviderOutageIsExitThree) {
  ASSERT_EQ(run({"ingest", "--out", work(), "--corpus", corpus()}).exit_code, 0);
  auto cfg = dir_ / "down.json";
  thmsearch::detail::write_file_atomic(
      cfg, R"({"providers": {"informalization": {"kind": "http", "endpoint": "http://127.0.0.1:1/gen",
                                                  "model": "m", "timeout_ms": 500}}})");
  auto r = run({"informalize", "--out", work(), "--config", cfg.string()});
  EXPECT_EQ(r.exit_code, 3) << r.err;
}

TEST_F(Cli, SearchWithMismatchedEmbedderIsDataError) {
  build();
  auto cfg = dir_ / "dim.json";
  thmsearch::detail::write_file_atomic(cfg, R"({"providers": {"embedding": {"kind": "mock", "dim": 32}}})");
  EXPECT_EQ(run({"search", "--out", work(), "--config", cfg.string(), "x"}).exit_code, 2);
}

TEST_F(Cli, SynthIsDeterministic) {
  auto a = dir_ / "a.jsonl";
  auto b = dir_ / "b.jsonl";
  ASSERT_EQ(run({"synth", "--count", "50", "--output", a.string()}).exit_code, 0);
  ASSERT_EQ(run({"synth", "--count", "50", "--output", b.string()}).exit_code, 0);
  EXPECT_EQ(thmsearch::detail::read_file(a), thmsearch::detail::read_file(b));
  EXPECT_EQ(run({"synth", "--count", "0", "--output", a.string()}).exit_code, 1);
}
