#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "../common/metric_properties.hpp"
#include "../common/oracle_values.hpp"
#include "support.hpp"
#include "thmsearch/benchmark.hpp"
#include "thmsearch/bm25.hpp"
#include "thmsearch/corpus.hpp"

using namespace thmsearch;
using namespace thmsearch::bench;

TEST(Metrics, OracleCases) {
  const RelevanceScale scale;
  for (const auto& c : oracle::metric_cases()) {
    auto m = oracle::materialize(c);
    SCOPED_TRACE(m.ranking.size());
    EXPECT_NEAR(dcg_at_k(m.ranking, m.labels, scale, c.k), c.dcg, 1e-9);
    EXPECT_NEAR(ndcg_at_k(m.ranking, m.labels, scale, c.k, IdcgMode::retrieved), c.ndcg_retrieved, 1e-9);
    EXPECT_NEAR(ndcg_at_k(m.ranking, m.labels, scale, c.k, IdcgMode::global), c.ndcg_global, 1e-9);
    EXPECT_NEAR(precision_at_k(m.ranking, m.labels, c.k), c.precision, 1e-12);
    EXPECT_NEAR(recall_at_k(m.ranking, m.labels, c.k), c.recall, 1e-12);
  }
}

TEST(Metrics, HandComputedExample) {
  RelevanceLabels labels{{"a", 2}, {"b", 1}};
  std::vector<std::string> r{"x", "a", "b"};
  EXPECT_NEAR(dcg_at_k(r, labels, {}, 3), 1.0 / std::log2(3.0) + 0.3 / 2.0, 1e-12);
  EXPECT_NEAR(precision_at_k(r, labels, 10), 0.1, 1e-12);
  EXPECT_EQ(recall_at_k(r, labels, 1), 0.0);
  EXPECT_EQ(recall_at_k(r, labels, 2), 1.0);
}

TEST(Metrics, DegenerateInputs) {
  RelevanceLabels labels{{"a", 2}};
  std::vector<std::string> empty;
  EXPECT_EQ(ndcg_at_k(empty, labels, {}, 20), 0.0);
  EXPECT_EQ(precision_at_k(empty, labels, 10), 0.0);
  EXPECT_EQ(recall_at_k(empty, {}, 10), 0.0);
  EXPECT_THROW(precision_at_k(empty, labels, 0), UsageError);
  EXPECT_THROW(ndcg_at_k(empty, labels, {}, 0), UsageError);
  RelevanceScale binary{1.0, 0.0};
  std::vector<std::string> r{"b"};
  EXPECT_EQ(ndcg_at_k(r, {{"a", 2}, {"b", 1}}, binary, 5), 0.0);
}

TEST(Metrics, RandomizedProperties) {
  EXPECT_EQ(properties::check_metric_properties(2000, 20240601), "");
}

TEST(BenchmarkFile, SampleFixtureParses) {
  auto groups = load_benchmark(testing_support::fixture("sample_benchmark.json"));
  ASSERT_EQ(groups.size(), 2u);
  for (const auto& g : groups) {
    EXPECT_EQ(g.queries.size(), 4u);
    EXPECT_GE(g.exact_match_count(), 1u);
  }
  EXPECT_EQ(groups[1].labels.at("mt"), 2);
  EXPECT_EQ(groups[1].labels.at("not_not"), 1);
  auto again = parse_benchmark(to_json(groups).dump());
  EXPECT_EQ(to_json(again), to_json(groups));
}

TEST(BenchmarkFile, SchemaViolationsRejected) {
  auto wrap = [](const std::string& group) { return R"({"groups": [)" + group + "]}"; };
  const std::string q2 =
      R"("queries": [{"text": "a", "category": "theorem_name"}, {"text": "b", "category": "lean4_term"}])";
  EXPECT_NO_THROW(parse_benchmark(wrap(R"({"group_id": "g", )" + q2 + R"(, "labels": [{"theorem_id": "t", "label": 2}]})")));
  EXPECT_THROW(parse_benchmark("[]"), DataError);
  EXPECT_THROW(parse_benchmark(wrap(R"({"group_id": "g", )" + q2 + R"(, "labels": [{"theorem_id": "t", "label": 1}]})")),
               DataError);
  EXPECT_THROW(parse_benchmark(wrap(R"({"group_id": "g", )" + q2 + R"(, "labels": [{"theorem_id": "t", "label": 3}]})")),
               DataError);
  EXPECT_THROW(parse_benchmark(wrap(R"({"group_id": "g", "queries": [{"text": "a", "category": "theorem_name"}],
                                        "labels": [{"theorem_id": "t", "label": 2}]})")),
               DataError);
  EXPECT_THROW(parse_benchmark(wrap(R"({"group_id": "g", "queries": [{"text": "a", "category": "theorem_name"},
                                        {"text": "b", "category": "theorem_name"}],
                                        "labels": [{"theorem_id": "t", "label": 2}]})")),
               DataError);
  EXPECT_THROW(parse_benchmark(wrap(R"({"group_id": "g", "queries": [{"text": "a", "category": "poetry"},
                                        {"text": "b", "category": "lean4_term"}],
                                        "labels": [{"theorem_id": "t", "label": 2}]})")),
               DataError);
  EXPECT_THROW(parse_benchmark(wrap(R"({"group_id": "g"})")), DataError);
}

TEST(Evaluate, OracleAggregates) {
  std::vector<QueryGroup> groups = {
      {"g1",
       {{"q1", QueryCategory::natural_description}, {"q2", QueryCategory::theorem_name}},
       {{"a", 2}, {"b", 1}}},
      {"g2", {{"q3", QueryCategory::natural_description}, {"q4", QueryCategory::lean4_term}}, {{"c", 2}, {"d", 2}}},
  };
  RunFile run = {{{"g1", "q1"}, {"a", "x", "b"}},
                 {{"g1", "q2"}, {"x", "a", "b"}},
                 {{"g2", "q3"}, {"c", "d", "y"}},
                 {{"g2", "q4"}, {"x", "y", "z"}}};
  auto report = evaluate(run_file_engine(run), groups);
  EXPECT_NEAR(report.overall.ndcg, oracle::kEvaluateNdcg, 1e-12);
  EXPECT_NEAR(report.overall.precision, oracle::kEvaluatePrecision, 1e-12);
  EXPECT_NEAR(report.overall.recall, oracle::kEvaluateRecall, 1e-12);
  ASSERT_EQ(report.per_query.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(report.per_query[i].values.ndcg, oracle::evaluate_per_query()[i][0], 1e-12);
    EXPECT_NEAR(report.per_query[i].values.precision, oracle::evaluate_per_query()[i][1], 1e-12);
    EXPECT_NEAR(report.per_query[i].values.recall, oracle::evaluate_per_query()[i][2], 1e-12);
  }
  EXPECT_EQ(report.per_category.at(QueryCategory::natural_description).count, 2u);
  EXPECT_FALSE(report.per_category.count(QueryCategory::latex_formula));
}

TEST(Evaluate, RunFileFixtureMatchesOracle) {
  auto groups = load_benchmark(testing_support::fixture("sample_benchmark.json"));
  auto run = load_run_file(testing_support::fixture("sample_run.jsonl"));
  auto report = evaluate(run_file_engine(run), groups);
  EXPECT_NEAR(report.overall.ndcg, oracle::kRunNdcg, 1e-9);
  EXPECT_NEAR(report.overall.precision, oracle::kRunPrecision, 1e-9);
  EXPECT_NEAR(report.overall.recall, oracle::kRunRecall, 1e-9);
  for (const auto& row : oracle::run_per_category()) {
    const auto& c = report.per_category.at(row.category);
    EXPECT_NEAR(c.mean.ndcg, row.ndcg, 1e-9);
    EXPECT_NEAR(c.mean.precision, row.precision, 1e-9);
    EXPECT_NEAR(c.mean.recall, row.recall, 1e-9);
  }
  auto text = format_report(report, "runfile");
  for (const char* row : {"All", "ND", "LF", "TN", "LT"}) EXPECT_NE(text.find(row), std::string::npos);
  auto j = to_json(report);
  EXPECT_EQ(j["query_count"], 8);
  EXPECT_TRUE(j["overall"].contains("ndcg@20"));
}

TEST(Evaluate, EngineErrorsAndDuplicates) {
  std::vector<QueryGroup> groups = {
      {"g", {{"q1", QueryCategory::natural_description}, {"q2", QueryCategory::theorem_name}}, {{"a", 2}}}};
  try {
    evaluate(run_file_engine({}), groups);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.error_class(), ErrorClass::data);
    EXPECT_NE(std::string(e.what()).find("q1"), std::string::npos);
  }
  Engine dup = [](const BenchmarkQuery&, const QueryGroup&) { return std::vector<std::string>{"a", "a"}; };
  EXPECT_THROW(evaluate(dup, groups), DataError);
}

TEST(Evaluate, ParallelMatchesSerial) {
  auto groups = load_benchmark(testing_support::fixture("sample_benchmark.json"));
  auto engine = run_file_engine(load_run_file(testing_support::fixture("sample_run.jsonl")));
  EvaluateOptions par;
  par.concurrency = 4;
  EXPECT_EQ(to_json(evaluate(engine, groups)), to_json(evaluate(engine, groups, par)));
}

TEST(RunFile, MalformedLineReported) {
  EXPECT_THROW(parse_run_file("{\"group_id\": \"g\"}\n"), DataError);
  EXPECT_THROW(parse_run_file("nope\n"), DataError);
  EXPECT_EQ(parse_run_file("\n\n").size(), 0u);
}

TEST(Bm25, OracleScores) {
  for (const auto& c : oracle::bm25_cases()) {
    std::vector<std::pair<std::string, std::string>> docs;
    for (std::size_t i = 0; i < c.docs.size(); ++i) docs.emplace_back("d" + std::to_string(i), c.docs[i]);
    Bm25Index idx(docs);
    auto scores = idx.score_all(c.query);
    ASSERT_EQ(scores.size(), c.scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_NEAR(scores[i], c.scores[i], 1e-12) << c.query;
  }
}

TEST(Bm25, TokenizerAndRanking) {
  EXPECT_EQ(bm25_tokenize("Nat.Prime p, n ≥ 2"), (std::vector<std::string>{"nat", "prime", "p", "n", "≥", "2"}));
  Bm25Index idx({{"b", "prime number"}, {"a", "prime number"}, {"c", "group"}});
  auto ranked = idx.rank("prime", 3);
  EXPECT_EQ(ranked, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(idx.rank("prime", 1).size(), 1u);
  EXPECT_THROW(idx.rank("prime", 0), UsageError);
  EXPECT_THROW(Bm25Index({}), DataError);
}

TEST(Bm25, SampleBenchmarkReport) {
  auto parsed = parse_corpus(detail::read_file(testing_support::fixture("mini_corpus.jsonl")));
  std::vector<std::pair<std::string, std::string>> docs;
  for (const auto& r : parsed.records) docs.emplace_back(r.id, r.formal_statement);
  auto index = std::make_shared<const Bm25Index>(docs);
  Engine engine = [index](const BenchmarkQuery& q, const QueryGroup&) { return index->rank(q.text, 20); };
  auto report = evaluate(engine, load_benchmark(testing_support::fixture("sample_benchmark.json")));
  EXPECT_EQ(report.per_query.size(), 8u);
  EXPECT_EQ(report.per_category.size(), 4u);
  EXPECT_GE(report.overall.ndcg, 0.0);
  EXPECT_LE(report.overall.ndcg, 1.0);
}
