#pragma once

// Semantic-search benchmark: query groups sharing relevance labels, the
// P@k / R@k / DCG@k / nDCG@k metrics, and per-category aggregation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "thmsearch/detail/io.hpp"
#include "thmsearch/detail/parallel.hpp"
#include "thmsearch/error.hpp"

namespace thmsearch::bench {

enum class QueryCategory { natural_description, latex_formula, theorem_name, lean4_term };

inline constexpr std::array<QueryCategory, 4> kCategories = {
    QueryCategory::natural_description, QueryCategory::latex_formula, QueryCategory::theorem_name,
    QueryCategory::lean4_term};

inline std::string_view to_string(QueryCategory c) {
  switch (c) {
    case QueryCategory::natural_description: return "natural_description";
    case QueryCategory::latex_formula: return "latex_formula";
    case QueryCategory::theorem_name: return "theorem_name";
    case QueryCategory::lean4_term: return "lean4_term";
  }
  return "natural_description";
}

inline std::string_view abbreviation(QueryCategory c) {
  switch (c) {
    case QueryCategory::natural_description: return "ND";
    case QueryCategory::latex_formula: return "LF";
    case QueryCategory::theorem_name: return "TN";
    case QueryCategory::lean4_term: return "LT";
  }
  return "ND";
}

inline std::optional<QueryCategory> parse_category(std::string_view s) {
  for (auto c : kCategories)
    if (s == to_string(c) || s == abbreviation(c)) return c;
  if (s == "NaturalDescription") return QueryCategory::natural_description;
  if (s == "LatexFormula") return QueryCategory::latex_formula;
  if (s == "TheoremName") return QueryCategory::theorem_name;
  if (s == "Lean4Term") return QueryCategory::lean4_term;
  return std::nullopt;
}

using RelevanceLabels = std::map<std::string, int, std::less<>>;

struct BenchmarkQuery {
  std::string text;
  QueryCategory category = QueryCategory::natural_description;
};

struct QueryGroup {
  std::string group_id;
  std::vector<BenchmarkQuery> queries;
  RelevanceLabels labels;

  // σ: number of exact-match (label 2) theorems.
  std::size_t exact_match_count() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](const auto& kv) { return kv.second == 2; }));
  }
};

// Label 2 (exact match) -> 1, label 1 (relevant) -> 0.3, else 0.
struct RelevanceScale {
  double exact = 1.0;
  double relevant = 0.3;

  double score(int label) const {
    switch (label) {
      case 2: return exact;
      case 1: return relevant;
      default: return 0.0;
    }
  }
};

inline int label_of(const RelevanceLabels& labels, std::string_view id) {
  auto it = labels.find(id);
  return it == labels.end() ? 0 : it->second;
}

using Ranking = std::span<const std::string>;

inline std::size_t exact_matches_in_top_k(Ranking ranking, const RelevanceLabels& labels, std::size_t k) {
  std::size_t n = 0;
  for (std::size_t j = 0; j < std::min(k, ranking.size()); ++j) n += label_of(labels, ranking[j]) == 2;
  return n;
}

inline double precision_at_k(Ranking ranking, const RelevanceLabels& labels, std::size_t k) {
  if (k == 0) throw UsageError("precision_at_k: k must be >= 1");
  return static_cast<double>(exact_matches_in_top_k(ranking, labels, k)) / static_cast<double>(k);
}

inline double recall_at_k(Ranking ranking, const RelevanceLabels& labels, std::size_t k) {
  if (k == 0) throw UsageError("recall_at_k: k must be >= 1");
  auto sigma = std::count_if(labels.begin(), labels.end(), [](const auto& kv) { return kv.second == 2; });
  if (sigma == 0) return 0.0;
  return static_cast<double>(exact_matches_in_top_k(ranking, labels, k)) / static_cast<double>(sigma);
}

// Σ s(d_j) / log2(j + 1) over a score list already in rank order.
inline double dcg_of_scores(std::span<const double> scores, std::size_t k) {
  double dcg = 0.0;
  for (std::size_t j = 0; j < std::min(k, scores.size()); ++j) dcg += scores[j] / std::log2(double(j) + 2.0);
  return dcg;
}

inline double dcg_at_k(Ranking ranking, const RelevanceLabels& labels, const RelevanceScale& scale, std::size_t k) {
  if (k == 0) throw UsageError("dcg_at_k: k must be >= 1");
  std::vector<double> scores;
  for (std::size_t j = 0; j < std::min(k, ranking.size()); ++j) scores.push_back(scale.score(label_of(labels, ranking[j])));
  return dcg_of_scores(scores, k);
}

// retrieved: ideal DCG over the best rearrangement of the retrieved top-k.
// global: ideal DCG over every labeled item of the group.
enum class IdcgMode { retrieved, global };

inline std::optional<IdcgMode> parse_idcg_mode(std::string_view s) {
  if (s == "retrieved") return IdcgMode::retrieved;
  if (s == "global") return IdcgMode::global;
  return std::nullopt;
}

inline double ndcg_at_k(Ranking ranking, const RelevanceLabels& labels, const RelevanceScale& scale, std::size_t k,
                        IdcgMode mode = IdcgMode::retrieved) {
  if (k == 0) throw UsageError("ndcg_at_k: k must be >= 1");
  std::vector<double> actual;
  for (std::size_t j = 0; j < std::min(k, ranking.size()); ++j) actual.push_back(scale.score(label_of(labels, ranking[j])));
  std::vector<double> ideal;
  if (mode == IdcgMode::retrieved) {
    ideal = actual;
  } else {
    for (const auto& [_, l] : labels) ideal.push_back(scale.score(l));
  }
  std::stable_sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = dcg_of_scores(ideal, k);
  if (idcg == 0.0) return 0.0;
  return dcg_of_scores(actual, k) / idcg;
}

// --- benchmark file ---------------------------------------------------------
//
// {"groups": [{"group_id": "...",
//              "queries": [{"text": "...", "category": "natural_description"}],
//              "labels": [{"theorem_id": "...", "label": 2}]}]}

inline std::vector<QueryGroup> parse_benchmark(std::string_view text) {
  auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("groups") || !doc["groups"].is_array())
    throw DataError("benchmark: expected an object with a 'groups' array");
  std::vector<QueryGroup> groups;
  std::set<std::string> group_ids;
  for (const auto& g : doc["groups"]) {
    QueryGroup group;
    try {
      group.group_id = g.at("group_id").get<std::string>();
      if (group.group_id.empty()) throw DataError("benchmark: empty group_id");
      if (!group_ids.insert(group.group_id).second)
        throw DataError("benchmark: duplicate group_id '" + group.group_id + "'");
      std::set<QueryCategory> seen;
      for (const auto& q : g.at("queries")) {
        BenchmarkQuery query;
        query.text = q.at("text").get<std::string>();
        auto cat = parse_category(q.at("category").get<std::string>());
        if (!cat) throw DataError("benchmark: group '" + group.group_id + "' has an unknown category");
        query.category = *cat;
        if (query.text.empty()) throw DataError("benchmark: group '" + group.group_id + "' has an empty query");
        if (!seen.insert(query.category).second)
          throw DataError("benchmark: group '" + group.group_id + "' repeats category " +
                          std::string(to_string(query.category)));
        group.queries.push_back(std::move(query));
      }
      for (const auto& l : g.at("labels")) {
        std::string id = l.at("theorem_id").get<std::string>();
        int label = l.at("label").get<int>();
        if (label < 0 || label > 2)
          throw DataError("benchmark: group '" + group.group_id + "' has label outside {0,1,2}");
        if (!group.labels.emplace(id, label).second)
          throw DataError("benchmark: group '" + group.group_id + "' labels '" + id + "' twice");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("benchmark: schema violation in group '" + group.group_id + "': " + e.what());
    }
    if (group.queries.size() < 2)
      throw DataError("benchmark: group '" + group.group_id + "' needs at least two queries");
    if (group.exact_match_count() == 0)
      throw DataError("benchmark: group '" + group.group_id + "' has no exact match (label 2)");
    groups.push_back(std::move(group));
  }
  return groups;
}

inline std::vector<QueryGroup> load_benchmark(const std::filesystem::path& path) {
  return parse_benchmark(detail::read_file(path));
}

inline nlohmann::json to_json(const std::vector<QueryGroup>& groups) {
  auto arr = nlohmann::json::array();
  for (const auto& g : groups) {
    auto qs = nlohmann::json::array();
    for (const auto& q : g.queries) qs.push_back({{"text", q.text}, {"category", std::string(to_string(q.category))}});
    auto ls = nlohmann::json::array();
    for (const auto& [id, l] : g.labels) ls.push_back({{"theorem_id", id}, {"label", l}});
    arr.push_back({{"group_id", g.group_id}, {"queries", qs}, {"labels", ls}});
  }
  return {{"groups", arr}};
}

// --- run files ---------------------------------------------------------------
// One JSON object per line: {"group_id": "...", "query": "...", "ranking": ["id", ...]}

using RunFile = std::map<std::pair<std::string, std::string>, std::vector<std::string>>;

inline RunFile parse_run_file(std::string_view text) {
  RunFile run;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    auto j = nlohmann::json::parse(line, nullptr, false);
    try {
      if (j.is_discarded()) throw DataError("not JSON");
      run[{j.at("group_id").get<std::string>(), j.at("query").get<std::string>()}] =
          j.at("ranking").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
      throw DataError("run file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  return run;
}

inline RunFile load_run_file(const std::filesystem::path& path) { return parse_run_file(detail::read_file(path)); }

// --- evaluation -------------------------------------------------------------

struct MetricValues {
  double ndcg = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct QueryResult {
  std::string group_id;
  std::string query;
  QueryCategory category = QueryCategory::natural_description;
  MetricValues values;
};

struct CategoryResult {
  std::size_t count = 0;
  MetricValues mean;
};

struct MetricsReport {
  std::size_t k_ndcg = 20;
  std::size_t k_precision = 10;
  std::size_t k_recall = 10;
  IdcgMode idcg_mode = IdcgMode::retrieved;
  MetricValues overall;
  std::map<QueryCategory, CategoryResult> per_category;
  std::vector<QueryResult> per_query;
};

struct EvaluateOptions {
  std::size_t k_ndcg = 20;
  std::size_t k_precision = 10;
  std::size_t k_recall = 10;
  IdcgMode idcg_mode = IdcgMode::retrieved;
  RelevanceScale scale;
  std::size_t concurrency = 1;
};

// Engine: query (+ its group, for run-file lookups) -> ranked theorem ids.
using Engine = std::function<std::vector<std::string>(const BenchmarkQuery&, const QueryGroup&)>;

inline MetricsReport evaluate(const Engine& engine, const std::vector<QueryGroup>& groups,
                              const EvaluateOptions& opts = {}) {
  struct Job {
    const QueryGroup* group;
    const BenchmarkQuery* query;
  };
  std::vector<Job> jobs;
  for (const auto& g : groups)
    for (const auto& q : g.queries) jobs.push_back({&g, &q});

  std::vector<QueryResult> results(jobs.size());
  detail::parallel_for(jobs.size(), opts.concurrency, [&](std::size_t i) {
    const auto& [group, query] = jobs[i];
    std::vector<std::string> ranking;
    try {
      ranking = engine(*query, *group);
    } catch (const Error& e) {
      throw Error(e.error_class(), "engine failed on query '" + query->text + "' (group " + group->group_id +
                                       "): " + e.what());
    }
    std::set<std::string_view> seen;
    for (const auto& id : ranking)
      if (!seen.insert(id).second)
        throw DataError("engine returned duplicate id '" + id + "' for query '" + query->text + "'");
    QueryResult r;
    r.group_id = group->group_id;
    r.query = query->text;
    r.category = query->category;
    r.values.ndcg = ndcg_at_k(ranking, group->labels, opts.scale, opts.k_ndcg, opts.idcg_mode);
    r.values.precision = precision_at_k(ranking, group->labels, opts.k_precision);
    r.values.recall = recall_at_k(ranking, group->labels, opts.k_recall);
    results[i] = std::move(r);
  });

  MetricsReport report;
  report.k_ndcg = opts.k_ndcg;
  report.k_precision = opts.k_precision;
  report.k_recall = opts.k_recall;
  report.idcg_mode = opts.idcg_mode;
  for (const auto& r : results) {
    report.overall.ndcg += r.values.ndcg;
    report.overall.precision += r.values.precision;
    report.overall.recall += r.values.recall;
    auto& c = report.per_category[r.category];
    c.count += 1;
    c.mean.ndcg += r.values.ndcg;
    c.mean.precision += r.values.precision;
    c.mean.recall += r.values.recall;
  }
  if (!results.empty()) {
    double n = static_cast<double>(results.size());
    report.overall = {report.overall.ndcg / n, report.overall.precision / n, report.overall.recall / n};
  }
  for (auto& [_, c] : report.per_category) {
    double n = static_cast<double>(c.count);
    c.mean = {c.mean.ndcg / n, c.mean.precision / n, c.mean.recall / n};
  }
  report.per_query = std::move(results);
  return report;
}

inline Engine run_file_engine(RunFile run) {
  return [run = std::move(run)](const BenchmarkQuery& q, const QueryGroup& g) {
    auto it = run.find({g.group_id, q.text});
    if (it == run.end()) throw DataError("run file has no ranking for this query");
    return it->second;
  };
}

inline nlohmann::json to_json(const MetricsReport& r) {
  auto values = [](const MetricValues& v, const MetricsReport& rep) {
    return nlohmann::json{{"ndcg@" + std::to_string(rep.k_ndcg), v.ndcg},
                          {"precision@" + std::to_string(rep.k_precision), v.precision},
                          {"recall@" + std::to_string(rep.k_recall), v.recall}};
  };
  nlohmann::json j;
  j["idcg_mode"] = r.idcg_mode == IdcgMode::retrieved ? "retrieved" : "global";
  j["query_count"] = r.per_query.size();
  j["overall"] = values(r.overall, r);
  j["per_category"] = nlohmann::json::object();
  for (const auto& [cat, c] : r.per_category) {
    auto v = values(c.mean, r);
    v["count"] = c.count;
    j["per_category"][std::string(to_string(cat))] = v;
  }
  j["per_query"] = nlohmann::json::array();
  for (const auto& q : r.per_query) {
    auto v = values(q.values, r);
    v["group_id"] = q.group_id;
    v["query"] = q.query;
    v["category"] = std::string(to_string(q.category));
    j["per_query"].push_back(v);
  }
  return j;
}

// Plain-text summary: one row for the whole query set, one per category.
inline std::string format_report(const MetricsReport& r, std::string_view engine_name, bool fixture_scale = true) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "engine: %.*s   queries: %zu   idcg: %s\n", static_cast<int>(engine_name.size()),
                engine_name.data(), r.per_query.size(), r.idcg_mode == IdcgMode::retrieved ? "retrieved" : "global");
  out += buf;
  if (fixture_scale) out += "note: fixture-scale query set; per-category means are not comparable across query sets\n";
  std::snprintf(buf, sizeof buf, "%-10s %6s %9s %9s %9s\n", "category", "n", ("nDCG@" + std::to_string(r.k_ndcg)).c_str(),
                ("P@" + std::to_string(r.k_precision)).c_str(), ("R@" + std::to_string(r.k_recall)).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %6zu %9.3f %9.3f %9.3f\n", "All", r.per_query.size(), r.overall.ndcg,
                r.overall.precision, r.overall.recall);
  out += buf;
  for (auto cat : kCategories) {
    auto it = r.per_category.find(cat);
    if (it == r.per_category.end()) {
      std::snprintf(buf, sizeof buf, "%-10s %6d %9s %9s %9s\n", std::string(abbreviation(cat)).c_str(), 0, "-", "-", "-");
    } else {
      const auto& c = it->second;
      std::snprintf(buf, sizeof buf, "%-10s %6zu %9.3f %9.3f %9.3f\n", std::string(abbreviation(cat)).c_str(), c.count,
                    c.mean.ndcg, c.mean.precision, c.mean.recall);
    }
    out += buf;
  }
  return out;
}

}  // namespace thmsearch::bench
