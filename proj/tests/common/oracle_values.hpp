#pragma once

// Values printed by tests/oracles/metrics_oracle.py, frozen here. Regenerate
// with `python3 tests/oracles/metrics_oracle.py` if a case is added.

#include <string>
#include <vector>

#include "thmsearch/benchmark.hpp"

namespace oracle {

struct MetricCase {
  std::vector<int> retrieved;  // labels in rank order
  std::size_t k;
  std::vector<int> group;      // every label of the group
  double dcg, ndcg_retrieved, ndcg_global, precision, recall;
};

inline const std::vector<MetricCase>& metric_cases() {
  static const std::vector<MetricCase> kCases = {
      {{2, 1, 0}, 3, {2, 1}, 1.1892789260714371, 1, 1, 0.33333333333333331, 1},
      {{0, 2, 1}, 3, {2, 1}, 0.78092975357145755, 0.65664137861343808, 0.65664137861343808, 0.33333333333333331, 1},
      {{2, 1, 2, 0, 0, 0, 0, 0, 0, 0}, 10, {2, 2, 2, 2, 1}, 1.6892789260714371, 0.94853765157428316,
       0.63087829196991929, 0.20000000000000001, 0.5},
      {{0, 0, 0, 0, 0}, 5, {2, 2}, 0, 0, 0, 0, 0},
      {{1, 1, 2}, 3, {2, 1, 1}, 0.98927892607143719, 0.73866534208324364, 0.73866534208324364, 0.33333333333333331, 1},
      {{2, 2, 2, 2}, 4, {2, 2, 2, 2}, 2.5616063116448506, 1, 1, 1, 1},
      {{0, 1, 0, 2, 0, 1, 2}, 5, {2, 2, 2, 1, 1}, 0.61995548414483026, 0.52128686597746965, 0.26090331960834556,
       0.20000000000000001, 0.33333333333333331},
      {{1}, 1, {2, 1}, 0.29999999999999999, 1, 0.29999999999999999, 0, 0},
      {{0, 0, 2}, 3, {2}, 0.5, 0.5, 0.5, 0.33333333333333331, 1},
      {{2, 0, 1, 0, 2, 1, 0, 0, 2, 0, 1, 0}, 10, {2, 2, 2, 1, 1, 1}, 1.9447449590309294, 0.81843040118059818,
       0.78320790788442529, 0.29999999999999999, 1},
      {{1, 2}, 20, {2, 2, 1}, 0.93092975357145757, 0.78276822464735984, 0.52272120879814665, 0.050000000000000003,
       0.5},
      {{2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2}, 20, {2, 2}, 1.2276702486969531,
       0.75274256663020889, 0.75274256663020889, 0.10000000000000001, 1},
  };
  return kCases;
}

// Materializes a case as (ranking ids, group labels). Group members are
// "g<i>"; retrieved items take unused members with the same label, and
// label-0 items become unlabeled ids.
struct MaterializedCase {
  std::vector<std::string> ranking;
  thmsearch::bench::RelevanceLabels labels;
};

inline MaterializedCase materialize(const MetricCase& c) {
  MaterializedCase m;
  std::vector<bool> used(c.group.size(), false);
  for (std::size_t i = 0; i < c.group.size(); ++i) m.labels["g" + std::to_string(i)] = c.group[i];
  for (std::size_t r = 0; r < c.retrieved.size(); ++r) {
    int l = c.retrieved[r];
    std::string id = "u" + std::to_string(r);
    if (l != 0) {
      for (std::size_t i = 0; i < c.group.size(); ++i) {
        if (!used[i] && c.group[i] == l) {
          used[i] = true;
          id = "g" + std::to_string(i);
          break;
        }
      }
    }
    m.ranking.push_back(id);
  }
  return m;
}

struct Bm25Case {
  std::vector<std::string> docs;
  std::string query;
  std::vector<double> scores;
};

inline const std::vector<Bm25Case>& bm25_cases() {
  static const std::vector<Bm25Case> kCases = {
      {{"alpha beta", "gamma delta", "epsilon zeta"}, "alpha", {0.9808292530117263, 0.0, 0.0}},
      {{"prime number theorem", "prime ideal", "group homomorphism kernel image"},
       "prime ideal",
       {0.47000362924573563, 1.6799117584033771, 0.0}},
      {{"a a b", "b c", "c d e f"}, "a a c", {2.6972804457822472, 0.5442147286003255, 0.4136031937362474}},
  };
  return kCases;
}

// evaluate() over two groups of two queries each (labels in rank order).
inline constexpr double kEvaluateNdcg = 0.65590346621837625;
inline constexpr double kEvaluatePrecision = 0.10000000000000001;
inline constexpr double kEvaluateRecall = 0.75;
inline const std::vector<std::vector<double>>& evaluate_per_query() {
  static const std::vector<std::vector<double>> kRows = {
      {0.96697248626006693, 0.10000000000000001, 1},
      {0.65664137861343808, 0.10000000000000001, 1},
      {1, 0.20000000000000001, 1},
      {0, 0, 0},
  };
  return kRows;
}

// data/fixtures/sample_run.jsonl scored against sample_benchmark.json.
inline constexpr double kRunNdcg = 0.92671224727735224;
inline constexpr double kRunPrecision = 0.099999999999999992;
inline constexpr double kRunRecall = 1;
struct CategoryRow {
  thmsearch::bench::QueryCategory category;
  double ndcg, precision, recall;
};
inline const std::vector<CategoryRow>& run_per_category() {
  using thmsearch::bench::QueryCategory;
  static const std::vector<CategoryRow> kRows = {
      {QueryCategory::natural_description, 1, 0.10000000000000001, 1},
      {QueryCategory::latex_formula, 1, 0.10000000000000001, 1},
      {QueryCategory::theorem_name, 0.81546487678572877, 0.10000000000000001, 1},
      {QueryCategory::lean4_term, 0.89138411232367987, 0.10000000000000001, 1},
  };
  return kRows;
}

}  // namespace oracle
