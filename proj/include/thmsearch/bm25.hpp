#pragma once

// Okapi BM25 lexical baseline. Tokens are lowercased runs of ASCII letters and
// digits; non-ASCII bytes count as token characters so Unicode math symbols
// survive as tokens. No stemming.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "thmsearch/error.hpp"

namespace thmsearch {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

inline std::vector<std::string> bm25_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

class Bm25Index {
 public:
  Bm25Index(std::vector<std::pair<std::string, std::string>> docs, Bm25Params params = {}) : params_(params) {
    if (docs.empty()) throw DataError("bm25: empty corpus");
    double total = 0.0;
    for (auto& [id, text] : docs) {
      auto tokens = bm25_tokenize(text);
      std::unordered_map<std::string, int> tf;
      for (auto& t : tokens) ++tf[t];
      for (const auto& [term, _] : tf) ++df_[term];
      lengths_.push_back(static_cast<double>(tokens.size()));
      total += static_cast<double>(tokens.size());
      tf_.push_back(std::move(tf));
      ids_.push_back(std::move(id));
    }
    avg_length_ = total / static_cast<double>(ids_.size());
  }

  std::size_t size() const { return ids_.size(); }

  double idf(const std::string& term) const {
    auto it = df_.find(term);
    double n = it == df_.end() ? 0.0 : it->second;
    double N = static_cast<double>(ids_.size());
    return std::log(1.0 + (N - n + 0.5) / (n + 0.5));
  }

  // One score per document, in corpus order. Repeated query tokens count repeatedly.
  std::vector<double> score_all(std::string_view query) const {
    std::vector<double> scores(ids_.size(), 0.0);
    for (const auto& term : bm25_tokenize(query)) {
      if (!df_.count(term)) continue;
      double w = idf(term);
      for (std::size_t d = 0; d < ids_.size(); ++d) {
        auto it = tf_[d].find(term);
        if (it == tf_[d].end()) continue;
        double tf = it->second;
        double norm = avg_length_ > 0.0 ? lengths_[d] / avg_length_ : 1.0;
        scores[d] += w * tf * (params_.k1 + 1.0) / (tf + params_.k1 * (1.0 - params_.b + params_.b * norm));
      }
    }
    return scores;
  }

  // Top k by score descending, id ascending.
  std::vector<std::pair<std::string, double>> search(std::string_view query, std::size_t k) const {
    if (k == 0) throw UsageError("bm25: k must be >= 1");
    auto scores = score_all(query);
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(ids_.size());
    for (std::size_t d = 0; d < ids_.size(); ++d) ranked.emplace_back(ids_[d], scores[d]);
    std::size_t n = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(),
                      [](const auto& a, const auto& b) {
                        if (a.second != b.second) return a.second > b.second;
                        return a.first < b.first;
                      });
    ranked.resize(n);
    return ranked;
  }

  std::vector<std::string> rank(std::string_view query, std::size_t k) const {
    std::vector<std::string> ids;
    for (auto& [id, _] : search(query, k)) ids.push_back(std::move(id));
    return ids;
  }

 private:
  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::unordered_map<std::string, int>> tf_;
  std::vector<double> lengths_;
  std::unordered_map<std::string, int> df_;
  double avg_length_ = 0.0;
};

}  // namespace thmsearch
