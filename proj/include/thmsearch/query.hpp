#pragma once

// Query side of the engine: augmentation of a raw query into a bilingual
// statement, formatting it like a corpus document, embedding, and search.

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "thmsearch/corpus.hpp"
#include "thmsearch/embedding.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/hnsw.hpp"
#include "thmsearch/informalizer.hpp"
#include "thmsearch/providers.hpp"

namespace thmsearch {

struct AugmentedQuery {
  std::string original;
  std::string formal_statement;
  std::string informal_name;
  std::string informal_statement;
  bool augmented = false;

  static AugmentedQuery fallback(std::string original) {
    AugmentedQuery q;
    q.informal_statement = original;
    q.original = std::move(original);
    return q;
  }
};

inline constexpr std::string_view kAugmentationTemplateVersion = "augment-v1";
inline constexpr std::string_view kQuerySlot = "{query}";

// Few-shot examples are the two published example query groups.
inline constexpr std::string_view kAugmentationTemplate =
    "You are an expert in mathematics and in the Lean 4 theorem prover with its library mathlib4.\n"
    "A user is searching mathlib4 for a theorem. Rewrite the user's query into a detailed, self-contained "
    "statement of the theorem they are looking for.\n"
    "\n"
    "Follow these principles:\n"
    "1. Precision: state the mathematical content exactly, making every hypothesis and the conclusion explicit.\n"
    "2. LaTeX: write the mathematical expressions of the informal statement in LaTeX.\n"
    "3. Disambiguation: if the query is vague or ambiguous, choose the most standard mathematical reading and "
    "state it explicitly.\n"
    "4. Equivalence: the rewritten statement must be mathematically equivalent to the original query; do not "
    "strengthen or weaken it.\n"
    "5. Provide a formal statement in Lean 4 following mathlib4 conventions, a short informal name, and a precise "
    "informal statement.\n"
    "\n"
    "EXAMPLE 1\n"
    "INPUT QUERY:\n"
    "If there exist injective maps of sets from A to B and from B to A, then there exists a bijective map between "
    "A and B.\n"
    "FORMAL: theorem schroeder_bernstein {α β : Type*} {f : α → β} {g : β → α} (hf : Function.Injective f) "
    "(hg : Function.Injective g) : ∃ h : α → β, Function.Bijective h\n"
    "NAME: Schröder-Bernstein theorem\n"
    "STATEMENT: If there exist injective functions \\(f : A \\to B\\) and \\(g : B \\to A\\), then there exists a "
    "bijective function \\(h : A \\to B\\).\n"
    "\n"
    "EXAMPLE 2\n"
    "INPUT QUERY:\n"
    "(p → q) → (¬q → ¬p)\n"
    "FORMAL: theorem mt {a b : Prop} : (a → b) → ¬b → ¬a\n"
    "NAME: Contrapositive reasoning\n"
    "STATEMENT: For propositions \\(p\\) and \\(q\\), if \\(p\\) implies \\(q\\), then \\(\\neg q\\) implies "
    "\\(\\neg p\\).\n"
    "\n"
    "TASK\n"
    "INPUT QUERY:\n"
    "{query}\n"
    "\n"
    "OUTPUT FORMAT:\n"
    "Reply with exactly three labeled lines and nothing else:\n"
    "FORMAL: <the statement in Lean 4>\n"
    "NAME: <a short informal name>\n"
    "STATEMENT: <a precise informal statement, using LaTeX for mathematics>\n";

inline std::string build_augmentation_prompt(std::string_view query) {
  if (query.empty()) throw UsageError("augmentation prompt needs a non-empty query");
  std::string_view t = kAugmentationTemplate;
  auto pos = t.find(kQuerySlot);
  std::string out;
  out.reserve(t.size() + query.size());
  out.append(t.substr(0, pos));
  out.append(query);
  out.append(t.substr(pos + kQuerySlot.size()));
  return out;
}

struct AugmentFields {
  std::string formal;
  std::string name;
  std::string statement;
};

inline std::optional<AugmentFields> parse_augmentation(std::string_view text) {
  auto f = detail::parse_labeled_fields(text, {"FORMAL:", "NAME:", "STATEMENT:"});
  for (const auto& v : f)
    if (!v || v->empty()) return std::nullopt;
  return AugmentFields{*f[0], *f[1], *f[2]};
}

struct AugmentOptions {
  std::chrono::milliseconds timeout{20000};
  double temperature = 0.0;
  std::size_t max_output_chars = 4096;
  std::function<void(const std::string&)> log;  // failure reports; stderr when unset
};

// Never throws: any provider or format failure yields the unaugmented fallback.
inline AugmentedQuery augment_query(const std::string& query, TextGenerator& generator,
                                    const AugmentOptions& opts = {}) {
  auto report = [&](const std::string& msg) {
    if (opts.log) {
      opts.log(msg);
    } else {
      std::fprintf(stderr, "augmentation fallback: %s\n", msg.c_str());
    }
  };
  if (query.empty()) return AugmentedQuery::fallback(query);
  try {
    GenerationRequest req{build_augmentation_prompt(query), opts.temperature, opts.max_output_chars, opts.timeout};
    auto fields = parse_augmentation(generator.generate(req));
    if (!fields) {
      report("provider response lacks FORMAL/NAME/STATEMENT lines");
      return AugmentedQuery::fallback(query);
    }
    AugmentedQuery q;
    q.original = query;
    q.formal_statement = std::move(fields->formal);
    q.informal_name = sanitize_informal_name(fields->name);
    q.informal_statement = std::move(fields->statement);
    q.augmented = true;
    return q;
  } catch (const std::exception& e) {
    report(e.what());
    return AugmentedQuery::fallback(query);
  }
}

// Mirrors format_corpus_entry for augmented queries; passthrough otherwise.
inline std::string format_query_document(const AugmentedQuery& aq) {
  if (!aq.augmented) return aq.original;
  return aq.formal_statement + "\n" + aq.informal_name + ":" + aq.informal_statement;
}

inline nlohmann::json to_json(const AugmentedQuery& aq) {
  return {{"original", aq.original},
          {"formal_statement", aq.formal_statement},
          {"informal_name", aq.informal_name},
          {"informal_statement", aq.informal_statement},
          {"augmented", aq.augmented}};
}

// Text embedded for a corpus record under a given document kind.
inline std::string document_text(const TheoremRecord& record, const InformalPair* pair, DocumentKind kind) {
  if (kind == DocumentKind::formal) return record.formal_statement;
  if (!pair) throw DataError("no informal pair for '" + record.id + "'");
  return kind == DocumentKind::bilingual ? format_corpus_entry(record, *pair) : format_informal_entry(*pair);
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct SearchResult {
  std::size_t rank = 0;  // 1-based
  const TheoremRecord* theorem = nullptr;
  const InformalPair* informal = nullptr;  // null when the pair is missing
  float score = 0.0f;
};

struct SearchOptions {
  std::size_t k = 20;
  bool augment = true;
  std::optional<std::size_t> ef;
  bool instruct_unaugmented = true;  // apply the query preset to raw queries too
};

struct SearchOutcome {
  std::vector<SearchResult> results;
  std::optional<AugmentedQuery> augmented_query;  // set when augmentation ran
};

struct SearchCorpus {
  std::unordered_map<std::string, TheoremRecord> records;
  std::unordered_map<std::string, InformalPair> pairs;

  static SearchCorpus from(std::vector<TheoremRecord> records, std::unordered_map<std::string, InformalPair> pairs) {
    SearchCorpus c;
    for (auto& r : records) {
      auto id = r.id;
      c.records.emplace(std::move(id), std::move(r));
    }
    c.pairs = std::move(pairs);
    return c;
  }
};

// Immutable once constructed; run_search is reentrant provided the providers are.
class SearchEngine {
 public:
  SearchEngine(const SearchCorpus& corpus, const HnswIndex& index, EmbeddingProvider& embedder,
               TextGenerator* augmenter, PresetPair presets = default_preset_pair(), AugmentOptions augment_opts = {})
      : corpus_(corpus),
        index_(index),
        embedder_(embedder),
        augmenter_(augmenter),
        presets_(std::move(presets)),
        augment_opts_(std::move(augment_opts)) {
    if (index_.dim() != embedder_.dim())
      throw DataError("index dimension " + std::to_string(index_.dim()) + " does not match embedder dimension " +
                      std::to_string(embedder_.dim()));
  }

  // Every indexed id must be in the corpus.
  void verify_consistency() const {
    for (const auto& id : index_.ids())
      if (!corpus_.records.count(id)) throw DataError("index references unknown theorem_id '" + id + "'");
  }

  const PresetPair& presets() const { return presets_; }
  const HnswIndex& index() const { return index_; }
  const SearchCorpus& corpus() const { return corpus_; }

  // augment (optional) -> format -> instruct -> truncate -> embed -> search -> join.
  SearchOutcome run_search(const std::string& query, const SearchOptions& opts = {}) const {
    if (opts.k == 0) throw UsageError("k must be >= 1");
    SearchOutcome out;
    AugmentedQuery aq = AugmentedQuery::fallback(query);
    if (opts.augment && augmenter_) {
      aq = augment_query(query, *augmenter_, augment_opts_);
      out.augmented_query = aq;
    }
    std::string text = format_query_document(aq);
    InstructionPreset preset = presets_.query;
    if (!aq.augmented && !opts.instruct_unaugmented) preset = {"none/query", Side::query, std::string(kPlaceholder)};
    std::vector<std::string> batch{std::move(text)};
    auto vecs = embed_batch(batch, preset, embedder_, nullptr, {1, 1, 1, kDefaultTruncateChars});
    auto hits = index_.search(vecs.front().values, opts.k, opts.ef);
    out.results.reserve(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
      auto it = corpus_.records.find(hits[i].id);
      if (it == corpus_.records.end())
        throw DataError("index returned '" + hits[i].id + "' which is not in the corpus (version skew)");
      auto pt = corpus_.pairs.find(hits[i].id);
      out.results.push_back({i + 1, &it->second, pt == corpus_.pairs.end() ? nullptr : &pt->second, hits[i].score});
    }
    return out;
  }

 private:
  const SearchCorpus& corpus_;
  const HnswIndex& index_;
  EmbeddingProvider& embedder_;
  TextGenerator* augmenter_;
  PresetPair presets_;
  AugmentOptions augment_opts_;
};

// Shared by the service response and `search --json`.
inline nlohmann::json to_json(const SearchOutcome& outcome) {
  nlohmann::json j;
  j["results"] = nlohmann::json::array();
  for (const auto& r : outcome.results) {
    nlohmann::json item = {{"rank", r.rank},
                           {"theorem_id", r.theorem->id},
                           {"name", r.theorem->name},
                           {"formal_statement", r.theorem->formal_statement},
                           {"source_path", r.theorem->source_path},
                           {"score", r.score}};
    if (r.informal) {
      item["informal_name"] = r.informal->informal_name;
      item["informal_statement"] = r.informal->informal_statement;
    } else {
      item["informal_name"] = nullptr;
      item["informal_statement"] = nullptr;
    }
    j["results"].push_back(std::move(item));
  }
  if (outcome.augmented_query) j["augmented_query"] = to_json(*outcome.augmented_query);
  return j;
}

}  // namespace thmsearch
