#pragma once

// Pipeline stages over a working directory (ingest -> informalize -> embed ->
// index), artifact loading for search, benchmark engines, and the synthetic
// corpus used for offline end-to-end runs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "thmsearch/benchmark.hpp"
#include "thmsearch/bm25.hpp"
#include "thmsearch/corpus.hpp"
#include "thmsearch/detail/io.hpp"
#include "thmsearch/embedding.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/hnsw.hpp"
#include "thmsearch/informalizer.hpp"
#include "thmsearch/manifest.hpp"
#include "thmsearch/query.hpp"

namespace thmsearch {

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
  std::filesystem::path source;
  bool strict = false;
  bool all_kinds = false;
};

struct IngestReport {
  std::size_t parsed = 0;   // records accepted by the parser
  std::size_t written = 0;  // records in corpus.jsonl after dedup and kind filter
  std::vector<Diagnostic> diagnostics;
};

inline nlohmann::json to_json(const Diagnostic& d) {
  return {{"kind", std::string(to_string(d.kind))}, {"line", d.line}, {"subject", d.subject}, {"message", d.message}};
}

inline std::vector<TheoremRecord> load_corpus_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("corpus file not found: " + path.string());
  auto parsed = parse_corpus(detail::read_file(path));
  if (parsed.schema_diagnostic_count() > 0)
    throw DataError(path.string() + ": " + format_diagnostic(parsed.diagnostics.front()));
  return std::move(parsed.records);
}

inline IngestReport run_ingest(Manifest& manifest, const IngestOptions& opts) {
  if (!std::filesystem::exists(opts.source)) throw DataError("corpus file not found: " + opts.source.string());
  std::string text = detail::read_file(opts.source);
  auto parsed = parse_corpus(text);
  IngestReport report;
  report.parsed = parsed.records.size();
  report.diagnostics = std::move(parsed.diagnostics);
  auto records = deduplicate(std::move(parsed.records), &report.diagnostics);
  auto resolved = resolve_dependencies(std::move(records));
  for (auto& d : resolved.diagnostics) report.diagnostics.push_back(std::move(d));
  if (opts.strict && !report.diagnostics.empty())
    throw DataError(std::to_string(report.diagnostics.size()) + " diagnostics with --strict; first: " +
                    format_diagnostic(report.diagnostics.front()));
  auto kept = searchable(std::move(resolved.records), opts.all_kinds);
  report.written = kept.size();

  std::filesystem::create_directories(manifest.workdir());
  detail::write_file_atomic(manifest.path(artifact::corpus), serialize_corpus(kept));
  std::string diag_lines;
  for (const auto& d : report.diagnostics) diag_lines += to_json(d).dump() + "\n";
  detail::write_file_atomic(manifest.path(artifact::diagnostics), diag_lines);

  StageRecord stage;
  stage.inputs["source"] = detail::sha256_hex(text);
  stage.params["all_kinds"] = opts.all_kinds ? "true" : "false";
  manifest.set_stage("ingest", manifest.with_outputs(std::move(stage), {artifact::corpus}));
  manifest.save();
  return report;
}

// ---------------------------------------------------------------------------
// informalize
// ---------------------------------------------------------------------------

struct InformalizeStageReport {
  std::size_t records = 0;
  std::size_t generated = 0;
  std::size_t reused = 0;
};

inline InformalizeStageReport run_informalize(Manifest& manifest, TextGenerator& generator,
                                              const InformalizeCorpusOptions& opts = {}) {
  manifest.require_current("ingest", "informalize");
  auto corpus_path = manifest.path(artifact::corpus);
  auto records = load_corpus_file(corpus_path);
  InformalCache cache(manifest.path(artifact::informal_cache));
  auto report = informalize_corpus(records, generator, cache, opts);
  if (!report.failures.empty()) {
    const auto& f = report.failures.front();
    throw Error(f.error_class, std::to_string(report.failures.size()) + " of " + std::to_string(records.size()) +
                                   " theorems failed to informalize (first: " + f.theorem_id + ": " + f.message +
                                   "); completed results are cached, re-run to resume");
  }
  write_informal_entries(manifest.path(artifact::informal), report.entries);

  StageRecord stage;
  stage.inputs[std::string(artifact::corpus)] = detail::file_sha256(corpus_path);
  stage.params["provider_id"] = generator.id();
  stage.params["template"] = std::string(kInformalizationTemplateVersion);
  manifest.set_stage("informalize", manifest.with_outputs(std::move(stage), {artifact::informal}));
  manifest.save();
  return {records.size(), report.generated, report.reused};
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

struct EmbedStageReport {
  std::size_t documents = 0;
  EmbedStats stats;
};

// Corpus documents in corpus order, shaped for the pair's document kind.
inline std::vector<std::pair<std::string, std::string>> corpus_documents(
    const std::vector<TheoremRecord>& records, const std::unordered_map<std::string, InformalPair>& pairs,
    DocumentKind kind) {
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(records.size());
  for (const auto& r : records) {
    auto it = pairs.find(r.id);
    docs.emplace_back(r.id, document_text(r, it == pairs.end() ? nullptr : &it->second, kind));
  }
  return docs;
}

inline EmbedStageReport run_embed(Manifest& manifest, EmbeddingProvider& provider, const PresetPair& presets,
                                  const EmbedOptions& opts = {}) {
  manifest.require_current("informalize", "embed");
  auto corpus_path = manifest.path(artifact::corpus);
  auto informal_path = manifest.path(artifact::informal);
  auto records = load_corpus_file(corpus_path);
  auto pairs = load_pairs(informal_path);
  auto docs = corpus_documents(records, pairs, presets.document);

  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& [_, t] : docs) texts.push_back(t);
  EmbeddingCache cache(manifest.path(artifact::embedding_cache));
  EmbedStageReport report;
  report.documents = docs.size();
  embed_batch(texts, presets.doc, provider, &cache, opts, &report.stats);

  const std::string provider_id = provider.id();
  std::string lines;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto key = embedding_cache_key(provider_id, presets.doc.preset_id,
                                   prepare_text(presets.doc, texts[i], opts.truncate_limit));
    lines += nlohmann::json{{"id", docs[i].first}, {"key", detail::to_hex(key)}}.dump() + "\n";
  }
  detail::write_file_atomic(manifest.path(artifact::embeddings), lines);

  StageRecord stage;
  stage.inputs[std::string(artifact::corpus)] = detail::file_sha256(corpus_path);
  stage.inputs[std::string(artifact::informal)] = detail::file_sha256(informal_path);
  stage.params["provider_id"] = provider_id;
  stage.params["dim"] = std::to_string(provider.dim());
  stage.params["preset"] = presets.id;
  stage.params["truncate_chars"] = std::to_string(opts.truncate_limit);
  manifest.set_stage("embed", manifest.with_outputs(std::move(stage), {artifact::embeddings}));
  manifest.save();
  return report;
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

struct RecallAudit {
  std::size_t sample_size = 0;
  std::size_t k = 10;
  double mean_recall = 1.0;
  double threshold = 0.9;

  bool passed() const { return mean_recall >= threshold; }
};

// Mean recall@k of `index` against exhaustive search, over an evenly spaced
// sample of `fraction` of the stored vectors (at least one).
inline RecallAudit audit_recall(const HnswIndex& index, double fraction = 0.01, std::size_t k = 10,
                                double threshold = 0.9) {
  RecallAudit audit;
  audit.threshold = threshold;
  if (index.empty()) return audit;
  audit.k = std::min(k, index.size());
  audit.sample_size = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * double(index.size()))));
  audit.sample_size = std::min(audit.sample_size, index.size());
  double total = 0.0;
  for (std::size_t s = 0; s < audit.sample_size; ++s) {
    auto node = static_cast<std::uint32_t>(s * index.size() / audit.sample_size);
    auto q = index.vector(node);
    auto approx = index.search(q, audit.k);
    auto exact = brute_force_search(index, q, audit.k);
    total += recall_at_k(approx, exact, audit.k);
  }
  audit.mean_recall = total / double(audit.sample_size);
  return audit;
}

struct IndexStageReport {
  std::size_t size = 0;
  RecallAudit audit;
};

inline IndexStageReport run_index(Manifest& manifest, const HnswParams& params = {}) {
  manifest.require_current("embed", "index");
  const StageRecord& embed = *manifest.stage("embed");
  auto embeddings_path = manifest.path(artifact::embeddings);
  EmbeddingCache cache(manifest.path(artifact::embedding_cache));
  std::size_t dim = std::stoul(embed.params.at("dim"));
  HnswIndex index(dim, params);
  index.metadata()["provider_id"] = embed.params.at("provider_id");
  index.metadata()["preset"] = embed.params.at("preset");
  index.metadata()["corpus_sha256"] = manifest.stage("ingest")->outputs.at(std::string(artifact::corpus));

  std::ifstream in(embeddings_path);
  if (!in) throw DataError("cannot open " + embeddings_path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("key"))
      throw DataError("malformed line in " + embeddings_path.string());
    auto hex = j["key"].get<std::string>();
    CacheKey key{};
    if (hex.size() != key.size() * 2) throw DataError("malformed embedding key in " + embeddings_path.string());
    for (std::size_t i = 0; i < key.size(); ++i)
      key[i] = static_cast<unsigned char>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
    auto v = cache.get(key);
    if (!v) throw DataError("embedding cache lacks the vector for '" + j["id"].get<std::string>() + "'; re-run embed");
    index.insert(j["id"].get<std::string>(), *v);
  }
  if (index.empty()) throw DataError("no embeddings to index");
  index.save(manifest.path(artifact::index));

  StageRecord stage;
  stage.inputs[std::string(artifact::embeddings)] = detail::file_sha256(embeddings_path);
  stage.params["m"] = std::to_string(params.m);
  stage.params["m0"] = std::to_string(params.m0);
  stage.params["ef_construction"] = std::to_string(params.ef_construction);
  stage.params["seed"] = std::to_string(params.seed);
  manifest.set_stage("index", manifest.with_outputs(std::move(stage), {artifact::index}));
  manifest.save();
  return {index.size(), audit_recall(index)};
}

// ---------------------------------------------------------------------------
// search artifacts
// ---------------------------------------------------------------------------

struct SearchArtifacts {
  SearchCorpus corpus;
  std::unique_ptr<HnswIndex> index;
  PresetPair presets;
};

// Loads corpus, pairs (optional file) and index, and checks that they fit
// together and match the embedding provider.
inline SearchArtifacts load_search_artifacts(const std::filesystem::path& corpus_path,
                                             const std::filesystem::path& informal_path,
                                             const std::filesystem::path& index_path, const EmbeddingProvider& embedder) {
  if (!std::filesystem::exists(index_path)) throw DataError("index file not found: " + index_path.string());
  SearchArtifacts a;
  a.index = std::make_unique<HnswIndex>(HnswIndex::load(index_path));
  std::unordered_map<std::string, InformalPair> pairs;
  if (std::filesystem::exists(informal_path)) pairs = load_pairs(informal_path);
  a.corpus = SearchCorpus::from(load_corpus_file(corpus_path), std::move(pairs));
  const auto& meta = a.index->metadata();
  if (auto it = meta.find("provider_id"); it != meta.end() && it->second != embedder.id())
    throw DataError("index was built with embedding provider '" + it->second + "' but the configured provider is '" +
                    embedder.id() + "'");
  if (a.index->dim() != embedder.dim())
    throw DataError("index dimension " + std::to_string(a.index->dim()) + " does not match embedding provider dimension " +
                    std::to_string(embedder.dim()));
  auto preset = meta.find("preset");
  a.presets = preset == meta.end() ? default_preset_pair() : find_preset_pair(preset->second);
  for (const auto& id : a.index->ids())
    if (!a.corpus.records.count(id)) throw DataError("index references unknown theorem_id '" + id + "'");
  return a;
}

// ---------------------------------------------------------------------------
// benchmark engines
// ---------------------------------------------------------------------------

inline bench::Engine semantic_engine(const SearchEngine& engine, std::size_t k, bool augment) {
  return [&engine, k, augment](const bench::BenchmarkQuery& q, const bench::QueryGroup&) {
    SearchOptions opts;
    opts.k = k;
    opts.augment = augment;
    std::vector<std::string> ids;
    for (const auto& r : engine.run_search(q.text, opts).results) ids.push_back(r.theorem->id);
    return ids;
  };
}

inline bench::Engine bm25_engine(std::shared_ptr<const Bm25Index> index, std::size_t k) {
  return [index = std::move(index), k](const bench::BenchmarkQuery& q, const bench::QueryGroup&) {
    return index->rank(q.text, k);
  };
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, std::size_t N>
const T& pick(std::mt19937_64& rng, const T (&items)[N]) {
  return items[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

}  // namespace detail

// `count` theorems plus a handful of definitions they link to, as interchange
// lines. Same seed, same output.
inline std::string generate_synthetic_corpus(std::size_t count, std::uint64_t seed = 7) {
  static const char* const kAreas[] = {"Algebra", "Order", "Topology", "Analysis", "NumberTheory",
                                       "Combinatorics", "LinearAlgebra", "GroupTheory", "Logic", "MeasureTheory"};
  static const char* const kWords[] = {"mul", "add", "comm", "assoc", "le", "lt", "inj", "surj", "dist", "norm",
                                       "prime", "dvd", "sub", "neg", "inv", "pow", "card", "sum", "prod", "mem",
                                       "subset", "image", "preimage", "map", "comp", "zero", "one", "max", "min",
                                       "abs", "gcd", "lcm", "succ", "pred", "union", "inter", "compl", "cast"};
  static const char* const kClasses[] = {"CommRing", "Field", "Group", "AddCommGroup", "LinearOrder", "MetricSpace",
                                         "TopologicalSpace", "Lattice", "Monoid", "NormedField", "OrderedSemiring",
                                         "DivisionRing"};
  static const char* const kVars[] = {"a", "b", "c", "x", "y", "z", "u", "v", "m", "n"};
  static const char* const kOps[] = {"+", "*", "-", "⊔", "⊓", "•"};
  static const char* const kRels[] = {"=", "≤", "<", "≠", "∣"};
  static const char* const kFuns[] = {"f", "g", "φ", "ψ"};
  static const char* const kAdjectives[] = {"basic", "elementary", "standard", "technical", "auxiliary", "key"};
  static const char* const kNouns[] = {"identity", "bound", "estimate", "characterization", "criterion", "lemma"};

  std::mt19937_64 rng(seed);
  auto num = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto term = [&]() {
    std::string t = std::string(detail::pick(rng, kVars));
    int len = num(1, 3);
    for (int i = 0; i < len; ++i) {
      int shape = num(0, 3);
      if (shape == 0) {
        t += " " + std::string(detail::pick(rng, kOps)) + " " + detail::pick(rng, kVars);
      } else if (shape == 1) {
        t = "(" + t + ") ^ " + std::to_string(num(2, 97));
      } else if (shape == 2) {
        t = std::string(detail::pick(rng, kFuns)) + " (" + t + ")";
      } else {
        t += " " + std::string(detail::pick(rng, kOps)) + " " + std::to_string(num(2, 997));
      }
    }
    return t;
  };
  auto prop = [&]() { return term() + " " + detail::pick(rng, kRels) + " " + term(); };

  std::size_t def_count = std::max<std::size_t>(1, count / 20);
  std::vector<std::string> def_names;
  std::string out;
  for (std::size_t d = 0; d < def_count; ++d) {
    std::string name = "SynthDef." + std::string(detail::pick(rng, kWords)) + "_" + detail::pick(rng, kWords) + "_" +
                       std::to_string(d);
    def_names.push_back(name);
    nlohmann::json j = {{"id", name},
                        {"name", name},
                        {"kind", "definition"},
                        {"statement", "def " + name + " {α : Type*} [" + detail::pick(rng, kClasses) +
                                          " α] (x : α) : α := " + term()},
                        {"docstring", "Auxiliary operation number " + std::to_string(d) + "."},
                        {"source_path", "Synth/Defs.lean"}};
    out += j.dump() + "\n";
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::string area = detail::pick(rng, kAreas);
    std::string name = "Synth." + area + "." + detail::pick(rng, kWords) + "_" + detail::pick(rng, kWords) + "_" +
                       detail::pick(rng, kWords) + "_" + std::to_string(i);
    std::string cls = detail::pick(rng, kClasses);
    std::string stmt = "theorem " + name + " {α : Type*} [" + cls + " α] (a b c x y z u v m n : α) (f g φ ψ : α → α)";
    int hyps = num(0, 2);
    for (int h = 0; h < hyps; ++h) stmt += " (h" + std::to_string(h) + " : " + prop() + ")";
    std::string concl = prop();
    if (num(0, 9) < 3) {
      const auto& def = def_names[static_cast<std::size_t>(num(0, static_cast<int>(def_names.size()) - 1))];
      concl = "[" + def + "](" + def + ") (" + term() + ") " + detail::pick(rng, kRels) + " " + term();
    }
    stmt += " : " + concl;
    nlohmann::json j = {{"id", name}, {"name", name}, {"kind", "theorem"}, {"statement", stmt},
                        {"source_path", "Synth/" + area + ".lean"}};
    if (num(0, 9) < 4)
      j["docstring"] = "The " + std::string(detail::pick(rng, kAdjectives)) + " " + detail::pick(rng, kNouns) +
                       " for " + cls + " number " + std::to_string(i) + ".";
    out += j.dump() + "\n";
  }
  return out;
}

// One group per record with the record as its only exact match. Queries: the
// full bilingual document text (Lean4Term) and the informal statement
// (NaturalDescription).
inline std::vector<bench::QueryGroup> self_retrieval_benchmark(
    const std::vector<TheoremRecord>& records, const std::unordered_map<std::string, InformalPair>& pairs) {
  std::vector<bench::QueryGroup> groups;
  for (const auto& r : records) {
    auto it = pairs.find(r.id);
    if (it == pairs.end()) throw DataError("no informal pair for '" + r.id + "'");
    bench::QueryGroup g;
    g.group_id = r.id;
    g.queries.push_back({format_corpus_entry(r, it->second), bench::QueryCategory::lean4_term});
    g.queries.push_back({it->second.informal_statement, bench::QueryCategory::natural_description});
    g.labels[r.id] = 2;
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace thmsearch
