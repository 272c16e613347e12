#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "thmsearch/detail/hash.hpp"
#include "thmsearch/detail/parallel.hpp"
#include "thmsearch/detail/utf8.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/providers.hpp"

namespace thmsearch {

// ---------------------------------------------------------------------------
// Instruction presets
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPlaceholder = "{text}";
inline constexpr std::size_t kDefaultTruncateChars = 4096;

enum class Side { query, doc };

// What a corpus document contains under a given configuration.
enum class DocumentKind { formal, informal, bilingual };

struct InstructionPreset {
  std::string preset_id;
  Side side = Side::doc;
  std::string templ;  // contains kPlaceholder exactly once
};

// A query/doc preset pair plus the document kind it was designed for.
struct PresetPair {
  std::string id;
  InstructionPreset query;
  InstructionPreset doc;
  DocumentKind document = DocumentKind::bilingual;
};

namespace detail {

inline std::string instruct(std::string_view task, Side side) {
  std::string t = "Instruct: ";
  t += task;
  t += side == Side::query ? "\nQuery:" : "\nDoc:";
  t += kPlaceholder;
  return t;
}

inline PresetPair make_pair(std::string id, std::string_view query_task, std::string_view doc_task,
                            DocumentKind kind) {
  return {id,
          {id + "/query", Side::query, instruct(query_task, Side::query)},
          {id + "/doc", Side::doc, instruct(doc_task, Side::doc)},
          kind};
}

}  // namespace detail

inline constexpr std::string_view kBilingualTask =
    "Retrieve math theorems stated in bilingual Lean 4 + natural language that are mathematically equivalent "
    "to the given one";

// Every shipped configuration. "bilingual" is the default: bilingual documents
// and augmented queries sharing one instruction.
inline const std::vector<PresetPair>& preset_pairs() {
  static const std::vector<PresetPair> kPairs = [] {
    std::vector<PresetPair> v;
    v.push_back(detail::make_pair("bilingual", kBilingualTask, kBilingualTask, DocumentKind::bilingual));
    v.push_back(detail::make_pair(
        "formal-baseline", "Given a math search query, retrieve theorems stated in Lean 4 that mathematically match the query",
        "Represent the given formal math statement written in Lean 4 for retrieving related statement by natural "
        "language query",
        DocumentKind::formal));
    v.push_back(detail::make_pair(
        "informal-baseline", "Given a math search query, retrieve theorems mathematically equivalent to the query",
        "Represent the given math theorem statement for retrieving related statement by natural language query",
        DocumentKind::informal));
    v.push_back(detail::make_pair(
        "bilingual-baseline",
        "Given a math search query, retrieve theorems stated in bilingual Lean 4 + natural language that "
        "mathematically match the query",
        "Represent the given formal math statement written in Lean 4 concatenated with its natural language "
        "explanation for retrieving related statement by natural language query",
        DocumentKind::bilingual));
    constexpr std::string_view kFormalTask =
        "Retrieve math theorems stated in Lean 4 that are mathematically equivalent to the given one";
    v.push_back(detail::make_pair("formal", kFormalTask, kFormalTask, DocumentKind::formal));
    constexpr std::string_view kInformalTask = "Retrieve math theorems that are mathematically equivalent to the given one";
    v.push_back(detail::make_pair("informal", kInformalTask, kInformalTask, DocumentKind::informal));
    v.push_back({"none",
                 {"none/query", Side::query, std::string(kPlaceholder)},
                 {"none/doc", Side::doc, std::string(kPlaceholder)},
                 DocumentKind::bilingual});
    return v;
  }();
  return kPairs;
}

inline const PresetPair& find_preset_pair(std::string_view id) {
  for (const auto& p : preset_pairs())
    if (p.id == id) return p;
  std::string known;
  for (const auto& p : preset_pairs()) known += (known.empty() ? "" : ", ") + p.id;
  throw UsageError("unknown preset '" + std::string(id) + "' (known: " + known + ")");
}

inline const PresetPair& default_preset_pair() { return find_preset_pair("bilingual"); }

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

inline std::string apply_instruction(const InstructionPreset& preset, std::string_view text) {
  auto pos = preset.templ.find(kPlaceholder);
  if (pos == std::string::npos || count_occurrences(preset.templ, kPlaceholder) != 1)
    throw UsageError("preset '" + preset.preset_id + "' must contain exactly one " + std::string(kPlaceholder));
  std::string out;
  out.reserve(preset.templ.size() + text.size());
  out.append(preset.templ, 0, pos);
  out.append(text);
  out.append(preset.templ, pos + kPlaceholder.size());
  return out;
}

// Keeps at most `limit` code points; never splits a UTF-8 sequence.
inline std::string truncate_chars(std::string_view text, std::size_t limit = kDefaultTruncateChars) {
  if (limit == 0) throw UsageError("truncation limit must be positive");
  if (text.size() <= limit) return std::string(text);
  auto offsets = detail::char_offsets(text);
  if (offsets.size() - 1 <= limit) return std::string(text);
  return std::string(text.substr(0, offsets[limit]));
}

// Instruction first, then truncation, so the instruction prefix always survives.
inline std::string prepare_text(const InstructionPreset& preset, std::string_view text,
                                std::size_t limit = kDefaultTruncateChars) {
  return truncate_chars(apply_instruction(preset, text), limit);
}

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

struct EmbeddingVector {
  std::vector<float> values;
  std::string provider_id;
  std::string preset_id;

  std::size_t dim() const { return values.size(); }
};

inline std::vector<float> normalize(std::span<const float> values) {
  double sq = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("cannot normalize a vector with non-finite components");
    sq += static_cast<double>(v) * v;
  }
  if (sq == 0.0) throw DataError("cannot normalize the zero vector");
  double inv = 1.0 / std::sqrt(sq);
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i] * inv);
  return out;
}

inline float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Offline stand-in for a neural embedder: signed feature hashing of character
// trigrams into `dim` buckets, L2-normalized. Texts shorter than three
// characters hash as a single gram; empty text maps to the first basis vector.
inline std::vector<float> mock_embed(std::string_view text, std::size_t dim) {
  if (dim < 8) throw UsageError("mock_embed requires dim >= 8");
  std::vector<double> acc(dim, 0.0);
  auto chars = detail::split_chars(text);
  auto add = [&](std::string_view gram) {
    std::uint64_t h = detail::splitmix64(detail::fnv1a64(gram));
    acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
  };
  if (chars.size() >= 3) {
    for (std::size_t i = 0; i + 3 <= chars.size(); ++i) {
      auto begin = chars[i].data() - text.data();
      auto end = chars[i + 2].data() - text.data() + chars[i + 2].size();
      add(text.substr(begin, end - begin));
    }
  } else if (!chars.empty()) {
    add(text);
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  std::vector<float> out(dim, 0.0f);
  if (sq == 0.0) {
    out[0] = 1.0f;
    return out;
  }
  double inv = 1.0 / std::sqrt(sq);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] * inv);
  return out;
}

class MockEmbedder : public EmbeddingProvider {
 public:
  explicit MockEmbedder(std::size_t dim = 256) : dim_(dim) {
    if (dim < 8) throw UsageError("mock embedder requires dim >= 8");
  }

  std::string id() const override { return "mock-trigram-" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }

  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override {
    ++calls_;
    texts_ += texts.size();
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(mock_embed(t, dim_));
    return out;
  }

  std::size_t calls() const { return calls_; }
  std::size_t texts_embedded() const { return texts_; }

 private:
  std::size_t dim_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> texts_{0};
};

// ---------------------------------------------------------------------------
// Cache: append-only log of records
//   [32-byte SHA-256 key][u32 LE dim][dim x f32 LE]
// A torn trailing record (interrupted append) is ignored on load.
// ---------------------------------------------------------------------------

using CacheKey = detail::Digest;

inline CacheKey embedding_cache_key(std::string_view provider_id, std::string_view preset_id,
                                    std::string_view prepared_text) {
  return detail::Sha256().field(provider_id).field(preset_id).field(prepared_text).digest();
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept {
    std::size_t h;
    std::memcpy(&h, d.data(), sizeof h);
    return h;
  }
};

}  // namespace detail

class EmbeddingCache {
 public:
  // In-memory only.
  EmbeddingCache() = default;

  explicit EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw DataError("cannot open embedding cache " + path_.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    std::size_t off = 0;
    while (off + 36 <= data.size()) {
      CacheKey key;
      std::memcpy(key.data(), p + off, key.size());
      std::uint32_t dim = detail::get_u32(p + off + 32);
      std::size_t need = 36 + std::size_t(dim) * 4;
      if (off + need > data.size()) break;
      std::vector<float> v(dim);
      for (std::uint32_t i = 0; i < dim; ++i) v[i] = detail::get_f32(p + off + 36 + 4 * i);
      entries_[key] = std::move(v);
      off += need;
    }
    torn_tail_ = off != data.size();
  }

  std::optional<std::vector<float>> get(const CacheKey& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const CacheKey& key) const {
    std::shared_lock lock(mu_);
    return entries_.count(key) != 0;
  }

  void put(const CacheKey& key, std::vector<float> values) {
    std::unique_lock lock(mu_);
    if (entries_.count(key)) return;
    if (!path_.empty()) {
      std::string rec(reinterpret_cast<const char*>(key.data()), key.size());
      detail::put_u32(rec, static_cast<std::uint32_t>(values.size()));
      for (float f : values) detail::put_f32(rec, f);
      std::ofstream out(path_, std::ios::binary | std::ios::app);
      if (!out) throw DataError("cannot append to embedding cache " + path_.string());
      out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
      if (!out) throw DataError("write failed: " + path_.string());
    }
    entries_.emplace(key, std::move(values));
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  bool had_torn_tail() const { return torn_tail_; }

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<CacheKey, std::vector<float>, detail::DigestHash> entries_;
  bool torn_tail_ = false;
};

// ---------------------------------------------------------------------------
// Batch embedding
// ---------------------------------------------------------------------------

struct EmbedOptions {
  std::size_t concurrency = 4;
  std::size_t batch_size = 32;
  std::size_t max_retries = 2;
  std::size_t truncate_limit = kDefaultTruncateChars;
};

struct EmbedStats {
  std::size_t cache_hits = 0;
  std::size_t provider_texts = 0;
  std::size_t provider_calls = 0;
};

// Instructs, truncates and embeds `texts`; output order matches input. Cache
// hits skip the provider, and each distinct text is sent at most once.
inline std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, const InstructionPreset& preset,
                                                EmbeddingProvider& provider, EmbeddingCache* cache = nullptr,
                                                const EmbedOptions& opts = {}, EmbedStats* stats = nullptr) {
  const std::string provider_id = provider.id();
  const std::size_t dim = provider.dim();
  EmbeddingCache scratch;
  EmbeddingCache& store = cache ? *cache : scratch;

  std::vector<CacheKey> keys(texts.size());
  std::vector<std::string> pending;
  std::vector<CacheKey> pending_keys;
  std::unordered_map<CacheKey, bool, detail::DigestHash> queued;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::string prepared = prepare_text(preset, texts[i], opts.truncate_limit);
    keys[i] = embedding_cache_key(provider_id, preset.preset_id, prepared);
    if (store.contains(keys[i])) {
      ++hits;
      continue;
    }
    if (queued.emplace(keys[i], true).second) {
      pending.push_back(std::move(prepared));
      pending_keys.push_back(keys[i]);
    }
  }

  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  const std::size_t chunks = (pending.size() + batch - 1) / batch;
  std::atomic<std::size_t> calls{0};
  detail::parallel_for(chunks, opts.concurrency, [&](std::size_t c) {
    std::size_t begin = c * batch;
    std::size_t end = std::min(pending.size(), begin + batch);
    std::span<const std::string> slice(pending.data() + begin, end - begin);
    std::vector<std::vector<float>> got;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        ++calls;
        got = provider.embed(slice);
        break;
      } catch (const ProviderError& e) {
        if (!e.transient() || attempt >= opts.max_retries) throw;
      }
    }
    if (got.size() != slice.size())
      throw ProviderError("embedding provider returned " + std::to_string(got.size()) + " vectors for " +
                              std::to_string(slice.size()) + " inputs",
                          false);
    for (std::size_t j = 0; j < got.size(); ++j) {
      if (got[j].size() != dim)
        throw ProviderError("embedding dimension mismatch: expected " + std::to_string(dim) + ", got " +
                                std::to_string(got[j].size()),
                            false);
      store.put(pending_keys[begin + j], normalize(got[j]));
    }
  });

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto v = store.get(keys[i]);
    if (!v) throw DataError("embedding missing from cache after batch");
    out.push_back({std::move(*v), provider_id, preset.preset_id});
  }
  if (stats) {
    stats->cache_hits += hits;
    stats->provider_texts += pending.size();
    stats->provider_calls += calls.load();
  }
  return out;
}

}  // namespace thmsearch
