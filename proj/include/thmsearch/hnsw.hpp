#pragma once

// Hierarchical Navigable Small World graph over unit vectors, scored by
// cosine similarity (dot product of normalized vectors).
//
// Layer 0 holds every node; higher layers are exponentially sparser. Search
// descends greedily from the top layer and runs a beam search of width ef on
// layer 0. The graph is kept undirected: every edge a->b at layer L has its
// twin b->a, and degree caps (m above layer 0, m0 on layer 0) are enforced by
// heuristic pruning that removes both directions of the dropped edge.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "thmsearch/detail/hash.hpp"
#include "thmsearch/detail/io.hpp"
#include "thmsearch/error.hpp"

namespace thmsearch {

struct HnswParams {
  std::uint32_t m = 24;
  std::uint32_t m0 = 48;
  std::uint32_t ef_construction = 200;
  std::uint32_t ef_search = 100;
  double level_lambda = 1.0 / std::log(24.0);
  std::uint64_t seed = 42;

  static HnswParams with_m(std::uint32_t m) {
    HnswParams p;
    p.m = m;
    p.m0 = 2 * m;
    p.level_lambda = 1.0 / std::log(static_cast<double>(m));
    return p;
  }

  void validate() const {
    if (m < 2) throw UsageError("hnsw: m must be >= 2");
    if (m0 < m) throw UsageError("hnsw: m0 must be >= m");
    if (ef_construction < m) throw UsageError("hnsw: ef_construction must be >= m");
    if (ef_search < 1) throw UsageError("hnsw: ef_search must be >= 1");
    if (!(level_lambda > 0.0) || !std::isfinite(level_lambda)) throw UsageError("hnsw: level_lambda must be > 0");
  }

  bool operator==(const HnswParams&) const = default;
};

struct SearchHit {
  std::string id;
  float score = 0.0f;

  bool operator==(const SearchHit&) const = default;
};

// Score descending, id ascending.
inline bool hit_before(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

namespace detail {

inline void put_varint(std::string& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<char>((v & 0x7F) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view data, std::size_t offset = 0) : data_(data), off_(offset) {}

  void need(std::size_t n) const {
    if (off_ + n > data_.size()) throw DataError("index file is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[off_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[off_ + i])) << (8 * i);
    off_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[off_ + i])) << (8 * i);
    off_ += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      std::uint8_t b = u8();
      v |= std::uint64_t(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    throw DataError("index file has a malformed varint");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.substr(off_, n));
    off_ += n;
    return s;
  }
  std::size_t offset() const { return off_; }
  bool at_end() const { return off_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t off_;
};

}  // namespace detail

class HnswIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::string_view kMagic{"THMHNSW\0", 8};
  static constexpr int kMaxLevel = 32;

  explicit HnswIndex(std::size_t dim, HnswParams params = {}) : dim_(dim), params_(params) {
    if (dim == 0) throw UsageError("hnsw: dim must be positive");
    params_.validate();
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const HnswParams& params() const { return params_; }

  bool contains(std::string_view id) const { return id_to_node_.count(std::string(id)) != 0; }
  const std::string& id(std::uint32_t node) const { return ids_.at(node); }
  const std::vector<std::string>& ids() const { return ids_; }
  int level(std::uint32_t node) const { return levels_.at(node); }
  int max_level() const { return max_level_; }
  std::optional<std::uint32_t> entry_point() const {
    if (empty()) return std::nullopt;
    return entry_;
  }
  std::span<const float> vector(std::uint32_t node) const {
    return {vectors_.data() + std::size_t(node) * dim_, dim_};
  }
  const std::vector<std::uint32_t>& neighbors(std::uint32_t node, int layer) const {
    return links_.at(node).at(static_cast<std::size_t>(layer));
  }
  std::size_t max_degree(int layer) const { return layer == 0 ? params_.m0 : params_.m; }

  // Free-form provenance stored alongside the graph (provider id, preset id).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  // Level for the node inserted at `ordinal`: geometric with rate level_lambda,
  // from a counter-based stream so the draw does not depend on history.
  int draw_level(std::uint64_t ordinal) const {
    std::uint64_t r = detail::splitmix64(params_.seed ^ detail::splitmix64(ordinal + 1));
    double u = (static_cast<double>(r >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double lvl = std::floor(-std::log(u) * params_.level_lambda);
    return static_cast<int>(std::min<double>(lvl, kMaxLevel));
  }

  void insert(std::string id, std::span<const float> vector) {
    if (vector.size() != dim_)
      throw DataError("hnsw: dimension mismatch: index has " + std::to_string(dim_) + ", vector has " +
                      std::to_string(vector.size()));
    double sq = 0.0;
    for (float v : vector) {
      if (!std::isfinite(v)) throw DataError("hnsw: vector for '" + id + "' has non-finite components");
      sq += double(v) * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-3) throw DataError("hnsw: vector for '" + id + "' is not unit-norm");
    if (id_to_node_.count(id)) throw DataError("hnsw: duplicate id '" + id + "'");
    if (ids_.size() >= std::numeric_limits<std::uint32_t>::max()) throw DataError("hnsw: index is full");

    const auto node = static_cast<std::uint32_t>(ids_.size());
    const int lvl = draw_level(node);
    id_to_node_.emplace(id, node);
    ids_.push_back(std::move(id));
    levels_.push_back(lvl);
    vectors_.insert(vectors_.end(), vector.begin(), vector.end());
    links_.emplace_back(static_cast<std::size_t>(lvl) + 1);

    if (node == 0) {
      entry_ = node;
      max_level_ = lvl;
      return;
    }

    auto q = this->vector(node);
    std::uint32_t ep = entry_;
    for (int layer = max_level_; layer > lvl; --layer) ep = greedy_closest(q, ep, layer);

    std::vector<std::uint32_t> entry_points{ep};
    for (int layer = std::min(lvl, max_level_); layer >= 0; --layer) {
      auto candidates = search_layer(q, entry_points, params_.ef_construction, layer, node);
      auto chosen = select_neighbors(candidates, params_.m, false);
      auto& own = links_[node][static_cast<std::size_t>(layer)];
      for (const auto& c : chosen) own.push_back(c.node);
      for (const auto& c : chosen) {
        links_[c.node][static_cast<std::size_t>(layer)].push_back(node);
        if (links_[c.node][static_cast<std::size_t>(layer)].size() > max_degree(layer)) shrink(c.node, layer);
      }
      entry_points.clear();
      for (const auto& c : candidates) entry_points.push_back(c.node);
    }
    if (lvl > max_level_) {
      max_level_ = lvl;
      entry_ = node;
    }
  }

  std::vector<SearchHit> search(std::span<const float> query, std::size_t k,
                                std::optional<std::size_t> ef = std::nullopt) const {
    if (k == 0) throw UsageError("hnsw: k must be >= 1");
    if (empty()) throw DataError("hnsw: search on an empty index");
    if (query.size() != dim_)
      throw DataError("hnsw: dimension mismatch: index has " + std::to_string(dim_) + ", query has " +
                      std::to_string(query.size()));
    std::size_t width = std::max<std::size_t>(ef.value_or(params_.ef_search), k);
    std::uint32_t ep = entry_;
    for (int layer = max_level_; layer > 0; --layer) ep = greedy_closest(query, ep, layer);
    auto found = search_layer(query, {ep}, width, 0, std::nullopt);
    std::vector<SearchHit> hits;
    hits.reserve(found.size());
    for (const auto& c : found) hits.push_back({ids_[c.node], std::clamp(c.sim, -1.0f, 1.0f)});
    std::sort(hits.begin(), hits.end(), hit_before);
    if (hits.size() > k) hits.resize(k);
    return hits;
  }

  // --- persistence ---------------------------------------------------------
  //
  // Header (little-endian): magic[8] version:u32 dim:u32 m:u32 m0:u32
  // ef_construction:u32 ef_search:u32 level_lambda:f64 seed:u64 node_count:u64
  // entry_point:u64 max_level:u32 file_size:u64 checksum[32]
  // Payload: metadata (varint count, then varint-length strings key,value),
  // ids (varint-length strings), levels (varint), vector block (f32), and
  // adjacency (per node, per layer 0..level: varint degree, varint ids).
  // checksum = SHA-256 of the whole file with the checksum field zeroed.

  static constexpr std::size_t kHeaderSize = 8 + 4 * 6 + 8 + 8 + 8 + 8 + 4 + 8 + 32;

  std::string serialize() const {
    std::string out;
    out.append(kMagic);
    detail::put_u32le(out, kFormatVersion);
    detail::put_u32le(out, static_cast<std::uint32_t>(dim_));
    detail::put_u32le(out, params_.m);
    detail::put_u32le(out, params_.m0);
    detail::put_u32le(out, params_.ef_construction);
    detail::put_u32le(out, params_.ef_search);
    std::uint64_t lambda_bits;
    std::memcpy(&lambda_bits, &params_.level_lambda, sizeof lambda_bits);
    detail::put_u64(out, lambda_bits);
    detail::put_u64(out, params_.seed);
    detail::put_u64(out, ids_.size());
    detail::put_u64(out, empty() ? std::numeric_limits<std::uint64_t>::max() : entry_);
    detail::put_u32le(out, static_cast<std::uint32_t>(max_level_));
    const std::size_t size_field = out.size();
    detail::put_u64(out, 0);
    const std::size_t checksum_field = out.size();
    out.append(32, '\0');

    detail::put_varint(out, metadata_.size());
    for (const auto& [k, v] : metadata_) {
      detail::put_varint(out, k.size());
      out += k;
      detail::put_varint(out, v.size());
      out += v;
    }
    for (const auto& id : ids_) {
      detail::put_varint(out, id.size());
      out += id;
    }
    for (int l : levels_) detail::put_varint(out, static_cast<std::uint64_t>(l));
    for (float f : vectors_) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      detail::put_u32le(out, bits);
    }
    for (const auto& per_layer : links_) {
      for (const auto& adj : per_layer) {
        detail::put_varint(out, adj.size());
        for (auto n : adj) detail::put_varint(out, n);
      }
    }

    std::string size_bytes;
    detail::put_u64(size_bytes, out.size());
    out.replace(size_field, 8, size_bytes);
    auto digest = detail::Sha256().update(out).digest();
    std::memcpy(out.data() + checksum_field, digest.data(), digest.size());
    return out;
  }

  static HnswIndex deserialize(std::string_view data) {
    if (data.size() < kHeaderSize) throw DataError("index file is truncated");
    if (data.substr(0, 8) != kMagic) throw DataError("not an index file (bad magic)");
    detail::Reader r(data, 8);
    std::uint32_t version = r.u32();
    if (version != kFormatVersion)
      throw DataError("index format version mismatch: file has " + std::to_string(version) + ", expected " +
                      std::to_string(kFormatVersion));
    std::uint32_t dim = r.u32();
    HnswParams p;
    p.m = r.u32();
    p.m0 = r.u32();
    p.ef_construction = r.u32();
    p.ef_search = r.u32();
    p.level_lambda = r.f64();
    p.seed = r.u64();
    std::uint64_t count = r.u64();
    std::uint64_t entry = r.u64();
    auto max_level = static_cast<std::int32_t>(r.u32());
    std::uint64_t file_size = r.u64();
    if (file_size > data.size()) throw DataError("index file is truncated");
    if (file_size < data.size()) throw DataError("index file has trailing bytes");
    const std::size_t checksum_field = r.offset();
    std::string stored = r.bytes(32);
    std::string copy(data);
    std::memset(copy.data() + checksum_field, 0, 32);
    auto digest = detail::Sha256().update(copy).digest();
    if (std::memcmp(digest.data(), stored.data(), 32) != 0) throw DataError("index checksum mismatch");

    HnswIndex idx(dim, p);
    std::uint64_t meta = r.varint();
    for (std::uint64_t i = 0; i < meta; ++i) {
      std::string k = r.bytes(r.varint());
      std::string v = r.bytes(r.varint());
      idx.metadata_[k] = v;
    }
    idx.ids_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string id = r.bytes(r.varint());
      if (!idx.id_to_node_.emplace(id, static_cast<std::uint32_t>(i)).second)
        throw DataError("index file repeats id '" + id + "'");
      idx.ids_.push_back(std::move(id));
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      auto l = r.varint();
      if (l > kMaxLevel) throw DataError("index file has an out-of-range level");
      idx.levels_.push_back(static_cast<int>(l));
    }
    idx.vectors_.resize(count * dim);
    for (auto& f : idx.vectors_) f = r.f32();
    idx.links_.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      idx.links_[i].resize(static_cast<std::size_t>(idx.levels_[i]) + 1);
      for (int layer = 0; layer <= idx.levels_[i]; ++layer) {
        auto deg = r.varint();
        if (deg > idx.max_degree(layer)) throw DataError("index file violates the degree bound");
        auto& adj = idx.links_[i][static_cast<std::size_t>(layer)];
        adj.reserve(deg);
        for (std::uint64_t d = 0; d < deg; ++d) {
          auto n = r.varint();
          if (n >= count || idx.levels_[n] < layer) throw DataError("index file has a dangling edge");
          adj.push_back(static_cast<std::uint32_t>(n));
        }
      }
    }
    if (!r.at_end()) throw DataError("index payload has trailing bytes");
    if (count > 0) {
      if (entry >= count) throw DataError("index entry point out of range");
      idx.entry_ = static_cast<std::uint32_t>(entry);
      idx.max_level_ = max_level;
    }
    return idx;
  }

  void save(const std::filesystem::path& path) const { detail::write_file_atomic(path, serialize()); }
  static HnswIndex load(const std::filesystem::path& path) { return deserialize(detail::read_file(path)); }

 private:
  struct Candidate {
    float sim;
    std::uint32_t node;
  };
  // Best first: higher similarity, then lower node number.
  static bool better(const Candidate& a, const Candidate& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.node < b.node;
  }

  float sim(std::span<const float> q, std::uint32_t node) const {
    const float* v = vectors_.data() + std::size_t(node) * dim_;
    float s = 0.0f;
    for (std::size_t i = 0; i < dim_; ++i) s += q[i] * v[i];
    return s;
  }
  float sim(std::uint32_t a, std::uint32_t b) const { return sim(vector(a), b); }

  std::uint32_t greedy_closest(std::span<const float> q, std::uint32_t ep, int layer) const {
    Candidate best{sim(q, ep), ep};
    for (bool moved = true; moved;) {
      moved = false;
      for (auto n : links_[best.node][static_cast<std::size_t>(layer)]) {
        Candidate c{sim(q, n), n};
        if (better(c, best)) {
          best = c;
          moved = true;
        }
      }
    }
    return best.node;
  }

  // Beam search on one layer; returns up to ef candidates, best first.
  // `exclude` keeps a node being inserted out of its own candidate list.
  std::vector<Candidate> search_layer(std::span<const float> q, const std::vector<std::uint32_t>& entry_points,
                                      std::size_t ef, int layer, std::optional<std::uint32_t> exclude) const {
    auto worse_on_top = [](const Candidate& a, const Candidate& b) { return better(a, b); };
    auto best_on_top = [](const Candidate& a, const Candidate& b) { return better(b, a); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(best_on_top)> frontier(best_on_top);
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse_on_top)> results(worse_on_top);
    std::vector<std::uint8_t> visited(ids_.size(), 0);
    if (exclude) visited[*exclude] = 1;

    for (auto ep : entry_points) {
      if (visited[ep]) continue;
      visited[ep] = 1;
      Candidate c{sim(q, ep), ep};
      frontier.push(c);
      results.push(c);
      if (results.size() > ef) results.pop();
    }
    while (!frontier.empty()) {
      Candidate cur = frontier.top();
      if (results.size() >= ef && better(results.top(), cur)) break;
      frontier.pop();
      for (auto n : links_[cur.node][static_cast<std::size_t>(layer)]) {
        if (visited[n]) continue;
        visited[n] = 1;
        Candidate c{sim(q, n), n};
        if (results.size() < ef || better(c, results.top())) {
          frontier.push(c);
          results.push(c);
          if (results.size() > ef) results.pop();
        }
      }
    }
    std::vector<Candidate> out;
    out.reserve(results.size());
    while (!results.empty()) {
      out.push_back(results.top());
      results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Heuristic selection: take candidates best first, keeping one only if it
  // is closer to the base than to every neighbor already kept. With
  // keep_pruned, rejected candidates backfill up to the limit.
  std::vector<Candidate> select_neighbors(std::vector<Candidate> candidates, std::size_t limit,
                                          bool keep_pruned) const {
    std::sort(candidates.begin(), candidates.end(), better);
    std::vector<Candidate> kept;
    std::vector<Candidate> rejected;
    for (const auto& c : candidates) {
      if (kept.size() >= limit) break;
      bool diverse = true;
      for (const auto& k : kept) {
        if (sim(c.node, k.node) > c.sim) {
          diverse = false;
          break;
        }
      }
      (diverse ? kept : rejected).push_back(c);
    }
    if (keep_pruned)
      for (const auto& c : rejected) {
        if (kept.size() >= limit) break;
        kept.push_back(c);
      }
    return kept;
  }

  // Brings `node` back to its degree cap on `layer`, keeping a diverse subset
  // of its outgoing edges. Edges pointing at `node` are left alone.
  void shrink(std::uint32_t node, int layer) {
    auto& adj = links_[node][static_cast<std::size_t>(layer)];
    auto base = vector(node);
    std::vector<Candidate> candidates;
    candidates.reserve(adj.size());
    for (auto n : adj) candidates.push_back({sim(base, n), n});
    auto kept = select_neighbors(std::move(candidates), max_degree(layer), false);
    adj.clear();
    for (const auto& k : kept) adj.push_back(k.node);
  }

  std::size_t dim_;
  HnswParams params_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> id_to_node_;
  std::vector<int> levels_;
  std::vector<float> vectors_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> layer -> neighbors
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
  std::map<std::string, std::string> metadata_;
};

// Exact top-k by dot product, same ordering rule as HnswIndex::search.
inline std::vector<SearchHit> brute_force_search(std::span<const std::pair<std::string, std::vector<float>>> items,
                                                 std::span<const float> query, std::size_t k) {
  if (k == 0) throw UsageError("brute force: k must be >= 1");
  if (items.empty()) throw DataError("brute force: empty store");
  std::vector<SearchHit> hits;
  hits.reserve(items.size());
  for (const auto& [id, v] : items) {
    if (v.size() != query.size()) throw DataError("brute force: dimension mismatch for '" + id + "'");
    float s = 0.0f;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * query[i];
    hits.push_back({id, std::clamp(s, -1.0f, 1.0f)});
  }
  std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), hit_before);
  hits.resize(n);
  return hits;
}

inline std::vector<SearchHit> brute_force_search(const HnswIndex& index, std::span<const float> query, std::size_t k) {
  std::vector<std::pair<std::string, std::vector<float>>> items;
  items.reserve(index.size());
  for (std::uint32_t n = 0; n < index.size(); ++n) {
    auto v = index.vector(n);
    items.emplace_back(index.id(n), std::vector<float>(v.begin(), v.end()));
  }
  return brute_force_search(items, query, k);
}

// |ids(approx[..k]) ∩ ids(exact[..k])| / min(k, |exact|); 1 when exact is empty.
inline double recall_at_k(std::span<const SearchHit> approx, std::span<const SearchHit> exact, std::size_t k) {
  std::size_t denom = std::min(k, exact.size());
  if (denom == 0) return 1.0;
  std::unordered_set<std::string> truth;
  for (std::size_t i = 0; i < denom; ++i) truth.insert(exact[i].id);
  std::size_t shared = 0;
  for (std::size_t i = 0; i < std::min(k, approx.size()); ++i) shared += truth.count(approx[i].id);
  return static_cast<double>(shared) / static_cast<double>(denom);
}

}  // namespace thmsearch
