#pragma once

// Runtime configuration shared by the CLI and the search service.
// Precedence: THMSEARCH_* environment variables > config file > defaults.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "thmsearch/detail/io.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/manifest.hpp"
#include "thmsearch/remote.hpp"

namespace thmsearch {

struct Config {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path workdir = "work";
  std::optional<std::filesystem::path> index_path;
  std::optional<std::filesystem::path> corpus_path;
  std::optional<std::filesystem::path> informal_path;

  ProviderConfig embedding;
  ProviderConfig augmentation;
  ProviderConfig informalization;

  std::string preset = "bilingual";
  std::size_t default_k = 20;
  bool augment = true;
  std::chrono::milliseconds request_timeout{20000};
  std::size_t max_query_chars = 2048;
  bool cors = false;
  std::size_t concurrency = 4;
  double requests_per_second = 0.0;
  std::size_t batch_size = 32;

  std::filesystem::path index_file() const { return index_path.value_or(workdir / artifact::index); }
  std::filesystem::path corpus_file() const { return corpus_path.value_or(workdir / artifact::corpus); }
  std::filesystem::path informal_file() const { return informal_path.value_or(workdir / artifact::informal); }

  void validate() const {
    if (default_k < 1 || default_k > 100) throw UsageError("default_k must be in [1, 100]");
    if (max_query_chars < 1) throw UsageError("max_query_chars must be >= 1");
    if (port < 0 || port > 65535) throw UsageError("port must be in [0, 65535]");
    if (concurrency < 1) throw UsageError("concurrency must be >= 1");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (embedding.dim < 1) throw UsageError("embedding dim must be >= 1");
  }
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

namespace detail {

inline bool parse_bool(const std::string& name, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError(name + ": expected a boolean, got '" + v + "'");
}

inline long long parse_int(const std::string& name, const std::string& v) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError(name + ": expected an integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& name, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError(name + ": expected a number, got '" + v + "'");
  }
}

template <typename T>
T json_field(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline void apply_provider_json(ProviderConfig& p, const nlohmann::json& j, const EnvLookup& env) {
  if (!j.is_object()) throw UsageError("provider config must be an object");
  p.kind = json_field(j, "kind", p.kind);
  p.endpoint = json_field(j, "endpoint", p.endpoint);
  p.model = json_field(j, "model", p.model);
  p.dim = json_field(j, "dim", p.dim);
  p.timeout = std::chrono::milliseconds(json_field<long long>(j, "timeout_ms", p.timeout.count()));
  if (auto key_env = json_field<std::string>(j, "api_key_env", ""); !key_env.empty())
    p.api_key = env(key_env).value_or("");
}

inline void apply_provider_env(ProviderConfig& p, const std::string& prefix, const EnvLookup& env) {
  if (auto v = env(prefix + "KIND")) p.kind = *v;
  if (auto v = env(prefix + "ENDPOINT")) p.endpoint = *v;
  if (auto v = env(prefix + "MODEL")) p.model = *v;
  if (auto v = env(prefix + "DIM")) p.dim = static_cast<std::size_t>(parse_int(prefix + "DIM", *v));
  if (auto v = env(prefix + "TIMEOUT_MS")) p.timeout = std::chrono::milliseconds(parse_int(prefix + "TIMEOUT_MS", *v));
  if (auto v = env(prefix + "API_KEY")) p.api_key = *v;
}

}  // namespace detail

inline void apply_config_json(Config& c, const nlohmann::json& j, const EnvLookup& env) {
  using detail::json_field;
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  c.host = json_field(j, "host", c.host);
  c.port = json_field(j, "port", c.port);
  if (j.contains("workdir")) c.workdir = json_field<std::string>(j, "workdir", "");
  if (j.contains("index")) c.index_path = json_field<std::string>(j, "index", "");
  if (j.contains("corpus")) c.corpus_path = json_field<std::string>(j, "corpus", "");
  if (j.contains("informal")) c.informal_path = json_field<std::string>(j, "informal", "");
  c.preset = json_field(j, "preset", c.preset);
  c.default_k = json_field(j, "default_k", c.default_k);
  c.augment = json_field(j, "augment", c.augment);
  c.request_timeout = std::chrono::milliseconds(json_field<long long>(j, "request_timeout_ms", c.request_timeout.count()));
  c.max_query_chars = json_field(j, "max_query_chars", c.max_query_chars);
  c.cors = json_field(j, "cors", c.cors);
  c.concurrency = json_field(j, "concurrency", c.concurrency);
  c.requests_per_second = json_field(j, "requests_per_second", c.requests_per_second);
  c.batch_size = json_field(j, "batch_size", c.batch_size);
  if (auto it = j.find("providers"); it != j.end()) {
    if (it->contains("embedding")) detail::apply_provider_json(c.embedding, (*it)["embedding"], env);
    if (it->contains("augmentation")) detail::apply_provider_json(c.augmentation, (*it)["augmentation"], env);
    if (it->contains("informalization"))
      detail::apply_provider_json(c.informalization, (*it)["informalization"], env);
  }
}

inline void apply_config_env(Config& c, const EnvLookup& env) {
  using detail::parse_bool;
  using detail::parse_int;
  if (auto v = env("THMSEARCH_HOST")) c.host = *v;
  if (auto v = env("THMSEARCH_PORT")) c.port = static_cast<int>(parse_int("THMSEARCH_PORT", *v));
  if (auto v = env("THMSEARCH_WORKDIR")) c.workdir = *v;
  if (auto v = env("THMSEARCH_INDEX")) c.index_path = *v;
  if (auto v = env("THMSEARCH_CORPUS")) c.corpus_path = *v;
  if (auto v = env("THMSEARCH_INFORMAL")) c.informal_path = *v;
  if (auto v = env("THMSEARCH_PRESET")) c.preset = *v;
  if (auto v = env("THMSEARCH_DEFAULT_K"))
    c.default_k = static_cast<std::size_t>(parse_int("THMSEARCH_DEFAULT_K", *v));
  if (auto v = env("THMSEARCH_AUGMENT")) c.augment = parse_bool("THMSEARCH_AUGMENT", *v);
  if (auto v = env("THMSEARCH_REQUEST_TIMEOUT_MS"))
    c.request_timeout = std::chrono::milliseconds(parse_int("THMSEARCH_REQUEST_TIMEOUT_MS", *v));
  if (auto v = env("THMSEARCH_MAX_QUERY_CHARS"))
    c.max_query_chars = static_cast<std::size_t>(parse_int("THMSEARCH_MAX_QUERY_CHARS", *v));
  if (auto v = env("THMSEARCH_CORS")) c.cors = parse_bool("THMSEARCH_CORS", *v);
  if (auto v = env("THMSEARCH_CONCURRENCY"))
    c.concurrency = static_cast<std::size_t>(parse_int("THMSEARCH_CONCURRENCY", *v));
  if (auto v = env("THMSEARCH_REQUESTS_PER_SECOND"))
    c.requests_per_second = detail::parse_double("THMSEARCH_REQUESTS_PER_SECOND", *v);
  detail::apply_provider_env(c.embedding, "THMSEARCH_EMBEDDING_", env);
  detail::apply_provider_env(c.augmentation, "THMSEARCH_AUGMENTATION_", env);
  detail::apply_provider_env(c.informalization, "THMSEARCH_INFORMALIZATION_", env);
}

// Defaults, then the optional file, then the environment.
inline Config load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env) {
  Config c;
  if (file) {
    auto j = nlohmann::json::parse(detail::read_file(*file), nullptr, false);
    if (j.is_discarded()) throw UsageError("config file is not valid JSON: " + file->string());
    apply_config_json(c, j, env);
  }
  apply_config_env(c, env);
  c.validate();
  return c;
}

// Swaps every provider for its deterministic mock, keeping the embedding dim.
inline void use_mock_providers(Config& c) {
  c.embedding.kind = "mock";
  c.augmentation.kind = "mock";
  c.informalization.kind = "mock";
}

}  // namespace thmsearch
