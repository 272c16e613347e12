#pragma once

// HTTP clients for remote generation and embedding services.
//
// "http" protocol (service-neutral):
//   generation: POST <endpoint> {"model","prompt","temperature","max_output_chars"} -> {"text": "..."}
//   embedding:  POST <endpoint> {"model","inputs":[...]} -> {"vectors": [[...], ...]}
// "openai" protocol (OpenAI-compatible servers):
//   generation: POST <endpoint> chat completions -> choices[0].message.content
//   embedding:  POST <endpoint> {"model","input":[...]} -> data[i].embedding

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "thmsearch/embedding.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/mock_providers.hpp"
#include "thmsearch/providers.hpp"

namespace thmsearch {

struct ProviderConfig {
  std::string kind = "mock";  // mock | http | openai
  std::string endpoint;       // full URL
  std::string model;
  std::size_t dim = 256;      // embedding providers only
  std::string api_key;
  std::chrono::milliseconds timeout{20000};
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw UsageError("provider endpoint must be an absolute URL: " + url);
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline nlohmann::json post_json(const ProviderConfig& cfg, const nlohmann::json& body) {
  auto ep = split_url(cfg.endpoint);
  httplib::Client client(ep.origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  auto res = client.Post(ep.path, headers, body.dump(), "application/json");
  if (!res) {
    auto err = res.error();
    std::string what = "request to " + cfg.endpoint + " failed: " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) throw ProviderTimeout(what);
    throw ProviderError(what);
  }
  if (res->status != 200) {
    bool transient = res->status >= 500 || res->status == 429;
    throw ProviderError(cfg.endpoint + " answered HTTP " + std::to_string(res->status), transient);
  }
  auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded()) throw ProviderError(cfg.endpoint + " returned a non-JSON body", false);
  return j;
}

}  // namespace detail

class HttpTextGenerator : public TextGenerator {
 public:
  explicit HttpTextGenerator(ProviderConfig cfg) : cfg_(std::move(cfg)) { detail::split_url(cfg_.endpoint); }

  std::string id() const override { return cfg_.kind + ":" + cfg_.model; }

  std::string generate(const GenerationRequest& request) override {
    ProviderConfig cfg = cfg_;
    cfg.timeout = std::min(cfg_.timeout, request.timeout);
    try {
      if (cfg.kind == "openai") {
        nlohmann::json body = {{"model", cfg.model},
                               {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
                               {"temperature", request.temperature}};
        auto j = detail::post_json(cfg, body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      }
      nlohmann::json body = {{"model", cfg.model},
                             {"prompt", request.prompt},
                             {"temperature", request.temperature},
                             {"max_output_chars", request.max_output_chars}};
      auto j = detail::post_json(cfg, body);
      return j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(cfg.endpoint + " response has an unexpected shape: " + e.what(), false);
    }
  }

 private:
  ProviderConfig cfg_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    detail::split_url(cfg_.endpoint);
    if (cfg_.dim == 0) throw UsageError("embedding provider needs a positive dim");
  }

  std::string id() const override { return cfg_.kind + ":" + cfg_.model + "@" + std::to_string(cfg_.dim); }
  std::size_t dim() const override { return cfg_.dim; }

  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override {
    std::vector<std::string> inputs(texts.begin(), texts.end());
    try {
      if (cfg_.kind == "openai") {
        auto j = detail::post_json(cfg_, {{"model", cfg_.model}, {"input", inputs}});
        std::vector<std::vector<float>> out(inputs.size());
        const auto& data = j.at("data");
        for (std::size_t i = 0; i < data.size(); ++i) {
          auto idx = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
          if (idx >= out.size()) throw ProviderError("embedding response index out of range", false);
          out[idx] = data[i].at("embedding").get<std::vector<float>>();
        }
        if (data.size() != inputs.size()) out.resize(data.size());
        return out;
      }
      auto j = detail::post_json(cfg_, {{"model", cfg_.model}, {"inputs", inputs}});
      return j.at("vectors").get<std::vector<std::vector<float>>>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(cfg_.endpoint + " response has an unexpected shape: " + e.what(), false);
    }
  }

 private:
  ProviderConfig cfg_;
};

enum class GeneratorRole { informalization, augmentation };

inline std::unique_ptr<TextGenerator> make_generator(const ProviderConfig& cfg, GeneratorRole role) {
  if (cfg.kind == "mock") {
    if (role == GeneratorRole::informalization) return std::make_unique<MockInformalizer>();
    return std::make_unique<MockAugmenter>();
  }
  if (cfg.kind == "http" || cfg.kind == "openai") return std::make_unique<HttpTextGenerator>(cfg);
  throw UsageError("unknown generation provider kind '" + cfg.kind + "'");
}

inline std::unique_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& cfg) {
  if (cfg.kind == "mock") return std::make_unique<MockEmbedder>(cfg.dim);
  if (cfg.kind == "http" || cfg.kind == "openai") return std::make_unique<HttpEmbeddingProvider>(cfg);
  throw UsageError("unknown embedding provider kind '" + cfg.kind + "'");
}

}  // namespace thmsearch
