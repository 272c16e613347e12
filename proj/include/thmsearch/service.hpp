#pragma once

// Read-only HTTP+JSON search service over a loaded corpus and index.
//
//   GET  /health         liveness and index parameters; never calls providers
//   POST /search         {"query": string, "k"?: int, "augment"?: bool, "timing"?: bool}
//   GET  /theorem/{id}   one corpus record with its informal pair
//
// Errors: {"error": {"code": string, "message": string}}. Handlers are plain
// functions of the request so they can be exercised without a socket.

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "thmsearch/config.hpp"
#include "thmsearch/detail/utf8.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/pipeline.hpp"
#include "thmsearch/query.hpp"
#include "thmsearch/remote.hpp"

namespace thmsearch {

struct ServiceResponse {
  int status = 200;
  std::string body;
  double timing_ms = 0.0;
};

inline ServiceResponse error_response(int status, std::string_view code, std::string_view message) {
  nlohmann::json j = {{"error", {{"code", code}, {"message", message}}}};
  return {status, j.dump(), 0.0};
}

class SearchService {
 public:
  // Takes ownership of the providers; `augmenter` may be null.
  SearchService(Config config, std::unique_ptr<EmbeddingProvider> embedder, std::unique_ptr<TextGenerator> augmenter)
      : config_(std::move(config)), embedder_(std::move(embedder)), augmenter_(std::move(augmenter)) {
    config_.validate();
    artifacts_ = load_search_artifacts(config_.corpus_file(), config_.informal_file(), config_.index_file(), *embedder_);
    AugmentOptions aug;
    aug.timeout = config_.request_timeout;
    engine_ = std::make_unique<SearchEngine>(artifacts_.corpus, *artifacts_.index, *embedder_, augmenter_.get(),
                                             artifacts_.presets, aug);
  }

  static std::unique_ptr<SearchService> from_config(const Config& config) {
    return std::make_unique<SearchService>(config, make_embedder(config.embedding),
                                           make_generator(config.augmentation, GeneratorRole::augmentation));
  }

  const Config& config() const { return config_; }
  const SearchEngine& engine() const { return *engine_; }

  ServiceResponse handle_health() const {
    const auto& idx = *artifacts_.index;
    const auto& p = idx.params();
    nlohmann::json index = {{"size", idx.size()},
                            {"dim", idx.dim()},
                            {"m", p.m},
                            {"m0", p.m0},
                            {"ef_construction", p.ef_construction},
                            {"ef_search", p.ef_search},
                            {"preset", artifacts_.presets.id}};
    if (auto it = idx.metadata().find("provider_id"); it != idx.metadata().end()) index["provider_id"] = it->second;
    nlohmann::json j = {{"status", "ok"}, {"corpus_size", artifacts_.corpus.records.size()}, {"index", index}};
    return {200, j.dump(), 0.0};
  }

  ServiceResponse handle_search(std::string_view body) const {
    auto start = std::chrono::steady_clock::now();
    auto req = nlohmann::json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return error_response(400, "invalid_request", "body must be a JSON object");
    auto q = req.find("query");
    if (q == req.end() || !q->is_string()) return error_response(400, "invalid_request", "'query' must be a string");
    std::string query = q->get<std::string>();
    if (detail::trim(query).empty()) return error_response(400, "empty_query", "query is empty");
    if (detail::char_count(query) > config_.max_query_chars)
      return error_response(400, "query_too_long",
                            "query exceeds " + std::to_string(config_.max_query_chars) + " characters");
    SearchOptions opts;
    opts.k = config_.default_k;
    opts.augment = config_.augment;
    if (auto k = req.find("k"); k != req.end()) {
      if (!k->is_number_integer() || k->get<long long>() < 1 || k->get<long long>() > 100)
        return error_response(400, "invalid_request", "'k' must be an integer in [1, 100]");
      opts.k = k->get<std::size_t>();
    }
    if (auto a = req.find("augment"); a != req.end()) {
      if (!a->is_boolean()) return error_response(400, "invalid_request", "'augment' must be a boolean");
      opts.augment = a->get<bool>();
    }
    bool timing = false;
    if (auto t = req.find("timing"); t != req.end()) {
      if (!t->is_boolean()) return error_response(400, "invalid_request", "'timing' must be a boolean");
      timing = t->get<bool>();
    }
    try {
      auto j = to_json(engine_->run_search(query, opts));
      double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (timing) j["timing_ms"] = ms;
      return {200, j.dump(), ms};
    } catch (const ProviderError& e) {
      return error_response(502, "embedding_provider_unavailable", e.what());
    } catch (const std::exception& e) {
      return error_response(500, "internal", e.what());
    }
  }

  ServiceResponse handle_theorem(const std::string& id) const {
    auto it = artifacts_.corpus.records.find(id);
    if (it == artifacts_.corpus.records.end()) return error_response(404, "not_found", "no theorem '" + id + "'");
    const auto& r = it->second;
    nlohmann::json deps = nlohmann::json::array();
    for (const auto& d : r.dependencies) deps.push_back(d.name);
    nlohmann::json j = {{"theorem_id", r.id},
                        {"name", r.name},
                        {"kind", std::string(to_string(r.kind))},
                        {"formal_statement", r.formal_statement},
                        {"docstring", r.docstring ? nlohmann::json(*r.docstring) : nlohmann::json(nullptr)},
                        {"source_path", r.source_path},
                        {"dependencies", deps},
                        {"informal_name", nullptr},
                        {"informal_statement", nullptr}};
    if (auto p = artifacts_.corpus.pairs.find(id); p != artifacts_.corpus.pairs.end()) {
      j["informal_name"] = p->second.informal_name;
      j["informal_statement"] = p->second.informal_statement;
    }
    return {200, j.dump(), 0.0};
  }

  // Binds the configured address (port 0 picks a free port) and returns the
  // bound port. Throws on bind failure.
  int bind() {
    install_routes();
    if (config_.port == 0) {
      int port = server_.bind_to_any_port(config_.host);
      if (port <= 0) throw UsageError("cannot bind " + config_.host + ":0");
      bound_port_ = port;
    } else {
      if (!server_.bind_to_port(config_.host, config_.port))
        throw UsageError("cannot bind " + config_.host + ":" + std::to_string(config_.port) +
                         " (address in use or not permitted)");
      bound_port_ = config_.port;
    }
    return bound_port_;
  }

  // Serves until stop(); in-flight requests finish before this returns.
  void run() {
    if (bound_port_ < 0) bind();
    server_.listen_after_bind();
  }

  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  int port() const { return bound_port_; }

 private:
  void install_routes() {
    if (routes_installed_) return;
    routes_installed_ = true;
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.request_timeout).count();
    server_.set_read_timeout(std::max<long long>(1, secs), 0);
    server_.set_write_timeout(std::max<long long>(1, secs), 0);
    auto send = [this](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body, "application/json");
      if (config_.cors) res.set_header("Access-Control-Allow-Origin", "*");
    };
    server_.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_health()); });
    server_.Post("/search", [this, send](const httplib::Request& req, httplib::Response& res) {
      auto r = handle_search(req.body);
      send(res, r);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.timing_ms);
      res.set_header("X-Timing-Ms", buf);
    });
    server_.Get(R"(/theorem/(.+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, handle_theorem(req.matches[1]));
    });
    server_.Options(R"(.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      if (config_.cors) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
      }
    });
    server_.set_error_handler([this](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      auto r = res.status == 404 ? error_response(404, "not_found", "no such endpoint")
                                 : error_response(res.status, "invalid_request", "request rejected");
      res.set_content(r.body, "application/json");
      if (config_.cors) res.set_header("Access-Control-Allow-Origin", "*");
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      auto r = error_response(500, "internal", "unhandled server error");
      res.status = 500;
      res.set_content(r.body, "application/json");
    });
  }

  Config config_;
  std::unique_ptr<EmbeddingProvider> embedder_;
  std::unique_ptr<TextGenerator> augmenter_;
  SearchArtifacts artifacts_;
  std::unique_ptr<SearchEngine> engine_;
  httplib::Server server_;
  bool routes_installed_ = false;
  int bound_port_ = -1;
};

}  // namespace thmsearch
