#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "thmsearch/config.hpp"
#include "thmsearch/mock_providers.hpp"
#include "thmsearch/pipeline.hpp"
#include "thmsearch/remote.hpp"
#include "thmsearch/service.hpp"

using namespace thmsearch;
using nlohmann::json;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

// Runs an httplib server on a free port for the lifetime of the object.
class FakeServer {
 public:
  FakeServer() = default;
  ~FakeServer() { stop(); }
  httplib::Server& server() { return server_; }
  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

// A built workdir over the fixture corpus with the 64-dim mock embedder.
class ServiceFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing_support::TempDir("svc");
    auto m = Manifest::load(dir_->path());
    run_ingest(m, {testing_support::fixture("mini_corpus.jsonl"), false, false});
    MockInformalizer gen;
    run_informalize(m, gen);
    MockEmbedder emb(64);
    run_embed(m, emb, default_preset_pair());
    run_index(m);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static Config config() {
    Config c;
    c.workdir = dir_->path();
    c.embedding.dim = 64;
    c.port = 0;
    return c;
  }

  static std::unique_ptr<SearchService> service(Config c = config()) {
    return std::make_unique<SearchService>(c, std::make_unique<MockEmbedder>(64), std::make_unique<MockAugmenter>());
  }

  static testing_support::TempDir* dir_;
};

testing_support::TempDir* ServiceFixture::dir_ = nullptr;

std::string error_code(const ServiceResponse& r) { return json::parse(r.body)["error"]["code"]; }

}  // namespace

// --- config ------------------------------------------------------------------

TEST(Config, DefaultsValidate) {
  auto c = load_config(std::nullopt, env_of({}));
  EXPECT_EQ(c.port, 8080);
  EXPECT_EQ(c.default_k, 20u);
  EXPECT_EQ(c.preset, "bilingual");
  EXPECT_EQ(c.embedding.kind, "mock");
  EXPECT_EQ(c.index_file(), std::filesystem::path("work") / "index.hnsw");
}

TEST(Config, EnvironmentOverridesFile) {
  testing_support::TempDir dir;
  detail::write_file_atomic(dir / "c.json", R"({"port": 9000, "default_k": 5, "workdir": "from-file", "cors": true,
    "providers": {"embedding": {"kind": "http", "endpoint": "http://e:1/embed", "model": "m", "dim": 8,
                                "api_key_env": "MY_KEY"}}})");
  auto c = load_config(dir / "c.json", env_of({{"THMSEARCH_PORT", "9100"}, {"MY_KEY", "secret"}}));
  EXPECT_EQ(c.port, 9100);
  EXPECT_EQ(c.default_k, 5u);
  EXPECT_EQ(c.workdir, "from-file");
  EXPECT_TRUE(c.cors);
  EXPECT_EQ(c.embedding.kind, "http");
  EXPECT_EQ(c.embedding.dim, 8u);
  EXPECT_EQ(c.embedding.api_key, "secret");
  auto env = load_config(dir / "c.json", env_of({{"THMSEARCH_EMBEDDING_DIM", "16"},
                                                 {"THMSEARCH_EMBEDDING_API_KEY", "k2"},
                                                 {"THMSEARCH_AUGMENT", "false"}}));
  EXPECT_EQ(env.embedding.dim, 16u);
  EXPECT_EQ(env.embedding.api_key, "k2");
  EXPECT_FALSE(env.augment);
}

TEST(Config, InvalidValuesAreUsageErrors) {
  testing_support::TempDir dir;
  EXPECT_THROW(load_config(std::nullopt, env_of({{"THMSEARCH_PORT", "eighty"}})), UsageError);
  EXPECT_THROW(load_config(std::nullopt, env_of({{"THMSEARCH_DEFAULT_K", "0"}})), UsageError);
  EXPECT_THROW(load_config(std::nullopt, env_of({{"THMSEARCH_CORS", "maybe"}})), UsageError);
  detail::write_file_atomic(dir / "bad.json", "{");
  EXPECT_THROW(load_config(dir / "bad.json", env_of({})), UsageError);
  detail::write_file_atomic(dir / "wrong.json", R"({"port": "x"})");
  EXPECT_THROW(load_config(dir / "wrong.json", env_of({})), UsageError);
}

TEST(Config, MockSwitchKeepsDim) {
  Config c;
  c.embedding.kind = "http";
  c.embedding.dim = 24;
  use_mock_providers(c);
  EXPECT_EQ(c.embedding.kind, "mock");
  EXPECT_EQ(make_embedder(c.embedding)->id(), "mock-trigram-24");
  EXPECT_EQ(make_generator(c.augmentation, GeneratorRole::augmentation)->id(), "mock-augmenter-v1");
  EXPECT_EQ(make_generator(c.informalization, GeneratorRole::informalization)->id(), "mock-informalizer-v1");
}

// --- remote providers ----------------------------------------------------------

TEST(RemoteProviders, GenericProtocolRoundTrip) {
  FakeServer fake;
  std::string auth;
  json seen;
  std::mutex mu;
  fake.server().Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    auth = req.get_header_value("Authorization");
    seen = json::parse(req.body);
    res.set_content(json{{"text", "INFORMAL NAME: N\nINFORMAL STATEMENT: S"}}.dump(), "application/json");
  });
  fake.server().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json vectors = json::array();
    for (std::size_t i = 0; i < body["inputs"].size(); ++i) vectors.push_back({1.0, 2.0, 2.0});
    res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
  });
  fake.start();

  ProviderConfig g{"http", fake.url("/generate"), "gen-model", 0, "k-123", std::chrono::milliseconds(2000)};
  auto gen = make_generator(g, GeneratorRole::informalization);
  EXPECT_EQ(gen->id(), "http:gen-model");
  EXPECT_EQ(gen->generate({"hello", 0.0, 100, std::chrono::milliseconds(2000)}),
            "INFORMAL NAME: N\nINFORMAL STATEMENT: S");
  EXPECT_EQ(auth, "Bearer k-123");
  EXPECT_EQ(seen["prompt"], "hello");
  EXPECT_EQ(seen["model"], "gen-model");

  ProviderConfig e{"http", fake.url("/embed"), "emb", 3, "", std::chrono::milliseconds(2000)};
  auto emb = make_embedder(e);
  EXPECT_EQ(emb->id(), "http:emb@3");
  std::vector<std::string> texts{"a", "b"};
  auto out = embed_batch(texts, default_preset_pair().doc, *emb);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_NEAR(out[0].values[0], 1.0f / 3.0f, 1e-6);
}

TEST(RemoteProviders, OpenAiShapes) {
  FakeServer fake;
  fake.server().Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    std::string content = body["messages"][0]["content"];
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo:" + content}}}}}}}.dump(),
                    "application/json");
  });
  fake.server().Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json data = json::array();
    for (std::size_t i = body["input"].size(); i-- > 0;)
      data.push_back({{"index", i}, {"embedding", {double(i) + 1.0, 0.0}}});
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  fake.start();
  HttpTextGenerator gen({"openai", fake.url("/v1/chat/completions"), "gpt", 0, "", std::chrono::milliseconds(2000)});
  EXPECT_EQ(gen.generate({"p", 0.0, 10, std::chrono::milliseconds(2000)}), "echo:p");
  HttpEmbeddingProvider emb({"openai", fake.url("/v1/embeddings"), "e", 2, "", std::chrono::milliseconds(2000)});
  std::vector<std::string> texts{"x", "y"};
  auto v = emb.embed(texts);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0][0], 1.0f);
  EXPECT_EQ(v[1][0], 2.0f);
}

TEST(RemoteProviders, ErrorMapping) {
  FakeServer fake;
  fake.server().Post("/busy", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  fake.server().Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  fake.server().Post("/html", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html></html>", "text/html");
  });
  fake.server().Post("/shape", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"unexpected\": 1}", "application/json");
  });
  fake.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content("{\"text\": \"late\"}", "application/json");
  });
  fake.start();
  auto gen = [&](const std::string& path) {
    return HttpTextGenerator({"http", fake.url(path), "m", 0, "", std::chrono::milliseconds(300)});
  };
  GenerationRequest req{"p", 0.0, 10, std::chrono::milliseconds(300)};
  try {
    gen("/busy").generate(req);
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_TRUE(e.transient());
  }
  try {
    gen("/bad").generate(req);
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_FALSE(e.transient());
  }
  EXPECT_THROW(gen("/html").generate(req), ProviderError);
  EXPECT_THROW(gen("/shape").generate(req), ProviderError);
  EXPECT_THROW(gen("/slow").generate(req), ProviderTimeout);
  EXPECT_THROW(HttpTextGenerator({"http", "localhost/no-scheme", "m", 0, "", std::chrono::milliseconds(10)}),
               UsageError);
  EXPECT_THROW(make_embedder({"carrier-pigeon", "", "", 8, "", std::chrono::milliseconds(10)}), UsageError);
}

TEST(RemoteProviders, UnreachableEndpointIsProviderError) {
  HttpEmbeddingProvider emb({"http", "http://127.0.0.1:1/embed", "m", 4, "", std::chrono::milliseconds(500)});
  std::vector<std::string> texts{"x"};
  EXPECT_THROW(emb.embed(texts), ProviderError);
}

// --- service handlers ------------------------------------------------------------

TEST_F(ServiceFixture, HealthReportsIndex) {
  auto svc = service();
  auto r = svc->handle_health();
  EXPECT_EQ(r.status, 200);
  auto j = json::parse(r.body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["corpus_size"], 9);
  EXPECT_EQ(j["index"]["size"], 9);
  EXPECT_EQ(j["index"]["dim"], 64);
  EXPECT_EQ(j["index"]["provider_id"], "mock-trigram-64");
  EXPECT_EQ(j["index"]["preset"], "bilingual");
}

TEST_F(ServiceFixture, SearchIsByteDeterministic) {
  auto svc = service();
  const std::string body = R"({"query": "modus tollens contrapositive", "k": 5})";
  auto a = svc->handle_search(body);
  auto b = svc->handle_search(body);
  ASSERT_EQ(a.status, 200) << a.body;
  EXPECT_EQ(a.body, b.body);
  auto j = json::parse(a.body);
  EXPECT_EQ(j["results"].size(), 5u);
  EXPECT_TRUE(j["augmented_query"]["augmented"].get<bool>());
  EXPECT_FALSE(j.contains("timing_ms"));
  auto t = json::parse(svc->handle_search(R"({"query": "x", "timing": true})").body);
  EXPECT_TRUE(t["timing_ms"].is_number());
}

TEST_F(ServiceFixture, SearchDefaultsAndAugmentToggle) {
  auto svc = service();
  auto j = json::parse(svc->handle_search(R"({"query": "prime", "augment": false})").body);
  EXPECT_EQ(j["results"].size(), 9u);
  EXPECT_FALSE(j.contains("augmented_query"));
  EXPECT_EQ(j["results"][0]["rank"], 1);
}

TEST_F(ServiceFixture, BadRequestsAre400) {
  auto svc = service();
  EXPECT_EQ(error_code(svc->handle_search("not json")), "invalid_request");
  EXPECT_EQ(error_code(svc->handle_search("[]")), "invalid_request");
  EXPECT_EQ(error_code(svc->handle_search(R"({"q": "x"})")), "invalid_request");
  EXPECT_EQ(error_code(svc->handle_search(R"({"query": 5})")), "invalid_request");
  EXPECT_EQ(error_code(svc->handle_search(R"({"query": "  "})")), "empty_query");
  EXPECT_EQ(error_code(svc->handle_search(json{{"query", std::string(2049, 'a')}}.dump())), "query_too_long");
  EXPECT_EQ(svc->handle_search(json{{"query", std::string(2048, 'a')}}.dump()).status, 200);
  for (const char* k : {"0", "101", "\"5\"", "2.5", "-1"})
    EXPECT_EQ(error_code(svc->handle_search(std::string(R"({"query": "x", "k": )") + k + "}")), "invalid_request") << k;
  EXPECT_EQ(error_code(svc->handle_search(R"({"query": "x", "augment": "yes"})")), "invalid_request");
  EXPECT_EQ(error_code(svc->handle_search(R"({"query": "x", "timing": 1})")), "invalid_request");
  EXPECT_EQ(svc->handle_search(R"({"query": "x"})").status, 200);
  EXPECT_EQ(svc->handle_search("{}").status, 400);
}

TEST_F(ServiceFixture, EmbeddingOutageIs502) {
  SearchService svc(config(), std::make_unique<testing_support::DownEmbedder>(64, "mock-trigram-64"), nullptr);
  auto r = svc.handle_search(R"({"query": "x"})");
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(error_code(r), "embedding_provider_unavailable");
  EXPECT_EQ(svc.handle_health().status, 200);
}

TEST_F(ServiceFixture, AugmenterOutageStillServes) {
  auto down = std::make_unique<testing_support::ThrowingGenerator>();
  SearchService svc(config(), std::make_unique<MockEmbedder>(64), std::move(down));
  auto r = svc.handle_search(R"({"query": "x"})");
  EXPECT_EQ(r.status, 200);
  EXPECT_FALSE(json::parse(r.body)["augmented_query"]["augmented"].get<bool>());
}

TEST_F(ServiceFixture, TheoremLookup) {
  auto svc = service();
  auto r = svc->handle_theorem("Exists.choose_spec");
  ASSERT_EQ(r.status, 200);
  auto j = json::parse(r.body);
  EXPECT_EQ(j["name"], "Exists.choose_spec");
  EXPECT_EQ(j["kind"], "theorem");
  EXPECT_FALSE(j["informal_name"].is_null());
  EXPECT_NE(std::find(j["dependencies"].begin(), j["dependencies"].end(), "Exists.choose"), j["dependencies"].end());
  EXPECT_EQ(svc->handle_theorem("nope").status, 404);
  EXPECT_EQ(error_code(svc->handle_theorem("nope")), "not_found");
}

TEST_F(ServiceFixture, StartupRejectsMismatchedEmbedder) {
  EXPECT_THROW(SearchService(config(), std::make_unique<MockEmbedder>(32), nullptr), DataError);
  EXPECT_THROW(SearchService(config(), std::make_unique<testing_support::DownEmbedder>(64, "other"), nullptr),
               DataError);
  auto missing = config();
  missing.index_path = dir_->path() / "absent.hnsw";
  EXPECT_THROW(SearchService(missing, std::make_unique<MockEmbedder>(64), nullptr), DataError);
  auto bad = config();
  bad.default_k = 0;
  EXPECT_THROW(SearchService(bad, std::make_unique<MockEmbedder>(64), nullptr), UsageError);
}

TEST_F(ServiceFixture, FromConfigUsesConfiguredProviders) {
  auto cfg = config();
  auto svc = SearchService::from_config(cfg);
  EXPECT_EQ(svc->handle_health().status, 200);
  cfg.embedding.dim = 32;
  EXPECT_THROW(SearchService::from_config(cfg), DataError);
}

TEST_F(ServiceFixture, LiveServerContract) {
  auto cfg = config();
  cfg.cors = true;
  auto svc = service(cfg);
  int port = svc->bind();
  ASSERT_GT(port, 0);
  std::thread t([&] { svc->run(); });
  svc->wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

  auto s1 = client.Post("/search", R"({"query": "bijection from injections"})", "application/json");
  auto s2 = client.Post("/search", R"({"query": "bijection from injections"})", "application/json");
  ASSERT_TRUE(s1 && s2);
  EXPECT_EQ(s1->status, 200);
  EXPECT_EQ(s1->body, s2->body);
  EXPECT_TRUE(s1->has_header("X-Timing-Ms"));
  EXPECT_EQ(s1->get_header_value("Content-Type"), "application/json");

  auto bad = client.Post("/search", R"({"query": ""})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["error"]["code"], "empty_query");

  auto thm = client.Get("/theorem/Nat.add_comm");
  ASSERT_TRUE(thm);
  EXPECT_EQ(thm->status, 200);
  auto missing = client.Get("/no/such/route");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "not_found");

  auto pre = client.Options("/search");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");

  svc->stop();
  t.join();
}

TEST_F(ServiceFixture, BindConflictIsUsageError) {
  auto first = service();
  int port = first->bind();
  auto cfg = config();
  cfg.port = port;
  auto second = service(cfg);
  EXPECT_THROW(second->bind(), UsageError);
}
