#pragma once

#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "thmsearch/detail/io.hpp"
#include "thmsearch/embedding.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/providers.hpp"

namespace testing_support {

inline std::filesystem::path data_dir() { return THMSEARCH_DATA_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return data_dir() / "fixtures" / name; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "thmsearch") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Replays canned responses in order and records every prompt it was given.
class ScriptedGenerator : public thmsearch::TextGenerator {
 public:
  explicit ScriptedGenerator(std::vector<std::string> replies, std::string id = "scripted")
      : replies_(replies.begin(), replies.end()), id_(std::move(id)) {}

  std::string id() const override { return id_; }

  std::string generate(const thmsearch::GenerationRequest& request) override {
    std::lock_guard lock(mu_);
    prompts.push_back(request.prompt);
    requests.push_back(request);
    if (replies_.empty()) throw thmsearch::ProviderError("script exhausted", false);
    std::string r = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return r;
  }

  std::vector<std::string> prompts;
  std::vector<thmsearch::GenerationRequest> requests;

 private:
  std::mutex mu_;
  std::deque<std::string> replies_;
  std::string id_;
};

class ThrowingGenerator : public thmsearch::TextGenerator {
 public:
  explicit ThrowingGenerator(bool timeout = false) : timeout_(timeout) {}
  std::string id() const override { return "throwing"; }
  std::string generate(const thmsearch::GenerationRequest&) override {
    ++calls;
    if (timeout_) throw thmsearch::ProviderTimeout("generation timed out");
    throw thmsearch::ProviderError("generation service unreachable");
  }
  std::atomic<int> calls{0};

 private:
  bool timeout_;
};

// Embedder that fails every call; id/dim mimic the mock so artifacts load.
class DownEmbedder : public thmsearch::EmbeddingProvider {
 public:
  explicit DownEmbedder(std::size_t dim, std::string id) : dim_(dim), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed(std::span<const std::string>) override {
    throw thmsearch::ProviderError("connection refused", false);
  }

 private:
  std::size_t dim_;
  std::string id_;
};

inline std::vector<float> random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(dim);
  double sq = 0.0;
  for (auto& x : v) {
    x = dist(rng);
    sq += double(x) * x;
  }
  float inv = static_cast<float>(1.0 / std::sqrt(sq));
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace testing_support
