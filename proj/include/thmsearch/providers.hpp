#pragma once

// Provider interfaces shared by informalization, query augmentation and
// embedding. Implementations must tolerate concurrent calls.

#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace thmsearch {

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.0;
  std::size_t max_output_chars = 4096;
  std::chrono::milliseconds timeout{20000};
};

// Single text-in/text-out completion call. Throws ProviderError (or
// ProviderTimeout) on transport failure.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string id() const = 0;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

// Returns one raw (not necessarily normalized) vector per input, in order.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) = 0;
};

}  // namespace thmsearch
