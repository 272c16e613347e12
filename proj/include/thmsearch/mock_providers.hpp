#pragma once

// Deterministic offline stand-ins for the generation services, used by
// --mock-providers and the test suites. They read the structured prompts
// built by this library, so they only work against those templates.

#include <atomic>
#include <cctype>
#include <sstream>
#include <string>
#include <string_view>

#include "thmsearch/informalizer.hpp"
#include "thmsearch/providers.hpp"
#include "thmsearch/query.hpp"

namespace thmsearch {

namespace detail {

// Text following `label` up to the first blank line (or end).
inline std::string section_after(std::string_view prompt, std::string_view label) {
  auto pos = prompt.find(label);
  if (pos == std::string_view::npos) return {};
  auto rest = prompt.substr(pos + label.size());
  auto end = rest.find("\n\n");
  return trim(rest.substr(0, end));
}

inline std::string humanize_decl_name(std::string_view name) {
  std::string out;
  for (char c : name) out.push_back(c == '.' || c == '_' ? ' ' : c);
  out = collapse_whitespace(out);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

}  // namespace detail

// Name: the declaration name in words. Statement: docstring (if any) followed
// by the formal statement on one line.
class MockInformalizer : public TextGenerator {
 public:
  std::string id() const override { return "mock-informalizer-v1"; }

  std::string generate(const GenerationRequest& request) override {
    ++calls_;
    std::string name = detail::section_after(request.prompt, "THEOREM NAME:");
    std::string formal = detail::section_after(request.prompt, "FORMAL STATEMENT:\n");
    if (name.empty() || formal.empty()) return "unrecognized request";
    std::string doc = detail::section_after(request.prompt, "DOCUMENTATION STRING:\n");
    std::string statement = doc.empty() ? "" : detail::collapse_whitespace(doc) + " ";
    statement += "Formally, " + detail::collapse_whitespace(formal);
    return "INFORMAL NAME: " + detail::humanize_decl_name(name) + "\nINFORMAL STATEMENT: " + statement + "\n";
  }

  std::size_t calls() const { return calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Echoes the query back as all three fields, naming it by its first words.
class MockAugmenter : public TextGenerator {
 public:
  std::string id() const override { return "mock-augmenter-v1"; }

  std::string generate(const GenerationRequest& request) override {
    ++calls_;
    std::string_view p = request.prompt;
    constexpr std::string_view kSlot = "TASK\nINPUT QUERY:\n";
    auto pos = p.rfind(kSlot);
    auto end = p.rfind("\n\nOUTPUT FORMAT:");
    if (pos == std::string_view::npos || end == std::string_view::npos || end < pos + kSlot.size())
      return "unrecognized request";
    std::string query = detail::collapse_whitespace(p.substr(pos + kSlot.size(), end - pos - kSlot.size()));
    std::istringstream words(query);
    std::string w, name;
    for (int i = 0; i < 6 && words >> w; ++i) name += (name.empty() ? "" : " ") + w;
    return "FORMAL: " + query + "\nNAME: " + name + "\nSTATEMENT: " + query + "\n";
  }

  std::size_t calls() const { return calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

}  // namespace thmsearch
