#pragma once

// Informalization: prompt construction from a theorem plus its docstring and
// linked definitions, response parsing, corpus document formatting, and the
// prompt-hash keyed cache that makes re-runs incremental.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "thmsearch/corpus.hpp"
#include "thmsearch/detail/hash.hpp"
#include "thmsearch/detail/io.hpp"
#include "thmsearch/detail/parallel.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/providers.hpp"

namespace thmsearch {

struct InformalPair {
  std::string theorem_id;
  std::string informal_name;
  std::string informal_statement;

  bool operator==(const InformalPair&) const = default;
};

// Bump when the wording below changes; it is part of every prompt hash.
inline constexpr std::string_view kInformalizationTemplateVersion = "informalize-v1";

inline constexpr std::string_view kInformalizationPreamble =
    "You are an expert in the Lean 4 theorem prover and its mathematics library mathlib4.\n"
    "Translate the formal theorem below into natural language for a mathematician who does not read Lean.\n"
    "Use the documentation string and the annotated definitions to understand the notation and the names "
    "that appear in the statement, and spell out abbreviated names in words.\n"
    "Use LaTeX for mathematical expressions where it helps readability.\n";

inline constexpr std::string_view kInformalizationOutputDirective =
    "OUTPUT FORMAT:\n"
    "Reply with exactly two lines and nothing else:\n"
    "INFORMAL NAME: <a short descriptive name for the theorem, on one line>\n"
    "INFORMAL STATEMENT: <the theorem stated precisely in natural language>\n";

inline constexpr std::string_view kInformalizationFormatReminder =
    "\nREMINDER: your previous reply could not be parsed. Answer with exactly two lines, the first starting "
    "with \"INFORMAL NAME:\" and the second starting with \"INFORMAL STATEMENT:\".\n";

inline std::string build_informalization_prompt(const TheoremRecord& record) {
  std::string p;
  p += kInformalizationPreamble;
  p += "\nTHEOREM NAME: ";
  p += record.name;
  p += "\n\nFORMAL STATEMENT:\n";
  p += record.formal_statement;
  p += "\n";
  if (record.docstring) {
    p += "\nDOCUMENTATION STRING:\n";
    p += *record.docstring;
    p += "\n";
  }
  if (!record.dependencies.empty()) {
    p += "\nANNOTATIONS:\nThe statement refers to the following definitions.\n";
    for (const auto& dep : record.dependencies) {
      p += "\nDEFINITION: ";
      p += dep.name;
      p += "\nSTATEMENT: ";
      p += dep.statement;
      p += "\n";
      if (dep.docstring) {
        p += "DOCUMENTATION: ";
        p += *dep.docstring;
        p += "\n";
      }
    }
  }
  p += "\n";
  p += kInformalizationOutputDirective;
  return p;
}

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::toupper(static_cast<unsigned char>(s[i])) != std::toupper(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

// Extracts `LABEL: value` fields from model output. A field starts on a line
// beginning with its label (case-insensitive, optional markdown decoration)
// and runs until the next label line. First occurrence of a label wins.
inline std::vector<std::optional<std::string>> parse_labeled_fields(std::string_view text,
                                                                    const std::vector<std::string>& labels) {
  std::vector<std::optional<std::string>> values(labels.size());
  std::optional<std::size_t> current;
  bool current_active = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view(line);
    std::size_t lead = view.find_first_not_of(" \t*#->");
    std::string_view body = lead == std::string_view::npos ? std::string_view{} : view.substr(lead);
    std::optional<std::size_t> matched;
    // Longest label first so "INFORMAL STATEMENT:" is not taken for "STATEMENT:".
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (starts_with_ci(body, labels[i]) && labels[i].size() > best_len) {
        matched = i;
        best_len = labels[i].size();
      }
    }
    if (matched) {
      std::string_view rest = body.substr(labels[*matched].size());
      std::size_t skip = rest.find_first_not_of(" \t*");
      rest = skip == std::string_view::npos ? std::string_view{} : rest.substr(skip);
      current = matched;
      current_active = !values[*matched].has_value();
      if (current_active) values[*matched] = std::string(rest);
      continue;
    }
    if (current && current_active) {
      *values[*current] += '\n';
      *values[*current] += line;
    }
  }
  for (auto& v : values)
    if (v) *v = trim(*v);
  return values;
}

}  // namespace detail

// Returns (informal_name, informal_statement); throws FormatError if either
// label is missing or empty.
inline std::pair<std::string, std::string> parse_generation(std::string_view text) {
  auto fields = detail::parse_labeled_fields(text, {"INFORMAL NAME:", "INFORMAL STATEMENT:"});
  if (!fields[0] || fields[0]->empty()) throw FormatError("generation is missing 'INFORMAL NAME:'");
  if (!fields[1] || fields[1]->empty()) throw FormatError("generation is missing 'INFORMAL STATEMENT:'");
  return {std::move(*fields[0]), std::move(*fields[1])};
}

// Single line, colons replaced by hyphens so "name:statement" stays splittable.
inline std::string sanitize_informal_name(std::string_view name) {
  std::string s = detail::collapse_whitespace(name);
  std::replace(s.begin(), s.end(), ':', '-');
  return s;
}

struct InformalizeOptions {
  double temperature = 0.0;
  std::size_t max_output_chars = 4096;
  std::chrono::milliseconds timeout{60000};
};

inline InformalPair informalize_prompt(const std::string& theorem_id, const std::string& prompt,
                                       TextGenerator& generator, const InformalizeOptions& opts = {}) {
  GenerationRequest req{prompt, opts.temperature, opts.max_output_chars, opts.timeout};
  std::string first = generator.generate(req);
  std::pair<std::string, std::string> parsed;
  try {
    parsed = parse_generation(first);
  } catch (const FormatError&) {
    req.prompt += kInformalizationFormatReminder;
    std::string second = generator.generate(req);
    try {
      parsed = parse_generation(second);
    } catch (const FormatError& e) {
      throw FormatError("informalization of '" + theorem_id + "' failed after retry: " + e.what());
    }
  }
  InformalPair pair{theorem_id, sanitize_informal_name(parsed.first), std::move(parsed.second)};
  if (pair.informal_name.empty()) throw FormatError("informalization of '" + theorem_id + "' produced an empty name");
  return pair;
}

inline InformalPair informalize(const TheoremRecord& record, TextGenerator& generator,
                                const InformalizeOptions& opts = {}) {
  return informalize_prompt(record.id, build_informalization_prompt(record), generator, opts);
}

// "<formal statement>\n<informal name>:<informal statement>"
inline std::string format_corpus_entry(const TheoremRecord& record, const InformalPair& pair) {
  if (pair.theorem_id != record.id)
    throw UsageError("informal pair for '" + pair.theorem_id + "' does not belong to '" + record.id + "'");
  std::string doc;
  doc.reserve(record.formal_statement.size() + pair.informal_name.size() + pair.informal_statement.size() + 2);
  doc += record.formal_statement;
  doc += '\n';
  doc += pair.informal_name;
  doc += ':';
  doc += pair.informal_statement;
  return doc;
}

// Informal-only corpus variant: "theorem name: informal statement".
inline std::string format_informal_entry(const InformalPair& pair) {
  return pair.informal_name + ": " + pair.informal_statement;
}

struct DocumentParts {
  std::string formal;
  std::string name;
  std::string statement;
};

// Inverse of format_corpus_entry: split at the first newline, then at the
// first colon of the remainder. Formal statements may not contain newlines
// for this to be exact; names never contain colons.
inline std::optional<DocumentParts> split_document(std::string_view doc) {
  auto nl = doc.find('\n');
  if (nl == std::string_view::npos) return std::nullopt;
  auto rest = doc.substr(nl + 1);
  auto colon = rest.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  return DocumentParts{std::string(doc.substr(0, nl)), std::string(rest.substr(0, colon)),
                       std::string(rest.substr(colon + 1))};
}

// --- informalization cache / pairs file ------------------------------------

struct InformalEntry {
  InformalPair pair;
  std::string provider_id;
  std::string prompt_hash;
};

inline std::string informalization_prompt_hash(std::string_view provider_id, std::string_view prompt) {
  return detail::to_hex(
      detail::Sha256().field(kInformalizationTemplateVersion).field(provider_id).field(prompt).digest());
}

inline nlohmann::json to_json(const InformalEntry& e) {
  return {{"theorem_id", e.pair.theorem_id},
          {"informal_name", e.pair.informal_name},
          {"informal_statement", e.pair.informal_statement},
          {"provider_id", e.provider_id},
          {"prompt_hash", e.prompt_hash}};
}

inline InformalEntry informal_entry_from_json(const nlohmann::json& j) {
  try {
    InformalEntry e;
    e.pair.theorem_id = j.at("theorem_id").get<std::string>();
    e.pair.informal_name = j.at("informal_name").get<std::string>();
    e.pair.informal_statement = j.at("informal_statement").get<std::string>();
    e.provider_id = j.at("provider_id").get<std::string>();
    e.prompt_hash = j.at("prompt_hash").get<std::string>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("bad informal pair record: ") + ex.what());
  }
}

// Reads a pairs/cache file; later lines for the same theorem win.
inline std::vector<InformalEntry> load_informal_entries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<InformalEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": not JSON");
    out.push_back(informal_entry_from_json(j));
  }
  return out;
}

inline std::unordered_map<std::string, InformalPair> load_pairs(const std::filesystem::path& path) {
  std::unordered_map<std::string, InformalPair> out;
  for (auto& e : load_informal_entries(path)) out[e.pair.theorem_id] = std::move(e.pair);
  return out;
}

inline void write_informal_entries(const std::filesystem::path& path, const std::vector<InformalEntry>& entries) {
  std::string data;
  for (const auto& e : entries) {
    data += to_json(e).dump();
    data += '\n';
  }
  detail::write_file_atomic(path, data);
}

// Append-only cache keyed by theorem id + prompt hash. Appends are serialized.
class InformalCache {
 public:
  InformalCache() = default;
  explicit InformalCache(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_))
      for (auto& e : load_informal_entries(path_)) entries_[e.pair.theorem_id] = std::move(e);
  }

  std::optional<InformalEntry> lookup(const std::string& theorem_id, const std::string& prompt_hash) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(theorem_id);
    if (it == entries_.end() || it->second.prompt_hash != prompt_hash) return std::nullopt;
    return it->second;
  }

  void append(const InformalEntry& e) {
    std::lock_guard lock(mu_);
    entries_[e.pair.theorem_id] = e;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw DataError("cannot append to " + path_.string());
    out << to_json(e).dump() << '\n';
    out.flush();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, InformalEntry> entries_;
};

struct InformalizeCorpusOptions {
  InformalizeOptions call;
  std::size_t concurrency = 4;
  double requests_per_second = 0.0;  // shared budget across workers; 0 = unlimited
};

struct InformalizeFailure {
  std::string theorem_id;
  std::string message;
  ErrorClass error_class = ErrorClass::provider;
};

struct InformalizeReport {
  std::vector<InformalEntry> entries;  // successful entries, in record order
  std::size_t reused = 0;
  std::size_t generated = 0;
  std::vector<InformalizeFailure> failures;
};

// Informalizes every record with bounded concurrency. Fresh results reach the
// cache in record order, so an interrupted run resumes from the cache.
inline InformalizeReport informalize_corpus(const std::vector<TheoremRecord>& records, TextGenerator& generator,
                                            InformalCache& cache, const InformalizeCorpusOptions& opts = {}) {
  const std::string provider_id = generator.id();
  std::vector<std::optional<InformalEntry>> results(records.size());
  std::vector<bool> done(records.size(), false);
  std::vector<std::optional<std::pair<std::string, ErrorClass>>> errors(records.size());
  std::vector<bool> fresh(records.size(), false);
  std::mutex mu;
  std::size_t next_to_write = 0;
  detail::RateLimiter limiter(opts.requests_per_second);

  auto flush_ready = [&] {
    while (next_to_write < records.size() && done[next_to_write]) {
      if (results[next_to_write] && fresh[next_to_write]) cache.append(*results[next_to_write]);
      ++next_to_write;
    }
  };

  detail::parallel_for(records.size(), opts.concurrency, [&](std::size_t i) {
    const auto& rec = records[i];
    std::string prompt = build_informalization_prompt(rec);
    std::string hash = informalization_prompt_hash(provider_id, prompt);
    std::optional<InformalEntry> entry = cache.lookup(rec.id, hash);
    bool is_fresh = false;
    std::optional<std::pair<std::string, ErrorClass>> error;
    if (!entry) {
      try {
        limiter.acquire();
        entry = InformalEntry{informalize_prompt(rec.id, prompt, generator, opts.call), provider_id, hash};
        is_fresh = true;
      } catch (const Error& e) {
        error = {e.what(), e.error_class()};
      }
    }
    std::lock_guard lock(mu);
    results[i] = std::move(entry);
    errors[i] = std::move(error);
    fresh[i] = is_fresh;
    done[i] = true;
    flush_ready();
  });

  InformalizeReport report;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (results[i]) {
      (fresh[i] ? report.generated : report.reused) += 1;
      report.entries.push_back(std::move(*results[i]));
    } else {
      auto err = errors[i].value_or(std::pair{std::string("unknown failure"), ErrorClass::provider});
      report.failures.push_back({records[i].id, err.first, err.second});
    }
  }
  return report;
}

}  // namespace thmsearch
