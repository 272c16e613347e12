#pragma once

// Pipeline manifest: one JSON file per working directory recording, for each
// stage, the content hashes of what it read and wrote. A stage is current when
// its outputs on disk still hash to the recorded values and its recorded
// inputs equal the previous stage's recorded outputs.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "thmsearch/detail/io.hpp"
#include "thmsearch/error.hpp"

namespace thmsearch {

inline constexpr std::array<std::string_view, 4> kStages = {"ingest", "informalize", "embed", "index"};

// Artifact file names inside a working directory.
namespace artifact {
inline constexpr std::string_view manifest = "manifest.json";
inline constexpr std::string_view corpus = "corpus.jsonl";
inline constexpr std::string_view diagnostics = "diagnostics.jsonl";
inline constexpr std::string_view informal_cache = "informal_cache.jsonl";
inline constexpr std::string_view informal = "informal.jsonl";
inline constexpr std::string_view embedding_cache = "embedding_cache.bin";
inline constexpr std::string_view embeddings = "embeddings.jsonl";
inline constexpr std::string_view index = "index.hnsw";
}  // namespace artifact

struct StageRecord {
  std::map<std::string, std::string> inputs;   // logical name -> sha256 hex
  std::map<std::string, std::string> outputs;  // artifact file name -> sha256 hex
  std::map<std::string, std::string> params;   // provider ids, preset ids, flags

  bool operator==(const StageRecord&) const = default;
};

class Manifest {
 public:
  static constexpr int kVersion = 1;

  static Manifest load(const std::filesystem::path& workdir) {
    Manifest m;
    m.workdir_ = workdir;
    auto path = workdir / artifact::manifest;
    if (!std::filesystem::exists(path)) return m;
    auto j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("version", 0) != kVersion)
      throw DataError("unreadable manifest: " + path.string());
    try {
      for (const auto& [name, sj] : j.at("stages").items()) {
        StageRecord s;
        s.inputs = sj.at("inputs").get<std::map<std::string, std::string>>();
        s.outputs = sj.at("outputs").get<std::map<std::string, std::string>>();
        s.params = sj.at("params").get<std::map<std::string, std::string>>();
        m.stages_[name] = std::move(s);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
  }

  void save() const {
    nlohmann::json j;
    j["version"] = kVersion;
    j["stages"] = nlohmann::json::object();
    for (const auto& [name, s] : stages_)
      j["stages"][name] = {{"inputs", s.inputs}, {"outputs", s.outputs}, {"params", s.params}};
    detail::write_file_atomic(workdir_ / artifact::manifest, j.dump(2) + "\n");
  }

  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path path(std::string_view file) const { return workdir_ / file; }

  const StageRecord* stage(std::string_view name) const {
    auto it = stages_.find(std::string(name));
    return it == stages_.end() ? nullptr : &it->second;
  }

  void set_stage(std::string_view name, StageRecord record) { stages_[std::string(name)] = std::move(record); }

  // Hash every output of a stage as it is on disk now.
  StageRecord with_outputs(StageRecord record, std::initializer_list<std::string_view> files) const {
    for (auto f : files) record.outputs[std::string(f)] = detail::file_sha256(path(f));
    return record;
  }

  // Why `name` is not current, or nullopt when it is. Checks the chain from
  // the first stage up to `name`.
  std::optional<std::string> staleness(std::string_view name) const {
    std::map<std::string, std::string> upstream;  // outputs of earlier stages
    for (auto stage_name : kStages) {
      const StageRecord* s = stage(stage_name);
      if (!s) return "stage '" + std::string(stage_name) + "' has not been run";
      for (const auto& [file, hash] : s->inputs) {
        auto it = upstream.find(file);
        if (it != upstream.end() && it->second != hash)
          return "stage '" + std::string(stage_name) + "' is out of date: its input " + file + " has changed";
      }
      for (const auto& [file, hash] : s->outputs) {
        auto p = path(file);
        if (!std::filesystem::exists(p))
          return "stage '" + std::string(stage_name) + "' is out of date: " + file + " is missing";
        if (detail::file_sha256(p) != hash)
          return "stage '" + std::string(stage_name) + "' is out of date: " + file + " was modified";
      }
      if (stage_name == name) return std::nullopt;
      for (const auto& [file, hash] : s->outputs) upstream[file] = hash;
    }
    throw UsageError("unknown stage '" + std::string(name) + "'");
  }

  // Throws naming the out-of-date stage; `command` is the stage about to run.
  void require_current(std::string_view name, std::string_view command) const {
    if (auto why = staleness(name))
      throw DataError("cannot run " + std::string(command) + ": " + *why + "; re-run that stage first");
  }

 private:
  std::filesystem::path workdir_;
  std::map<std::string, StageRecord> stages_;
};

}  // namespace thmsearch
