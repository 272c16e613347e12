#pragma once

// Theorem-library ingestion: the line-delimited interchange format, hyperlink
// extraction from statement markup, and one-level dependency resolution.
//
// Interchange format: one compact JSON object per line (UTF-8, LF),
//   {"dependencies":[...],"docstring":"...","id":"...","kind":"theorem",
//    "name":"...","source_path":"...","statement":"<markup>"}
// `docstring` and `dependencies` are optional. Statement markup writes a
// hyperlink to another declaration as `[display](target)`.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "thmsearch/detail/utf8.hpp"
#include "thmsearch/error.hpp"

namespace thmsearch {

enum class DeclKind { theorem, definition, other };

inline std::string_view to_string(DeclKind k) {
  switch (k) {
    case DeclKind::theorem: return "theorem";
    case DeclKind::definition: return "definition";
    case DeclKind::other: return "other";
  }
  return "other";
}

inline std::optional<DeclKind> parse_decl_kind(std::string_view s) {
  if (s == "theorem") return DeclKind::theorem;
  if (s == "definition") return DeclKind::definition;
  if (s == "other") return DeclKind::other;
  return std::nullopt;
}

struct DefRecord {
  std::string name;
  std::string statement;
  std::optional<std::string> docstring;

  bool operator==(const DefRecord&) const = default;
};

// Half-open range [begin, end) in code points of LinkedStatement::plain_text.
struct Link {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string target;

  bool operator==(const Link&) const = default;
};

struct LinkedStatement {
  std::string plain_text;
  std::vector<Link> links;
};

struct TheoremRecord {
  std::string id;
  std::string name;
  std::string formal_statement;  // markup stripped
  std::string statement_markup;  // as ingested; serialized back verbatim
  std::optional<std::string> docstring;
  std::vector<DefRecord> dependencies;
  std::string source_path;
  DeclKind kind = DeclKind::theorem;
  std::vector<Link> links;

  std::vector<std::string> link_targets() const {
    std::vector<std::string> out;
    out.reserve(links.size());
    for (const auto& l : links) out.push_back(l.target);
    return out;
  }
};

struct Diagnostic {
  enum class Kind { schema, duplicate_id, malformed_anchor, unresolved_link };
  Kind kind = Kind::schema;
  std::size_t line = 0;  // 1-based input line, 0 when not tied to a line
  std::string subject;   // offending field, id or link target
  std::string message;
};

inline std::string_view to_string(Diagnostic::Kind k) {
  switch (k) {
    case Diagnostic::Kind::schema: return "schema";
    case Diagnostic::Kind::duplicate_id: return "duplicate_id";
    case Diagnostic::Kind::malformed_anchor: return "malformed_anchor";
    case Diagnostic::Kind::unresolved_link: return "unresolved_link";
  }
  return "schema";
}

inline std::string format_diagnostic(const Diagnostic& d) {
  std::string s;
  if (d.line > 0) s += "line " + std::to_string(d.line) + ": ";
  s += std::string(to_string(d.kind)) + ": " + d.message;
  return s;
}

struct ParseResult {
  std::vector<TheoremRecord> records;
  std::vector<Diagnostic> diagnostics;

  std::size_t schema_diagnostic_count() const {
    return static_cast<std::size_t>(std::count_if(diagnostics.begin(), diagnostics.end(),
        [](const Diagnostic& d) { return d.kind == Diagnostic::Kind::schema; }));
  }
};

namespace detail {

inline bool valid_link_target(std::string_view t) {
  if (t.empty()) return false;
  for (unsigned char c : t)
    if (std::isspace(c) || c == '(' || c == '[' || c == ']') return false;
  return true;
}

inline std::size_t count_chars_appended(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if (!is_continuation(c)) ++n;
  return n;
}

}  // namespace detail

// Replaces every `[display](target)` anchor by its display text. A bracket
// pair not immediately followed by `(` is ordinary text (instance binders,
// list literals). `[x](` without a usable target is reported and kept verbatim.
inline LinkedStatement extract_links(std::string_view markup, std::vector<Diagnostic>* diagnostics = nullptr,
                                     std::size_t line = 0) {
  LinkedStatement out;
  out.plain_text.reserve(markup.size());
  std::size_t plain_chars = 0;
  auto append = [&](std::string_view s) {
    out.plain_text.append(s);
    plain_chars += detail::count_chars_appended(s);
  };
  auto report = [&](std::string message) {
    if (diagnostics)
      diagnostics->push_back({Diagnostic::Kind::malformed_anchor, line, std::string(markup), std::move(message)});
  };

  const std::size_t n = markup.size();
  std::size_t i = 0;
  while (i < n) {
    if (markup[i] != '[') {
      std::size_t j = markup.find('[', i);
      if (j == std::string_view::npos) j = n;
      append(markup.substr(i, j - i));
      i = j;
      continue;
    }
    std::size_t close = i + 1;
    while (close < n && markup[close] != ']' && markup[close] != '[' && markup[close] != '\n') ++close;
    if (close >= n || markup[close] != ']' || close + 1 >= n || markup[close + 1] != '(') {
      append("[");
      ++i;
      continue;
    }
    std::size_t target_begin = close + 2;
    std::size_t target_end = target_begin;
    while (target_end < n && markup[target_end] != ')' && markup[target_end] != '\n') ++target_end;
    if (target_end >= n || markup[target_end] != ')') {
      report("unterminated anchor target at byte " + std::to_string(i));
      append("[");
      ++i;
      continue;
    }
    std::string_view display = markup.substr(i + 1, close - i - 1);
    std::string_view target = markup.substr(target_begin, target_end - target_begin);
    if (display.empty() || !detail::valid_link_target(target)) {
      report("malformed anchor at byte " + std::to_string(i));
      append("[");
      ++i;
      continue;
    }
    Link link;
    link.begin = plain_chars;
    append(display);
    link.end = plain_chars;
    link.target = std::string(target);
    out.links.push_back(std::move(link));
    i = target_end + 1;
  }
  return out;
}

namespace detail {

inline const std::unordered_set<std::string>& record_fields() {
  static const std::unordered_set<std::string> kFields = {"id", "name", "kind", "statement", "docstring",
                                                          "source_path", "dependencies"};
  return kFields;
}

inline std::optional<std::string> required_string(const nlohmann::json& obj, const char* field,
                                                  std::string& problem_field, std::string& problem) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    problem_field = field;
    problem = std::string("missing field '") + field + "'";
    return std::nullopt;
  }
  if (!it->is_string()) {
    problem_field = field;
    problem = std::string("field '") + field + "' must be a string";
    return std::nullopt;
  }
  return it->get<std::string>();
}

// Parses one interchange line. On schema violation returns nullopt and fills
// `field`/`problem`.
inline std::optional<TheoremRecord> parse_record_line(std::string_view text, std::size_t line,
                                                      std::vector<Diagnostic>& diagnostics, std::string& field,
                                                      std::string& problem) {
  auto obj = nlohmann::json::parse(text, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    field = "";
    problem = "line is not a JSON object";
    return std::nullopt;
  }
  for (const auto& [key, _] : obj.items()) {
    if (!record_fields().count(key)) {
      field = key;
      problem = "unknown field '" + key + "'";
      return std::nullopt;
    }
  }
  TheoremRecord rec;
  auto id = required_string(obj, "id", field, problem);
  if (!id) return std::nullopt;
  auto name = required_string(obj, "name", field, problem);
  if (!name) return std::nullopt;
  auto kind = required_string(obj, "kind", field, problem);
  if (!kind) return std::nullopt;
  auto statement = required_string(obj, "statement", field, problem);
  if (!statement) return std::nullopt;
  auto source = required_string(obj, "source_path", field, problem);
  if (!source) return std::nullopt;

  if (id->empty()) {
    field = "id";
    problem = "field 'id' must be non-empty";
    return std::nullopt;
  }
  if (name->empty()) {
    field = "name";
    problem = "field 'name' must be non-empty";
    return std::nullopt;
  }
  auto k = parse_decl_kind(*kind);
  if (!k) {
    field = "kind";
    problem = "field 'kind' must be one of theorem, definition, other";
    return std::nullopt;
  }
  if (auto it = obj.find("docstring"); it != obj.end()) {
    if (!it->is_string()) {
      field = "docstring";
      problem = "field 'docstring' must be a string";
      return std::nullopt;
    }
    rec.docstring = it->get<std::string>();
  }
  if (auto it = obj.find("dependencies"); it != obj.end()) {
    if (!it->is_array()) {
      field = "dependencies";
      problem = "field 'dependencies' must be an array";
      return std::nullopt;
    }
    std::unordered_set<std::string> seen;
    for (const auto& dep : *it) {
      if (!dep.is_object() || !dep.contains("name") || !dep["name"].is_string() || !dep.contains("statement") ||
          !dep["statement"].is_string() || (dep.contains("docstring") && !dep["docstring"].is_string()) ||
          dep.size() != 2u + (dep.contains("docstring") ? 1u : 0u)) {
        field = "dependencies";
        problem = "dependency entries need string 'name' and 'statement', optional 'docstring'";
        return std::nullopt;
      }
      DefRecord d{dep["name"].get<std::string>(), dep["statement"].get<std::string>(), std::nullopt};
      if (dep.contains("docstring")) d.docstring = dep["docstring"].get<std::string>();
      if (d.name.empty()) {
        field = "dependencies";
        problem = "dependency name must be non-empty";
        return std::nullopt;
      }
      if (!seen.insert(d.name).second) {
        field = "dependencies";
        problem = "duplicate dependency '" + d.name + "'";
        return std::nullopt;
      }
      rec.dependencies.push_back(std::move(d));
    }
  }

  auto linked = extract_links(*statement, &diagnostics, line);
  if (linked.plain_text.empty()) {
    field = "statement";
    problem = "field 'statement' must be non-empty";
    return std::nullopt;
  }
  rec.id = std::move(*id);
  rec.name = std::move(*name);
  rec.kind = *k;
  rec.statement_markup = std::move(*statement);
  rec.formal_statement = std::move(linked.plain_text);
  rec.links = std::move(linked.links);
  rec.source_path = std::move(*source);
  return rec;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace detail

// Parses the interchange stream. Records come back in input order, duplicates
// included (see deduplicate); every rejected line yields one schema diagnostic.
inline ParseResult parse_corpus(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::is_blank(line)) continue;
    std::string field, problem;
    std::vector<Diagnostic> anchor_diags;
    auto rec = detail::parse_record_line(line, line_no, anchor_diags, field, problem);
    if (rec) {
      result.records.push_back(std::move(*rec));
      for (auto& d : anchor_diags) result.diagnostics.push_back(std::move(d));
    } else {
      result.diagnostics.push_back({Diagnostic::Kind::schema, line_no, field, problem});
    }
  }
  if (in.bad()) throw DataError("I/O error while reading corpus");
  return result;
}

inline ParseResult parse_corpus(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_corpus(in);
}

// Last record wins for repeated ids; the survivor takes the later position.
inline std::vector<TheoremRecord> deduplicate(std::vector<TheoremRecord> records,
                                              std::vector<Diagnostic>* diagnostics = nullptr) {
  std::unordered_map<std::string, std::size_t> last;
  for (std::size_t i = 0; i < records.size(); ++i) last[records[i].id] = i;
  std::vector<TheoremRecord> out;
  out.reserve(last.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (last[records[i].id] == i) {
      out.push_back(std::move(records[i]));
    } else if (diagnostics) {
      diagnostics->push_back({Diagnostic::Kind::duplicate_id, 0, records[i].id,
                              "duplicate id '" + records[i].id + "', later record wins"});
    }
  }
  return out;
}

struct ResolveResult {
  std::vector<TheoremRecord> records;
  std::vector<Diagnostic> diagnostics;
};

// Attaches, for each record, the directly linked declarations found in the
// corpus (by id, else by unique name). One level deep; self-links dropped.
inline ResolveResult resolve_dependencies(std::vector<TheoremRecord> records,
                                          const std::vector<std::vector<std::string>>& link_targets) {
  if (link_targets.size() != records.size())
    throw UsageError("resolve_dependencies: link_targets size does not match records");
  std::unordered_map<std::string, std::size_t> by_id;
  std::unordered_map<std::string, std::size_t> by_name;
  std::unordered_set<std::string> ambiguous_names;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_id[records[i].id] = i;
    if (!by_name.emplace(records[i].name, i).second) ambiguous_names.insert(records[i].name);
  }
  for (const auto& n : ambiguous_names) by_name.erase(n);

  // Snapshot the linked-to content before any record is modified.
  std::vector<DefRecord> as_def;
  as_def.reserve(records.size());
  for (const auto& r : records) as_def.push_back({r.id, r.formal_statement, r.docstring});

  ResolveResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& rec = records[i];
    std::unordered_set<std::string> present;
    for (const auto& d : rec.dependencies) present.insert(d.name);
    for (const auto& target : link_targets[i]) {
      std::optional<std::size_t> hit;
      if (auto it = by_id.find(target); it != by_id.end()) {
        hit = it->second;
      } else if (auto jt = by_name.find(target); jt != by_name.end()) {
        hit = jt->second;
      }
      if (!hit) {
        if (!present.count(target))
          out.diagnostics.push_back({Diagnostic::Kind::unresolved_link, 0, target,
                                     "'" + rec.id + "' links to unknown declaration '" + target + "'"});
        continue;
      }
      if (*hit == i) continue;
      const auto& def = as_def[*hit];
      if (!present.insert(def.name).second) continue;
      rec.dependencies.push_back(def);
    }
  }
  out.records = std::move(records);
  return out;
}

inline ResolveResult resolve_dependencies(std::vector<TheoremRecord> records) {
  std::vector<std::vector<std::string>> targets;
  targets.reserve(records.size());
  for (const auto& r : records) targets.push_back(r.link_targets());
  return resolve_dependencies(std::move(records), targets);
}

inline nlohmann::json to_json(const TheoremRecord& r) {
  nlohmann::json j = nlohmann::json::object();
  j["id"] = r.id;
  j["name"] = r.name;
  j["kind"] = std::string(to_string(r.kind));
  j["statement"] = r.statement_markup;
  j["source_path"] = r.source_path;
  if (r.docstring) j["docstring"] = *r.docstring;
  if (!r.dependencies.empty()) {
    auto deps = nlohmann::json::array();
    for (const auto& d : r.dependencies) {
      nlohmann::json dj = {{"name", d.name}, {"statement", d.statement}};
      if (d.docstring) dj["docstring"] = *d.docstring;
      deps.push_back(std::move(dj));
    }
    j["dependencies"] = std::move(deps);
  }
  return j;
}

inline std::string serialize_record(const TheoremRecord& r) { return to_json(r).dump(); }

inline std::string serialize_corpus(const std::vector<TheoremRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

// Only theorems are searchable unless all kinds are requested.
inline std::vector<TheoremRecord> searchable(std::vector<TheoremRecord> records, bool all_kinds) {
  if (all_kinds) return records;
  std::erase_if(records, [](const TheoremRecord& r) { return r.kind != DeclKind::theorem; });
  return records;
}

}  // namespace thmsearch
