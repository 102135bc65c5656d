#pragma once

// Knowledge graph: typed entities and undirected, described relations.

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graphgen/corpus.hpp"
#include "graphgen/error.hpp"
#include "graphgen/llm.hpp"
#include "graphgen/prompts.hpp"
#include "graphgen/text.hpp"

namespace graphgen {

inline constexpr std::string_view kUnknownType = "UNKNOWN";
inline constexpr int kGraphFormatVersion = 1;

// Endpoints in lexicographic order; (a,b) and (b,a) map to the same key.
using RelationKey = std::pair<std::string, std::string>;

inline RelationKey make_relation_key(std::string a, std::string b) {
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

inline std::string to_string(const RelationKey& k) { return k.first + " -- " + k.second; }

inline std::string join_descriptions(const std::vector<std::string>& descriptions) {
  std::string out;
  for (const auto& d : descriptions) out += (out.empty() ? "" : " ") + d;
  return out;
}

struct Entity {
  std::string name;
  std::string entity_type;
  std::vector<std::string> descriptions;
  std::set<std::string> source_chunks;
  // Descriptions replaced by a summary, kept for auditing.
  std::vector<std::string> summarized_from;

  bool operator==(const Entity&) const = default;
};

struct Relation {
  std::string src;
  std::string tgt;
  std::vector<std::string> descriptions;
  std::set<std::string> source_chunks;
  std::optional<double> loss;
  std::vector<std::string> summarized_from;

  RelationKey key() const { return {src, tgt}; }
  bool operator==(const Relation&) const = default;
};

namespace detail {

inline void append_unique(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& d : from) {
    if (std::find(into.begin(), into.end(), d) == into.end()) into.push_back(d);
  }
}

}  // namespace detail

class KnowledgeGraph {
 public:
  const std::map<std::string, Entity>& entities() const { return entities_; }
  const std::map<RelationKey, Relation>& relations() const { return relations_; }
  std::size_t type_conflicts() const { return type_conflicts_; }

  const Entity* find_entity(const std::string& name) const {
    auto it = entities_.find(name);
    return it == entities_.end() ? nullptr : &it->second;
  }
  const Relation* find_relation(const RelationKey& key) const {
    auto it = relations_.find(key);
    return it == relations_.end() ? nullptr : &it->second;
  }

  // Unifies by canonical name / undirected endpoint pair.  Descriptions are
  // appended without exact duplicates and source chunks are unioned.  The
  // first entity type wins, except that a placeholder UNKNOWN type yields to
  // a concrete one; other disagreements bump type_conflicts().
  void merge(const std::vector<Entity>& new_entities, const std::vector<Relation>& new_relations) {
    for (const auto& e : new_entities) merge_entity(e);
    for (const auto& r : new_relations) merge_relation(r);
  }

  void set_loss(const RelationKey& key, std::optional<double> loss) {
    relations_.at(key).loss = loss;
  }

  // Replace an item wholesale (used after summarization).  Identity fields
  // must not change.
  void replace(const Entity& e) {
    auto& slot = entities_.at(e.name);
    slot = e;
  }
  void replace(const Relation& r) {
    auto& slot = relations_.at(r.key());
    slot = r;
  }

  // Endpoint entities stay, possibly becoming isolated.
  void remove_relation(const RelationKey& key) {
    if (!relations_.erase(key)) return;
    adjacency_[key.first].erase(key);
    adjacency_[key.second].erase(key);
  }

  std::vector<RelationKey> adjacent(const std::string& name) const {
    auto it = adjacency_.find(name);
    if (it == adjacency_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  std::size_t degree(const std::string& name) const {
    auto it = adjacency_.find(name);
    return it == adjacency_.end() ? 0 : it->second.size();
  }

  // Throws LoadError describing the first broken invariant.
  void check_integrity() const {
    for (const auto& [name, e] : entities_) {
      if (name.empty()) throw LoadError("entities: empty entity name");
      if (name != e.name) throw LoadError("entities[" + name + "].name: key mismatch");
      if (canonical_name(name) != name) {
        throw LoadError("entities[" + name + "].name: not in canonical form");
      }
    }
    for (const auto& [key, r] : relations_) {
      const std::string where = "relations[" + to_string(key) + "]";
      if (key.first == key.second) throw LoadError(where + ": self-loop");
      if (key.first > key.second) throw LoadError(where + ": endpoints not ordered");
      if (!entities_.count(key.first)) throw LoadError(where + ".src: dangling endpoint '" + key.first + "'");
      if (!entities_.count(key.second)) throw LoadError(where + ".tgt: dangling endpoint '" + key.second + "'");
      if (r.loss && !(*r.loss >= 0)) throw LoadError(where + ".loss: must be nonnegative");
    }
  }

  bool operator==(const KnowledgeGraph& other) const {
    return entities_ == other.entities_ && relations_ == other.relations_;
  }

 private:
  void merge_entity(Entity e) {
    e.name = canonical_name(e.name);
    if (e.name.empty()) return;
    if (e.entity_type.empty()) e.entity_type = std::string(kUnknownType);
    auto [it, inserted] = entities_.try_emplace(e.name, e);
    if (inserted) return;
    Entity& cur = it->second;
    if (cur.entity_type != e.entity_type) {
      if (cur.entity_type == kUnknownType) {
        cur.entity_type = e.entity_type;
      } else if (e.entity_type != kUnknownType) {
        ++type_conflicts_;
      }
    }
    detail::append_unique(cur.descriptions, e.descriptions);
    cur.source_chunks.insert(e.source_chunks.begin(), e.source_chunks.end());
    detail::append_unique(cur.summarized_from, e.summarized_from);
  }

  void merge_relation(Relation r) {
    auto key = make_relation_key(canonical_name(r.src), canonical_name(r.tgt));
    if (key.first.empty() || key.second.empty() || key.first == key.second) return;
    r.src = key.first;
    r.tgt = key.second;
    for (const auto& endpoint : {key.first, key.second}) {
      if (!entities_.count(endpoint)) {
        merge_entity({endpoint, std::string(kUnknownType), {}, {}, {}});
      }
    }
    auto [it, inserted] = relations_.try_emplace(key, r);
    if (inserted) {
      adjacency_[key.first].insert(key);
      adjacency_[key.second].insert(key);
      return;
    }
    Relation& cur = it->second;
    detail::append_unique(cur.descriptions, r.descriptions);
    cur.source_chunks.insert(r.source_chunks.begin(), r.source_chunks.end());
    detail::append_unique(cur.summarized_from, r.summarized_from);
    if (!cur.loss) cur.loss = r.loss;
  }

  std::map<std::string, Entity> entities_;
  std::map<RelationKey, Relation> relations_;
  std::map<std::string, std::set<RelationKey>> adjacency_;
  std::size_t type_conflicts_ = 0;
};

inline KnowledgeGraph merge(KnowledgeGraph graph, const std::vector<Entity>& new_entities,
                            const std::vector<Relation>& new_relations) {
  graph.merge(new_entities, new_relations);
  return graph;
}

// ---------------------------------------------------------------------------
// Extraction

struct ParsedRecords {
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::size_t parse_failures = 0;
};

namespace detail {

inline std::string strip_quotes(std::string s) {
  s = trim(s);
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                           (s.front() == '\'' && s.back() == '\''))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

inline std::vector<std::string> split_fields(std::string_view body) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto bar = body.find('|', start);
    if (bar == std::string_view::npos) {
      fields.emplace_back(body.substr(start));
      break;
    }
    fields.emplace_back(body.substr(start, bar - start));
    start = bar + 1;
  }
  return fields;
}

inline std::string join_from(const std::vector<std::string>& fields, std::size_t first) {
  std::string out;
  for (std::size_t i = first; i < fields.size(); ++i) {
    if (i > first) out += "|";
    out += fields[i];
  }
  return out;
}

}  // namespace detail

// Parses ("entity"|NAME|TYPE|DESCRIPTION) and ("relationship"|SRC|TGT|DESCRIPTION)
// lines.  A description may itself contain '|'.  Entity types outside
// entity_types (case-insensitive) become UNKNOWN.  Relation endpoints with no
// entity record get an UNKNOWN placeholder.  Never throws on content.
inline ParsedRecords parse_extraction(std::string_view response, const std::string& chunk_id,
                                      const std::vector<std::string>& entity_types) {
  ParsedRecords out;
  std::map<std::string, std::string> type_lookup;
  for (const auto& t : entity_types) type_lookup[case_fold(trim(t))] = t;

  std::set<std::string> named;
  std::istringstream lines{std::string(response)};
  std::string raw;
  while (std::getline(lines, raw)) {
    std::string line = trim(raw);
    if (auto pos = line.find(prompts::kCompletionMarker); pos != std::string::npos) {
      line = trim(line.substr(0, pos));
    }
    while (line.size() >= 2 && line.compare(line.size() - 2, 2, "##") == 0) {
      line = trim(line.substr(0, line.size() - 2));
    }
    if (line.empty()) continue;
    if (line.front() != '(' || line.back() != ')') {
      ++out.parse_failures;
      continue;
    }
    const auto fields = detail::split_fields(std::string_view(line).substr(1, line.size() - 2));
    const std::string kind = case_fold(detail::strip_quotes(fields[0]));
    if (kind == "entity" && fields.size() >= 4) {
      Entity e;
      e.name = canonical_name(detail::strip_quotes(fields[1]));
      const auto type_it = type_lookup.find(case_fold(detail::strip_quotes(fields[2])));
      e.entity_type = type_it == type_lookup.end() ? std::string(kUnknownType) : type_it->second;
      const std::string desc = detail::strip_quotes(detail::join_from(fields, 3));
      if (e.name.empty() || desc.empty()) {
        ++out.parse_failures;
        continue;
      }
      e.descriptions = {desc};
      e.source_chunks = {chunk_id};
      named.insert(e.name);
      out.entities.push_back(std::move(e));
    } else if ((kind == "relationship" || kind == "relation") && fields.size() >= 4) {
      const std::string a = canonical_name(detail::strip_quotes(fields[1]));
      const std::string b = canonical_name(detail::strip_quotes(fields[2]));
      const std::string desc = detail::strip_quotes(detail::join_from(fields, 3));
      if (a.empty() || b.empty() || a == b || desc.empty()) {
        ++out.parse_failures;
        continue;
      }
      auto key = make_relation_key(a, b);
      out.relations.push_back({key.first, key.second, {desc}, {chunk_id}, std::nullopt, {}});
    } else {
      ++out.parse_failures;
    }
  }

  for (const auto& r : out.relations) {
    for (const auto& endpoint : {r.src, r.tgt}) {
      if (named.insert(endpoint).second) {
        out.entities.push_back({endpoint, std::string(kUnknownType), {}, {chunk_id}, {}});
      }
    }
  }
  return out;
}

struct ExtractionOptions {
  std::vector<std::string> entity_types;
  std::string language = "English";
};

struct ExtractionResult {
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::size_t parse_failures = 0;
  bool reprompted = false;
};

inline std::vector<std::string> default_entity_types() {
  return {"date", "location", "event", "person", "organization", "concept", "technology",
          "product", "work", "nature", "mission", "science"};
}

// An empty response yields nothing and counts one parse failure.  A non-empty
// response with no usable record is retried once; a second miss throws.
inline ExtractionResult extract_from_chunk(const Chunk& chunk, Client& client,
                                           const ModelEndpoint& synthesizer,
                                           const GenerationParams& params,
                                           const PromptCatalog& catalog,
                                           const ExtractionOptions& options) {
  if (trim(chunk.text).empty()) throw ContractError("cannot extract from an empty chunk");
  std::string types;
  for (const auto& t : options.entity_types) types += (types.empty() ? "" : ", ") + t;
  std::vector<ChatMessage> messages = user_prompt(catalog.get("kg_extraction").render(
      {{"entity_types", types},
       {"language", options.language},
       {"completion_marker", std::string(prompts::kCompletionMarker)},
       {"input_text", chunk.text}}));

  ExtractionResult result;
  auto response = client.complete(synthesizer, messages, params);
  auto parsed = parse_extraction(response.text, chunk.chunk_id, options.entity_types);
  if (trim(response.text).empty()) {
    result.parse_failures = 1;
    return result;
  }
  if (parsed.entities.empty() && parsed.relations.empty() && parsed.parse_failures > 0) {
    result.reprompted = true;
    result.parse_failures += parsed.parse_failures;
    messages.push_back({"assistant", response.text});
    messages.push_back({"user", catalog.get("kg_extraction_retry")
                                    .render({{"completion_marker",
                                              std::string(prompts::kCompletionMarker)}})});
    response = client.complete(synthesizer, messages, params);
    parsed = parse_extraction(response.text, chunk.chunk_id, options.entity_types);
    if (parsed.entities.empty() && parsed.relations.empty()) {
      throw ExtractionError("unparseable extraction response for chunk " + chunk.chunk_id,
                            response.text);
    }
  }
  result.entities = std::move(parsed.entities);
  result.relations = std::move(parsed.relations);
  result.parse_failures += parsed.parse_failures;
  return result;
}

// ---------------------------------------------------------------------------
// Summarization

namespace detail {
inline std::string display_name(const Entity& e) { return e.name; }
inline std::string display_name(const Relation& r) { return r.src + " / " + r.tgt; }
inline std::string item_kind(const Entity&) { return "entity"; }
inline std::string item_kind(const Relation&) { return "relationship between"; }
}  // namespace detail

// Items with at least `threshold` descriptions get a single synthesized
// description.  On any LLM failure the item comes back unchanged.
template <typename Item>
Item summarize_descriptions(Item item, Client& client, const ModelEndpoint& synthesizer,
                            const GenerationParams& params, const PromptCatalog& catalog,
                            std::size_t threshold, const std::string& language = "English") {
  if (threshold == 0) throw ContractError("summary threshold must be positive");
  if (item.descriptions.size() < threshold) return item;
  std::string joined;
  for (const auto& d : item.descriptions) joined += "- " + d + "\n";
  const auto prompt = catalog.get("kg_summarization")
                          .render({{"item_kind", detail::item_kind(item)},
                                   {"item_name", detail::display_name(item)},
                                   {"language", language},
                                   {"descriptions", joined}});
  try {
    const std::string summary = trim(client.complete(synthesizer, user_prompt(prompt), params).text);
    if (summary.empty()) {
      spdlog::warn("empty summary for '{}', keeping {} descriptions", detail::display_name(item),
                   item.descriptions.size());
      return item;
    }
    detail::append_unique(item.summarized_from, item.descriptions);
    item.descriptions = {summary};
  } catch (const Error& e) {
    spdlog::warn("summarization failed for '{}': {}", detail::display_name(item), e.what());
  }
  return item;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const KnowledgeGraph& g) {
  nlohmann::json entities = nlohmann::json::array();
  for (const auto& [_, e] : g.entities()) {
    entities.push_back({{"name", e.name},
                        {"type", e.entity_type},
                        {"descriptions", e.descriptions},
                        {"source_chunks", e.source_chunks},
                        {"summarized_from", e.summarized_from}});
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const auto& [_, r] : g.relations()) {
    relations.push_back({{"src", r.src},
                         {"tgt", r.tgt},
                         {"descriptions", r.descriptions},
                         {"source_chunks", r.source_chunks},
                         {"loss", r.loss ? nlohmann::json(*r.loss) : nlohmann::json(nullptr)},
                         {"summarized_from", r.summarized_from}});
  }
  return {{"version", kGraphFormatVersion}, {"entities", entities}, {"relations", relations}};
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const std::string& field,
                                     const std::string& where) {
  if (!obj.is_object() || !obj.contains(field)) throw LoadError(where + "." + field + ": missing");
  return obj[field];
}

inline std::string require_string(const nlohmann::json& obj, const std::string& field,
                                  const std::string& where) {
  const auto& v = require(obj, field, where);
  if (!v.is_string()) throw LoadError(where + "." + field + ": expected string");
  return v.get<std::string>();
}

inline std::vector<std::string> require_strings(const nlohmann::json& obj, const std::string& field,
                                                const std::string& where, bool optional = false) {
  if (optional && (!obj.contains(field) || obj[field].is_null())) return {};
  const auto& v = require(obj, field, where);
  if (!v.is_array()) throw LoadError(where + "." + field + ": expected array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) throw LoadError(where + "." + field + ": expected array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline KnowledgeGraph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw LoadError("graph: expected a JSON object");
  const auto& version = detail::require(j, "version", "graph");
  if (!version.is_number_integer() || version.get<int>() != kGraphFormatVersion) {
    throw LoadError("graph.version: unsupported version " + version.dump());
  }
  std::vector<Entity> entities;
  const auto& ents = detail::require(j, "entities", "graph");
  if (!ents.is_array()) throw LoadError("graph.entities: expected array");
  for (std::size_t i = 0; i < ents.size(); ++i) {
    const std::string where = "entities[" + std::to_string(i) + "]";
    Entity e;
    e.name = detail::require_string(ents[i], "name", where);
    e.entity_type = detail::require_string(ents[i], "type", where);
    e.descriptions = detail::require_strings(ents[i], "descriptions", where);
    const auto chunks = detail::require_strings(ents[i], "source_chunks", where);
    e.source_chunks = {chunks.begin(), chunks.end()};
    e.summarized_from = detail::require_strings(ents[i], "summarized_from", where, true);
    if (e.name.empty() || canonical_name(e.name) != e.name) {
      throw LoadError(where + ".name: not a canonical entity name");
    }
    entities.push_back(std::move(e));
  }

  std::vector<Relation> relations;
  const auto& rels = detail::require(j, "relations", "graph");
  if (!rels.is_array()) throw LoadError("graph.relations: expected array");
  std::set<std::string> names;
  for (const auto& e : entities) names.insert(e.name);
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const std::string where = "relations[" + std::to_string(i) + "]";
    Relation r;
    r.src = detail::require_string(rels[i], "src", where);
    r.tgt = detail::require_string(rels[i], "tgt", where);
    if (!names.count(r.src)) throw LoadError(where + ".src: dangling endpoint '" + r.src + "'");
    if (!names.count(r.tgt)) throw LoadError(where + ".tgt: dangling endpoint '" + r.tgt + "'");
    if (r.src == r.tgt) throw LoadError(where + ": self-loop on '" + r.src + "'");
    if (r.tgt < r.src) throw LoadError(where + ": endpoints must be in lexicographic order");
    r.descriptions = detail::require_strings(rels[i], "descriptions", where);
    const auto chunks = detail::require_strings(rels[i], "source_chunks", where);
    r.source_chunks = {chunks.begin(), chunks.end()};
    r.summarized_from = detail::require_strings(rels[i], "summarized_from", where, true);
    if (rels[i].contains("loss") && !rels[i]["loss"].is_null()) {
      const auto& loss = rels[i]["loss"];
      if (!loss.is_number() || loss.get<double>() < 0) {
        throw LoadError(where + ".loss: expected a nonnegative number");
      }
      r.loss = loss.get<double>();
    }
    relations.push_back(std::move(r));
  }

  KnowledgeGraph g;
  g.merge(entities, relations);
  if (g.entities().size() != entities.size()) throw LoadError("graph.entities: duplicate name");
  if (g.relations().size() != relations.size()) throw LoadError("graph.relations: duplicate pair");
  g.check_integrity();
  return g;
}

inline void save_graph(const KnowledgeGraph& g, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_json(g).dump(2) << "\n";
  if (!out) throw Error("cannot write graph file " + path.string());
}

inline KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open graph file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return graph_from_json(j);
}

struct GraphStats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t isolated = 0;
  std::size_t scored = 0;
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> entity count
};

inline GraphStats graph_stats(const KnowledgeGraph& g) {
  GraphStats s;
  s.entities = g.entities().size();
  s.relations = g.relations().size();
  for (const auto& [name, _] : g.entities()) {
    const auto d = g.degree(name);
    ++s.degree_histogram[d];
    if (d == 0) ++s.isolated;
  }
  for (const auto& [_, r] : g.relations()) s.scored += r.loss.has_value();
  return s;
}

}  // namespace graphgen
