#pragma once

// Prompt templates.  Placeholders are written {name}; "{{" and "}}" produce
// literal braces.  Every placeholder that appears in a body is required.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "graphgen/error.hpp"

namespace graphgen {

class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string body) : name_(std::move(name)), body_(std::move(body)) {
    scan(nullptr, nullptr, &required_);
  }

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& required_placeholders() const { return required_; }

  std::string render(const std::map<std::string, std::string>& values) const {
    std::string out;
    scan(&values, &out, nullptr);
    return out;
  }

 private:
  static bool ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  }

  // Single pass used both to collect placeholders and to render.
  void scan(const std::map<std::string, std::string>* values, std::string* out,
            std::set<std::string>* found) const {
    const std::string_view b = body_;
    std::size_t i = 0;
    while (i < b.size()) {
      const char c = b[i];
      if ((c == '{' || c == '}') && i + 1 < b.size() && b[i + 1] == c) {
        if (out) out->push_back(c);
        i += 2;
        continue;
      }
      if (c == '{') {
        std::size_t j = i + 1;
        while (j < b.size() && ident_char(b[j])) ++j;
        if (j > i + 1 && j < b.size() && b[j] == '}') {
          const std::string key(b.substr(i + 1, j - i - 1));
          if (found) found->insert(key);
          if (values) {
            auto it = values->find(key);
            if (it == values->end()) {
              throw ContractError("template '" + name_ + "': placeholder {" + key + "} is unbound");
            }
            *out += it->second;
          }
          i = j + 1;
          continue;
        }
      }
      if (out) out->push_back(c);
      ++i;
    }
  }

  std::string name_;
  std::string body_;
  std::set<std::string> required_;
};

namespace prompts {

inline constexpr std::string_view kCompletionMarker = "<|COMPLETE|>";

inline const std::map<std::string, std::string>& default_bodies() {
  static const std::map<std::string, std::string> bodies = {
      {"kg_extraction",
       R"(-Goal-
Given a text passage and a list of entity types, identify every entity of those types in the passage and every relationship among the identified entities.

-Steps-
1. For each entity, output one line:
("entity"|<entity_name>|<entity_type>|<entity_description>)
entity_type must be one of: {entity_types}
entity_description is a complete description of the entity's attributes and activities as stated in the text.
2. For each pair of clearly related entities, output one line:
("relationship"|<source_entity>|<target_entity>|<relationship_description>)
relationship_description is a self-contained declarative statement explaining how the two entities are related.
3. Write all output in {language}. Output one record per line and nothing else.
4. When finished, output {completion_marker}

-Text-
{input_text}
)"},
      {"kg_extraction_retry",
       R"(The previous answer could not be parsed. Output only lines of the form ("entity"|name|type|description) or ("relationship"|source|target|description), then {completion_marker}.)"},
      {"kg_summarization",
       R"(You are given several descriptions of the same {item_kind} "{item_name}", collected from different text passages.
Merge them into a single comprehensive description written in the third person. Resolve contradictions, keep every distinct fact, and include the name so the description is self-contained. Write in {language}.

Descriptions:
{descriptions}

Output only the merged description.)"},
      {"rephrase_literal",
       R"(Rewrite the following statement so that it keeps exactly the same meaning but uses different wording and sentence structure. Do not add or remove facts. Write in {language}.

Statement: {statement}

Output only the rewritten statement.)"},
      {"rephrase_opposite",
       R"(Rewrite the following statement so that it asserts the opposite: the rewritten statement must be false whenever the original is true. Change as little wording as needed. Write in {language}.

Statement: {statement}

Output only the rewritten statement.)"},
      {"statement_judgment",
       R"(Judge whether the following statement is true. Answer with a single word, yes or no.

Statement: {statement}
Answer:)"},
      {"atomic_qa",
       R"(You are given a piece of knowledge consisting of entities and, optionally, one relationship.

Entities:
{entities}

Relationship:
{relations}

Write one question whose answer is this single fact, and its concise answer. Write in {language}. Use exactly this format:
Question: <question>
Answer: <answer>)"},
      {"aggregated_answer",
       R"(The following entities and relationships were extracted from related documents.

Entities:
{entities}

Relationships:
{relations}

Organize all of this knowledge into one coherent, well-structured passage. Keep every fact, connect them logically, and do not invent information. Write in {language}. Output only the passage.)"},
      {"aggregated_question",
       R"(Here is a passage:

{answer}

Write a single question for which this passage is a complete answer. Write in {language}. Output only the question.)"},
      {"multihop_qa",
       R"(The following entities are connected by a chain of relationships.

Entities:
{entities}

Relationship chain:
{relations}

Write one question that can only be answered by reasoning across at least two of these relationships in sequence, and its answer. Write in {language}. Use exactly this format:
Question: <question>
Answer: <answer>)"},
      {"qa_format_retry",
       R"(Please restate your answer using exactly this format:
Question: <question>
Answer: <answer>)"},
  };
  return bodies;
}

}  // namespace prompts

class PromptCatalog {
 public:
  PromptCatalog() {
    for (const auto& [name, body] : prompts::default_bodies()) templates_[name] = {name, body};
  }

  // Files named <template>.txt in dir replace the matching defaults.
  static PromptCatalog with_overrides(const std::filesystem::path& dir) {
    PromptCatalog catalog;
    if (dir.empty()) return catalog;
    for (const auto& [name, _] : prompts::default_bodies()) {
      const auto file = dir / (name + ".txt");
      if (!std::filesystem::exists(file)) continue;
      std::ifstream in(file);
      std::ostringstream ss;
      ss << in.rdbuf();
      catalog.templates_[name] = {name, ss.str()};
    }
    return catalog;
  }

  void write_defaults(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, t] : templates_) std::ofstream(dir / (name + ".txt")) << t.body();
  }

  const PromptTemplate& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ContractError("unknown prompt template: " + name);
    return it->second;
  }

  // Concatenated bodies; feeds cache keys so edited prompts invalidate stages.
  std::string fingerprint() const {
    std::string out;
    for (const auto& [name, t] : templates_) out += name + "\n" + t.body() + "\n";
    return out;
  }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace graphgen
