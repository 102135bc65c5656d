#pragma once

// QA generation from planned subgraphs.

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphgen/error.hpp"
#include "graphgen/kg.hpp"
#include "graphgen/llm.hpp"
#include "graphgen/prompts.hpp"
#include "graphgen/text.hpp"
#include "graphgen/traverse.hpp"

namespace graphgen {

struct QARecord {
  std::string question;
  std::string answer;
  QAForm form = QAForm::atomic;
  std::string subgraph_id;
  std::vector<RelationKey> edges;
  std::optional<double> max_loss;
  std::optional<double> mean_loss;

  bool operator==(const QARecord&) const = default;
};

// Why a subgraph produced no record.  Stage is "answer", "question", "parse"
// or "llm".
struct GenSkip {
  std::string subgraph_id;
  std::string stage;
  std::string reason;
};

struct GenOutcome {
  std::optional<QARecord> record;
  std::optional<GenSkip> skip;
};

struct GenOptions {
  std::string language = "English";
};

struct ParsedQA {
  std::string question;
  std::string answer;
};

// "Question: ..." followed by "Answer: ...", prefixes case-insensitive and
// allowed to be indented.  Either part may span several lines.
inline std::optional<ParsedQA> parse_qa_response(std::string_view text) {
  const std::string folded = case_fold(text);
  auto find_prefix = [&](std::string_view label, std::size_t from) -> std::optional<std::size_t> {
    std::size_t pos = from;
    while ((pos = folded.find(label, pos)) != std::string::npos) {
      std::size_t line_start = pos;
      while (line_start > 0 && (folded[line_start - 1] == ' ' || folded[line_start - 1] == '\t')) {
        --line_start;
      }
      if (line_start == 0 || folded[line_start - 1] == '\n') return pos;
      ++pos;
    }
    return std::nullopt;
  };
  // Byte offsets line up only when folding kept lengths; fall back to the
  // folded text otherwise so parsing still terminates.
  const std::string_view source = folded.size() == text.size() ? text : std::string_view(folded);
  const auto q = find_prefix("question:", 0);
  if (!q) return std::nullopt;
  const auto a = find_prefix("answer:", *q + 9);
  if (!a) return std::nullopt;
  ParsedQA out{trim(source.substr(*q + 9, *a - *q - 9)), trim(source.substr(*a + 7))};
  if (out.question.empty() || out.answer.empty()) return std::nullopt;
  return out;
}

namespace detail {

inline std::string entity_lines(const KnowledgeGraph& graph, const std::set<std::string>& nodes) {
  std::string out;
  for (const auto& n : nodes) {
    const Entity* e = graph.find_entity(n);
    out += "- " + e->name + " (" + e->entity_type + "): " + join_descriptions(e->descriptions) + "\n";
  }
  return out;
}

inline std::string relation_lines(const KnowledgeGraph& graph, const std::vector<RelationKey>& edges) {
  std::string out;
  for (const auto& k : edges) {
    const Relation* r = graph.find_relation(k);
    out += "- " + r->src + " -- " + r->tgt + ": " + join_descriptions(r->descriptions) + "\n";
  }
  return out;
}

inline void fill_loss_stats(const KnowledgeGraph& graph, QARecord& rec) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& k : rec.edges) {
    const auto& loss = graph.find_relation(k)->loss;
    if (!loss) continue;
    rec.max_loss = rec.max_loss ? std::max(*rec.max_loss, *loss) : *loss;
    sum += *loss;
    ++n;
  }
  if (n > 0) rec.mean_loss = sum / static_cast<double>(n);
}

inline QARecord base_record(const KnowledgeGraph& graph, const Subgraph& sg, QAForm form) {
  QARecord rec;
  rec.form = form;
  rec.subgraph_id = sg.id();
  rec.edges = sg.edges;
  fill_loss_stats(graph, rec);
  return rec;
}

// One call plus one format reprompt.
inline GenOutcome single_call_qa(const KnowledgeGraph& graph, const Subgraph& sg, QAForm form,
                                 const std::string& template_name, Client& client,
                                 const ModelEndpoint& synthesizer, const GenerationParams& params,
                                 const PromptCatalog& catalog, const GenOptions& options) {
  auto messages = user_prompt(catalog.get(template_name)
                                  .render({{"entities", entity_lines(graph, sg.nodes)},
                                           {"relations", sg.edges.empty() ? "(none)\n"
                                                                          : relation_lines(graph, sg.edges)},
                                           {"language", options.language}}));
  try {
    auto response = client.complete(synthesizer, messages, params);
    auto parsed = parse_qa_response(response.text);
    if (!parsed) {
      messages.push_back({"assistant", response.text});
      messages.push_back({"user", catalog.get("qa_format_retry").render({})});
      response = client.complete(synthesizer, messages, params);
      parsed = parse_qa_response(response.text);
    }
    if (!parsed) return {std::nullopt, GenSkip{sg.id(), "parse", "no Question:/Answer: pair"}};
    QARecord rec = base_record(graph, sg, form);
    rec.question = parsed->question;
    rec.answer = parsed->answer;
    return {rec, std::nullopt};
  } catch (const CassetteMiss&) {
    throw;
  } catch (const Error& e) {
    return {std::nullopt, GenSkip{sg.id(), "llm", e.what()}};
  }
}

}  // namespace detail

inline GenOutcome gen_atomic(const KnowledgeGraph& graph, const Subgraph& sg, Client& client,
                             const ModelEndpoint& synthesizer, const GenerationParams& params,
                             const PromptCatalog& catalog, const GenOptions& options = {}) {
  if (sg.edges.size() > 1) {
    throw ContractError("atomic QA needs a single node or edge, got " +
                        std::to_string(sg.edges.size()) + " edges");
  }
  if (sg.nodes.empty()) throw ContractError("atomic QA needs at least one node");
  return detail::single_call_qa(graph, sg, QAForm::atomic, "atomic_qa", client, synthesizer, params,
                                catalog, options);
}

// Rephrases the subgraph into an answer passage, then asks for the question
// that passage answers.
inline GenOutcome gen_aggregated(const KnowledgeGraph& graph, const Subgraph& sg, Client& client,
                                 const ModelEndpoint& synthesizer, const GenerationParams& params,
                                 const PromptCatalog& catalog, const GenOptions& options = {}) {
  if (sg.edges.empty()) throw ContractError("aggregated QA needs at least one edge");
  std::string answer;
  try {
    answer = trim(client
                      .complete(synthesizer,
                                user_prompt(catalog.get("aggregated_answer")
                                                .render({{"entities", detail::entity_lines(graph, sg.nodes)},
                                                         {"relations", detail::relation_lines(graph, sg.edges)},
                                                         {"language", options.language}})),
                                params)
                      .text);
  } catch (const CassetteMiss&) {
    throw;
  } catch (const Error& e) {
    return {std::nullopt, GenSkip{sg.id(), "answer", e.what()}};
  }
  if (answer.empty()) return {std::nullopt, GenSkip{sg.id(), "answer", "empty rephrased answer"}};

  std::string question;
  try {
    question = trim(client
                        .complete(synthesizer,
                                  user_prompt(catalog.get("aggregated_question")
                                                  .render({{"answer", answer}, {"language", options.language}})),
                                  params)
                        .text);
  } catch (const CassetteMiss&) {
    throw;
  } catch (const Error& e) {
    return {std::nullopt, GenSkip{sg.id(), "question", e.what()}};
  }
  if (case_fold(question).rfind("question:", 0) == 0) question = trim(question.substr(9));
  if (question.empty()) return {std::nullopt, GenSkip{sg.id(), "question", "empty question"}};

  QARecord rec = detail::base_record(graph, sg, QAForm::aggregated);
  rec.question = std::move(question);
  rec.answer = std::move(answer);
  return {rec, std::nullopt};
}

inline GenOutcome gen_multihop(const KnowledgeGraph& graph, const Subgraph& sg, Client& client,
                               const ModelEndpoint& synthesizer, const GenerationParams& params,
                               const PromptCatalog& catalog, const GenOptions& options = {}) {
  if (sg.edges.size() < 2) {
    throw ContractError("multi-hop QA needs at least two edges, got " +
                        std::to_string(sg.edges.size()));
  }
  return detail::single_call_qa(graph, sg, QAForm::multi_hop, "multihop_qa", client, synthesizer,
                                params, catalog, options);
}

// Dispatch by form; subgraphs that cannot satisfy the form's shape are
// reported as skips instead of throwing.
inline GenOutcome generate_for(QAForm form, const KnowledgeGraph& graph, const Subgraph& sg,
                               Client& client, const ModelEndpoint& synthesizer,
                               const GenerationParams& params, const PromptCatalog& catalog,
                               const GenOptions& options = {}) {
  switch (form) {
    case QAForm::atomic:
      if (sg.edges.size() > 1) return {std::nullopt, GenSkip{sg.id(), "shape", "more than one edge"}};
      return gen_atomic(graph, sg, client, synthesizer, params, catalog, options);
    case QAForm::aggregated:
      if (sg.edges.empty()) return {std::nullopt, GenSkip{sg.id(), "shape", "no edges"}};
      return gen_aggregated(graph, sg, client, synthesizer, params, catalog, options);
    case QAForm::multi_hop:
      if (sg.edges.size() < 2) return {std::nullopt, GenSkip{sg.id(), "shape", "fewer than two edges"}};
      return gen_multihop(graph, sg, client, synthesizer, params, catalog, options);
  }
  throw ContractError("unknown QA form");
}

// ---------------------------------------------------------------------------
// Serialization

enum class DatasetFormat { alpaca, sharegpt };

inline std::string to_string(DatasetFormat f) { return f == DatasetFormat::alpaca ? "alpaca" : "sharegpt"; }

inline nlohmann::json to_json(const QARecord& r) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& k : r.edges) edges.push_back({k.first, k.second});
  return {{"question", r.question},
          {"answer", r.answer},
          {"form", to_string(r.form)},
          {"subgraph", r.subgraph_id},
          {"edges", edges},
          {"max_loss", r.max_loss ? nlohmann::json(*r.max_loss) : nlohmann::json(nullptr)},
          {"mean_loss", r.mean_loss ? nlohmann::json(*r.mean_loss) : nlohmann::json(nullptr)}};
}

inline QAForm parse_qa_form(const std::string& s) {
  if (s == "atomic") return QAForm::atomic;
  if (s == "aggregated") return QAForm::aggregated;
  if (s == "multi_hop") return QAForm::multi_hop;
  throw ContractError("unknown qa_form '" + s + "'");
}

inline QARecord qa_record_from_json(const nlohmann::json& j) {
  QARecord r;
  r.question = j.at("question").get<std::string>();
  r.answer = j.at("answer").get<std::string>();
  r.form = parse_qa_form(j.at("form").get<std::string>());
  r.subgraph_id = j.at("subgraph").get<std::string>();
  for (const auto& e : j.at("edges")) r.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  if (!j.at("max_loss").is_null()) r.max_loss = j["max_loss"].get<double>();
  if (!j.at("mean_loss").is_null()) r.mean_loss = j["mean_loss"].get<double>();
  return r;
}

inline std::vector<QARecord> sorted_for_output(std::vector<QARecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const QARecord& a, const QARecord& b) {
    if (a.form != b.form) return a.form < b.form;
    return a.subgraph_id < b.subgraph_id;
  });
  return records;
}

inline std::string dataset_line(const QARecord& r, DatasetFormat format) {
  if (format == DatasetFormat::alpaca) {
    nlohmann::ordered_json j;
    j["instruction"] = r.question;
    j["input"] = "";
    j["output"] = r.answer;
    return j.dump();
  }
  nlohmann::ordered_json j;
  j["conversations"] = nlohmann::ordered_json::array(
      {nlohmann::ordered_json{{"from", "human"}, {"value", r.question}},
       nlohmann::ordered_json{{"from", "gpt"}, {"value", r.answer}}});
  return j.dump();
}

// Records ordered by (form, subgraph id), one JSON object per line.
inline std::string dataset_to_string(const std::vector<QARecord>& records, DatasetFormat format) {
  std::string out;
  for (const auto& r : sorted_for_output(records)) out += dataset_line(r, format) + "\n";
  return out;
}

inline void write_dataset(const std::vector<QARecord>& records, const std::filesystem::path& path,
                          DatasetFormat format) {
  if (records.empty()) throw ContractError("write_dataset needs at least one record");
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << dataset_to_string(records, format);
  if (!out) throw Error("write to " + path.string() + " failed");
}

// Accepts either output format line by line.
inline ParsedQA parse_dataset_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  if (j.contains("instruction")) {
    return {j.at("instruction").get<std::string>(), j.at("output").get<std::string>()};
  }
  if (j.contains("conversations")) {
    ParsedQA qa;
    for (const auto& turn : j["conversations"]) {
      const auto from = turn.at("from").get<std::string>();
      if (from == "human" && qa.question.empty()) qa.question = turn.at("value").get<std::string>();
      if (from == "gpt" && qa.answer.empty()) qa.answer = turn.at("value").get<std::string>();
    }
    return qa;
  }
  if (j.contains("question") && j.contains("answer")) {
    return {j["question"].get<std::string>(), j["answer"].get<std::string>()};
  }
  throw ContractError("unrecognized dataset line");
}

}  // namespace graphgen
