#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "graphgen/error.hpp"
#include "graphgen/text.hpp"

namespace graphgen {

struct Document {
  std::string doc_id;
  std::string text;
  std::string source_path;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
  std::size_t token_count = 0;
  std::size_t index_in_doc = 0;
  // Byte offset of text within the document.
  std::size_t offset = 0;

  bool operator==(const Chunk&) const = default;
};

enum class InputFormat { plain_text, jsonl_content_field };

inline std::string to_string(InputFormat f) {
  return f == InputFormat::plain_text ? "plain_text" : "jsonl_content_field";
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read input file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IngestError("error while reading input file: " + path.string());
  return ss.str();
}

// One Document per plain-text file, or one per JSONL record.  Whitespace-only
// texts are dropped.  JSONL doc ids are the record's "id" when present, else
// "<path>#<line>".
inline std::vector<Document> ingest(const std::vector<std::string>& paths, InputFormat format) {
  std::vector<Document> docs;
  std::set<std::string> seen;
  auto push = [&](Document d) {
    if (trim(d.text).empty()) return;
    if (!seen.insert(d.doc_id).second) {
      throw IngestError("duplicate document id '" + d.doc_id + "' in " + d.source_path);
    }
    docs.push_back(std::move(d));
  };

  for (const auto& path : paths) {
    const std::string content = read_file(path);
    if (format == InputFormat::plain_text) {
      push({path, content, path});
      continue;
    }
    std::istringstream lines(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw IngestError(path + ":" + std::to_string(line_no) + ": malformed JSONL line (" +
                          e.what() + ")");
      }
      if (!record.is_object() || !record.contains("content") || !record["content"].is_string()) {
        throw IngestError(path + ":" + std::to_string(line_no) +
                          ": record has no string \"content\" field");
      }
      std::string id = path + "#" + std::to_string(line_no);
      if (record.contains("id")) {
        const auto& raw = record["id"];
        id = raw.is_string() ? raw.get<std::string>() : raw.dump();
      }
      push({std::move(id), record["content"].get<std::string>(), path});
    }
  }
  return docs;
}

namespace detail {

inline bool is_sentence_final(std::string_view token) {
  static const std::set<std::string_view> kFinal = {".", "!", "?", "\xE3\x80\x82" /* 。 */,
                                                   "\xEF\xBC\x81" /* ！ */, "\xEF\xBC\x9F" /* ？ */,
                                                   "\xE2\x80\xA6" /* … */};
  return kFinal.count(token) > 0;
}

}  // namespace detail

// Greedy packing.  Each cut lands at the latest sentence boundary within the
// budget, else the latest whitespace gap, else a hard token cut.  Chunks own
// the whitespace that follows their last token, so with overlap_tokens == 0
// concatenating chunk texts reproduces the document byte for byte.
inline std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_chunk_tokens,
                                         std::size_t overlap_tokens,
                                         const TokenCounter& counter = default_token_counter()) {
  if (max_chunk_tokens == 0) throw ContractError("max_chunk_tokens must be positive");
  if (overlap_tokens >= max_chunk_tokens) {
    throw ContractError("overlap_tokens must be smaller than max_chunk_tokens");
  }
  const std::string_view text = doc.text;
  const auto spans = counter.spans(text);
  if (spans.empty()) return {};

  auto token_text = [&](std::size_t i) {
    return text.substr(spans[i].begin, spans[i].end - spans[i].begin);
  };
  auto gap = [&](std::size_t i) {  // bytes between token i-1 and token i
    return text.substr(spans[i - 1].end, spans[i].begin - spans[i - 1].end);
  };
  auto sentence_cut = [&](std::size_t e) {
    return detail::is_sentence_final(token_text(e - 1)) ||
           gap(e).find('\n') != std::string_view::npos;
  };

  std::vector<Chunk> chunks;
  const std::size_t n = spans.size();
  std::size_t start = 0;
  while (true) {
    std::size_t end = n;
    if (n - start > max_chunk_tokens) {
      const std::size_t limit = start + max_chunk_tokens;
      const std::size_t lowest = start + overlap_tokens + 1;  // guarantees progress
      end = 0;
      for (std::size_t e = limit; e >= lowest && end == 0; --e) {
        if (sentence_cut(e)) end = e;
      }
      for (std::size_t e = limit; e >= lowest && end == 0; --e) {
        if (!gap(e).empty()) end = e;
      }
      if (end == 0) end = limit;
    }

    const std::size_t byte_begin = chunks.empty() ? 0 : spans[start].begin;
    const std::size_t byte_end = end == n ? text.size() : spans[end].begin;
    Chunk c;
    c.doc_id = doc.doc_id;
    c.index_in_doc = chunks.size();
    c.chunk_id = doc.doc_id + "#c" + std::to_string(c.index_in_doc);
    c.offset = byte_begin;
    c.text = std::string(text.substr(byte_begin, byte_end - byte_begin));
    c.token_count = end - start;
    chunks.push_back(std::move(c));

    if (end == n) break;
    start = end - overlap_tokens;
  }
  return chunks;
}

inline nlohmann::json to_json(const Chunk& c) {
  return {{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id},           {"text", c.text},
          {"token_count", c.token_count}, {"index_in_doc", c.index_in_doc}, {"offset", c.offset}};
}

inline Chunk chunk_from_json(const nlohmann::json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.token_count = j.at("token_count").get<std::size_t>();
  c.index_in_doc = j.at("index_in_doc").get<std::size_t>();
  c.offset = j.value("offset", std::size_t{0});
  return c;
}

inline std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
  std::string out;
  for (const auto& c : chunks) out += to_json(c).dump() + "\n";
  return out;
}

inline std::vector<Chunk> chunks_from_jsonl(std::string_view content) {
  std::vector<Chunk> out;
  std::istringstream lines{std::string(content)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    out.push_back(chunk_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace graphgen
