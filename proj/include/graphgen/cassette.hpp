#pragma once

// Record/replay of chat completions.  A cassette is JSONL, one
// {"key", "request", "response"} object per line.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>

#include "graphgen/error.hpp"
#include "graphgen/llm.hpp"

namespace graphgen {

class Cassette {
 public:
  explicit Cassette(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        entries_[j.at("key").get<std::string>()] = completion_from_json(j.at("response"));
      } catch (const nlohmann::json::exception& e) {
        throw LoadError(path_.string() + ":" + std::to_string(line_no) +
                        ": bad cassette entry (" + e.what() + ")");
      }
    }
  }

  std::optional<CompletionResult> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void record(const std::string& key, const nlohmann::json& request,
              const CompletionResult& response) {
    std::lock_guard lock(mu_);
    if (!entries_.emplace(key, response).second) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    out << nlohmann::json{{"key", key}, {"request", request}, {"response", to_json(response)}}.dump()
        << "\n";
    if (!out) throw Error("cannot append to cassette " + path_.string());
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, CompletionResult> entries_;
};

// Serves responses from a cassette; a miss is fatal.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(std::shared_ptr<Cassette> cassette) : cassette_(std::move(cassette)) {}

  CompletionResult complete(const ModelEndpoint&, const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override {
    const std::string key = record_replay_key(messages, params);
    if (auto hit = cassette_->find(key)) return *hit;
    throw CassetteMiss("no recorded response for request " + key + " in " +
                       cassette_->path().string());
  }

 private:
  std::shared_ptr<Cassette> cassette_;
};

// Forwards misses to an inner backend and appends the responses.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<Cassette> cassette)
      : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

  CompletionResult complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override {
    const std::string key = record_replay_key(messages, params);
    if (auto hit = cassette_->find(key)) return *hit;
    CompletionResult result = inner_->complete(endpoint, messages, params);
    cassette_->record(key, request_json(messages, params), result);
    return result;
  }

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<Cassette> cassette_;
};

}  // namespace graphgen
