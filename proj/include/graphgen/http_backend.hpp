#pragma once

// OpenAI-compatible /chat/completions over HTTP(S).

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <string>
#include <utility>

#include "graphgen/error.hpp"
#include "graphgen/llm.hpp"

namespace graphgen {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

inline SplitUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  const auto path_begin = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = base_url.substr(0, path_begin);
  out.path = path_begin == std::string::npos ? "" : base_url.substr(path_begin);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

inline nlohmann::json chat_request_body(const std::string& model,
                                        const std::vector<ChatMessage>& messages,
                                        const GenerationParams& params) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json body = {{"model", model},
                         {"messages", msgs},
                         {"temperature", params.temperature},
                         {"top_p", params.top_p},
                         {"max_tokens", params.max_tokens},
                         {"repetition_penalty", params.repetition_penalty}};
  if (params.top_k) body["top_k"] = *params.top_k;
  if (params.seed) body["seed"] = *params.seed;
  if (params.logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = params.top_logprobs;
  }
  return body;
}

inline CompletionResult parse_chat_response(const std::string& raw) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  try {
    CompletionResult r;
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
      const auto& tokens = choice["logprobs"].value("content", nlohmann::json::array());
      if (!tokens.empty()) {
        for (const auto& t : tokens.at(0).at("top_logprobs")) {
          r.first_token_top_logprobs.push_back(
              {t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        }
      }
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("unexpected response shape: ") + e.what());
  }
}

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(std::chrono::seconds timeout = std::chrono::seconds(600))
      : timeout_(timeout) {}

  CompletionResult complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override {
    const SplitUrl url = split_base_url(endpoint.base_url);
    httplib::Headers headers;
    if (!endpoint.api_key_env_var.empty()) {
      const char* key = std::getenv(endpoint.api_key_env_var.c_str());
      if (key == nullptr || *key == '\0') {
        throw ConfigError("API key environment variable " + endpoint.api_key_env_var +
                          " is not set");
      }
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    httplib::Client http(url.origin);
    http.set_connection_timeout(std::chrono::seconds(30));
    http.set_read_timeout(timeout_);
    http.set_write_timeout(timeout_);
    const std::string body = chat_request_body(endpoint.model_name, messages, params).dump();
    auto res = http.Post(url.path + "/chat/completions", headers, body, "application/json");
    if (!res) {
      throw TransientError(0, "transport error: " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransientError(res->status, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (res->status < 200 || res->status >= 300) throw RequestError(res->status, res->body);
    return parse_chat_response(res->body);
  }

 private:
  std::chrono::seconds timeout_;
};

}  // namespace graphgen
