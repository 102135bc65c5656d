#pragma once

// Chat-completion client shared by the synthesizer and trainee roles.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "graphgen/error.hpp"
#include "graphgen/hashing.hpp"

namespace graphgen {

enum class ModelRole { synthesizer, trainee };

struct ModelEndpoint {
  std::string base_url;
  std::string model_name;
  std::string api_key_env_var;
  ModelRole role = ModelRole::synthesizer;
  std::size_t concurrency = 8;

  std::string key() const { return base_url + "\n" + model_name; }
};

struct GenerationParams {
  double temperature = 0.0;
  double top_p = 0.95;
  std::optional<int> top_k = 50;
  double repetition_penalty = 1.05;
  int max_tokens = 10240;
  bool logprobs = false;
  int top_logprobs = 0;
  std::optional<std::int64_t> seed;

  // Generation defaults used for every synthesizer call.
  static GenerationParams synthesizer() { return {}; }

  // Statement rephrasing samples at temperature 1 for diverse wording.
  static GenerationParams rephrasing() {
    GenerationParams p;
    p.temperature = 1.0;
    return p;
  }

  // Single-token yes/no judgment with the top-5 next-token distribution.
  static GenerationParams judgment() {
    GenerationParams p;
    p.temperature = 0.0;
    p.top_p = 1.0;
    p.top_k.reset();
    p.repetition_penalty = 1.0;
    p.max_tokens = 1;
    p.logprobs = true;
    p.top_logprobs = 5;
    return p;
  }

  void validate() const {
    if (temperature < 0) throw ContractError("temperature must be >= 0");
    if (!(top_p > 0 && top_p <= 1)) throw ContractError("top_p must be in (0, 1]");
    if (top_k && *top_k <= 0) throw ContractError("top_k must be positive");
    if (!(repetition_penalty > 0)) throw ContractError("repetition_penalty must be > 0");
    if (max_tokens <= 0) throw ContractError("max_tokens must be positive");
    if (top_logprobs < 0) throw ContractError("top_logprobs must be >= 0");
    if (top_logprobs > 0 && !logprobs) throw ContractError("top_logprobs requires logprobs");
  }
};

inline nlohmann::json to_json(const GenerationParams& p) {
  nlohmann::json j = {{"temperature", p.temperature},
                      {"top_p", p.top_p},
                      {"top_k", nullptr},
                      {"repetition_penalty", p.repetition_penalty},
                      {"max_tokens", p.max_tokens},
                      {"logprobs", p.logprobs},
                      {"top_logprobs", p.top_logprobs},
                      {"seed", nullptr}};
  if (p.top_k) j["top_k"] = *p.top_k;
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

struct ChatMessage {
  std::string role;
  std::string content;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct CompletionResult {
  std::string text;
  std::vector<TokenLogprob> first_token_top_logprobs;
  Usage usage;

  bool operator==(const CompletionResult&) const = default;
};

inline nlohmann::json to_json(const CompletionResult& r) {
  nlohmann::json lps = nlohmann::json::array();
  for (const auto& t : r.first_token_top_logprobs) lps.push_back({t.token, t.logprob});
  return {{"text", r.text},
          {"top_logprobs", lps},
          {"usage", {{"prompt_tokens", r.usage.prompt_tokens},
                     {"completion_tokens", r.usage.completion_tokens}}}};
}

inline CompletionResult completion_from_json(const nlohmann::json& j) {
  CompletionResult r;
  r.text = j.at("text").get<std::string>();
  for (const auto& t : j.at("top_logprobs")) {
    r.first_token_top_logprobs.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
  }
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
  }
  return r;
}

inline nlohmann::json request_json(const std::vector<ChatMessage>& messages,
                                   const GenerationParams& params) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({m.role, m.content});
  return {{"messages", msgs}, {"params", to_json(params)}};
}

// Stable request fingerprint used as the cassette key.  The JSON dump sorts
// object keys, and doubles are printed in shortest round-trip form.
inline std::string record_replay_key(const std::vector<ChatMessage>& messages,
                                     const GenerationParams& params) {
  return sha256_hex(request_json(messages, params).dump());
}

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResult complete(const ModelEndpoint& endpoint,
                                    const std::vector<ChatMessage>& messages,
                                    const GenerationParams& params) = 0;
};

// Wraps a callable; handy for scripted responses and fault injection.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<CompletionResult(const ModelEndpoint&, const std::vector<ChatMessage>&,
                                            const GenerationParams&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  CompletionResult complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override {
    return fn_(endpoint, messages, params);
  }

 private:
  Fn fn_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  double jitter = 0.2;  // +/- fraction of the nominal delay

  std::chrono::milliseconds nominal_delay(int attempt) const {  // attempt >= 1
    double d = static_cast<double>(base_delay.count());
    for (int i = 1; i < attempt; ++i) d *= factor;
    return std::chrono::milliseconds(static_cast<std::int64_t>(d));
  }
};

// Counting limiter that also remembers its peak occupancy.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < capacity_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::size_t peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t capacity_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
};

class Client {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Client(std::shared_ptr<Backend> backend, RetryPolicy policy = {},
                  Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : backend_(std::move(backend)), policy_(policy), sleeper_(std::move(sleeper)) {}

  CompletionResult complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) {
    if (messages.empty()) throw ContractError("complete() needs at least one message");
    params.validate();
    ++calls_;

    InFlightLimiter& limiter = limiter_for(endpoint);
    std::string last_error;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
      if (attempt > 1) sleeper_(jittered_delay(attempt - 1));
      ++attempts_;
      limiter.acquire();
      try {
        CompletionResult result = backend_->complete(endpoint, messages, params);
        limiter.release();
        return checked(std::move(result), params);
      } catch (const TransientError& e) {
        limiter.release();
        last_error = e.what();
      } catch (...) {
        limiter.release();
        throw;
      }
    }
    throw TimeoutError("gave up after " + std::to_string(policy_.max_attempts) +
                       " attempts: " + last_error);
  }

  // Number of complete() invocations.
  std::size_t calls() const { return calls_; }
  // Number of backend attempts, retries included.
  std::size_t attempts() const { return attempts_; }

  std::size_t peak_in_flight(const ModelEndpoint& endpoint) {
    return limiter_for(endpoint).peak();
  }

  const RetryPolicy& retry_policy() const { return policy_; }

 private:
  static CompletionResult checked(CompletionResult r, const GenerationParams& params) {
    for (auto& t : r.first_token_top_logprobs) {
      if (t.logprob > 1e-6) {
        throw ProtocolError("positive log probability " + std::to_string(t.logprob) +
                            " for token '" + t.token + "'");
      }
      t.logprob = std::min(t.logprob, 0.0);
    }
    const auto cap = static_cast<std::size_t>(params.logprobs ? params.top_logprobs : 0);
    if (r.first_token_top_logprobs.size() > cap) r.first_token_top_logprobs.resize(cap);
    return r;
  }

  std::chrono::milliseconds jittered_delay(int attempt) {
    const auto nominal = static_cast<double>(policy_.nominal_delay(attempt).count());
    std::lock_guard lock(rng_mu_);
    std::uniform_real_distribution<double> dist(-policy_.jitter, policy_.jitter);
    return std::chrono::milliseconds(static_cast<std::int64_t>(nominal * (1.0 + dist(rng_))));
  }

  InFlightLimiter& limiter_for(const ModelEndpoint& endpoint) {
    std::lock_guard lock(limiters_mu_);
    auto& slot = limiters_[endpoint.key()];
    if (!slot) slot = std::make_unique<InFlightLimiter>(endpoint.concurrency);
    return *slot;
  }

  std::shared_ptr<Backend> backend_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> attempts_{0};
  std::mutex rng_mu_;
  std::mt19937_64 rng_{0x9e3779b97f4a7c15ULL};
  std::mutex limiters_mu_;
  std::map<std::string, std::unique_ptr<InFlightLimiter>> limiters_;
};

// Convenience: single user-turn prompt.
inline std::vector<ChatMessage> user_prompt(std::string content) {
  return {{"user", std::move(content)}};
}

}  // namespace graphgen
