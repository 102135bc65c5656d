#pragma once

// Pipeline configuration.  The file is JSON; comments are allowed and key
// order and whitespace do not matter.  Every key is optional and defaults to
// the values below.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "graphgen/assess.hpp"
#include "graphgen/corpus.hpp"
#include "graphgen/error.hpp"
#include "graphgen/hashing.hpp"
#include "graphgen/kg.hpp"
#include "graphgen/llm.hpp"
#include "graphgen/qagen.hpp"
#include "graphgen/traverse.hpp"

namespace graphgen {

enum class RunMode { live, record, replay };

inline std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::live: return "live";
    case RunMode::record: return "record";
    case RunMode::replay: return "replay";
  }
  return "?";
}

struct InputConfig {
  std::vector<std::string> paths;
  InputFormat format = InputFormat::plain_text;
  std::size_t chunk_tokens = 1024;
  std::size_t chunk_overlap = 0;
};

struct EndpointConfig {
  ModelEndpoint endpoint;
  GenerationParams params;
};

struct KgConfig {
  std::vector<std::string> entity_types = default_entity_types();
  std::size_t summary_threshold = 4;
};

struct OutputConfig {
  DatasetFormat format = DatasetFormat::alpaca;
  std::string path = "output/qa.jsonl";
};

inline EndpointConfig default_synthesizer() {
  EndpointConfig c;
  c.endpoint = {"http://localhost:8000/v1", "Qwen2.5-72B-Instruct", "SYNTHESIZER_API_KEY", ModelRole::synthesizer, 8};
  c.params = GenerationParams::synthesizer();
  return c;
}

inline EndpointConfig default_trainee() {
  EndpointConfig c;
  c.endpoint = {"http://localhost:8001/v1", "Qwen2.5-7B-Instruct", "TRAINEE_API_KEY", ModelRole::trainee, 8};
  c.params = GenerationParams::judgment();
  return c;
}

struct PipelineConfig {
  InputConfig input;
  EndpointConfig synthesizer = default_synthesizer();
  EndpointConfig trainee = default_trainee();
  RetryPolicy retry;
  KgConfig kg;
  AssessConfig assessment;
  TraversalConfig traversal;
  std::string language = "English";
  std::string prompt_dir;
  OutputConfig output;
  std::string cache_dir = ".graphgen-cache";
  RunMode mode = RunMode::live;
};

struct ConfigResult {
  std::optional<PipelineConfig> config;
  std::vector<std::string> errors;
};

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& c : candidates) {
    const auto d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Walks one JSON object, type-checking known keys and reporting unknown ones.
class Section {
 public:
  Section(const nlohmann::json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {}

  template <typename T>
  void field(const std::string& key, T& out, std::function<std::optional<std::string>(const T&)> check = {}) {
    known_.push_back(key);
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    try {
      T parsed = v.get<T>();
      if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
        if (std::is_unsigned_v<T> && v.get<long long>() < 0) {
          throw std::invalid_argument("must be nonnegative");
        }
      }
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
      }
      if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      }
      if (check) {
        if (auto problem = check(parsed)) {
          error(key, *problem);
          return;
        }
      }
      out = std::move(parsed);
    } catch (const std::exception& e) {
      error(key, std::string("wrong type (") + e.what() + "), got " + v.dump());
    }
  }

  template <typename Enum>
  void choice(const std::string& key, Enum& out, const std::map<std::string, Enum>& options) {
    known_.push_back(key);
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    std::vector<std::string> names;
    for (const auto& [name, _] : options) names.push_back(name);
    if (!v.is_string()) {
      error(key, "expected one of " + join(names) + ", got " + v.dump());
      return;
    }
    auto it = options.find(v.get<std::string>());
    if (it == options.end()) {
      error(key, "invalid value '" + v.get<std::string>() + "' (did you mean '" +
                     nearest(v.get<std::string>(), names) + "'?)");
      return;
    }
    out = it->second;
  }

  // Returns the nested object (or an empty one) and registers the key.
  nlohmann::json object(const std::string& key) {
    known_.push_back(key);
    if (!obj_.contains(key)) return nlohmann::json::object();
    if (!obj_[key].is_object()) {
      error(key, "expected an object");
      return nlohmann::json::object();
    }
    return obj_[key];
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() {
    for (const auto& [key, _] : obj_.items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
        errors_.push_back(child(key) + ": unknown key (did you mean '" + nearest(key, known_) + "'?)");
      }
    }
  }

  void error(const std::string& key, const std::string& msg) { errors_.push_back(child(key) + ": " + msg); }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
    return out;
  }

  const nlohmann::json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::vector<std::string> known_;
};

template <typename T>
std::function<std::optional<std::string>(const T&)> positive() {
  return [](const T& v) -> std::optional<std::string> {
    if (v > 0) return std::nullopt;
    return "must be positive";
  };
}

inline void endpoint_section(const nlohmann::json& obj, const std::string& path, EndpointConfig& ep,
                             bool sampling_params, std::vector<std::string>& errors) {
  Section s(obj, path, errors);
  s.field("base_url", ep.endpoint.base_url, {[](const std::string& u) -> std::optional<std::string> {
            if (u.find("://") == std::string::npos) return "must start with a scheme such as https://";
            return std::nullopt;
          }});
  s.field("model", ep.endpoint.model_name);
  s.field("api_key_env", ep.endpoint.api_key_env_var);
  s.field("concurrency", ep.endpoint.concurrency, positive<std::size_t>());
  if (sampling_params) {
    s.field<double>("temperature", ep.params.temperature, {[](const double& v) -> std::optional<std::string> {
                      if (v < 0) return "must be >= 0";
                      return std::nullopt;
                    }});
    s.field<double>("top_p", ep.params.top_p, {[](const double& v) -> std::optional<std::string> {
                      if (v > 0 && v <= 1) return std::nullopt;
                      return "must be in (0, 1]";
                    }});
    int top_k = ep.params.top_k.value_or(0);
    s.field<int>("top_k", top_k, {[](const int& v) -> std::optional<std::string> {
                   if (v < 0) return "must be >= 0 (0 disables)";
                   return std::nullopt;
                 }});
    ep.params.top_k = top_k > 0 ? std::optional<int>(top_k) : std::nullopt;
    s.field<double>("repetition_penalty", ep.params.repetition_penalty, positive<double>());
    s.field<int>("max_tokens", ep.params.max_tokens, positive<int>());
  }
  s.finish();
}

}  // namespace detail

inline ConfigResult validate_config_json(const nlohmann::json& root,
                                         const std::filesystem::path& base_dir = {}) {
  ConfigResult result;
  auto& errors = result.errors;
  PipelineConfig cfg;
  if (!root.is_object()) {
    errors.push_back("config: top level must be an object");
    return result;
  }
  detail::Section top(root, "", errors);

  {
    const auto obj = top.object("input");
    detail::Section s(obj, "input", errors);
    s.field("paths", cfg.input.paths);
    s.choice("format", cfg.input.format,
             {{"plain_text", InputFormat::plain_text}, {"jsonl_content_field", InputFormat::jsonl_content_field}});
    s.field("chunk_tokens", cfg.input.chunk_tokens, detail::positive<std::size_t>());
    s.field("chunk_overlap", cfg.input.chunk_overlap);
    s.finish();
    if (cfg.input.chunk_overlap >= cfg.input.chunk_tokens) {
      errors.push_back("input.chunk_overlap: must be smaller than input.chunk_tokens");
    }
    if (!base_dir.empty()) {
      for (auto& p : cfg.input.paths) {
        if (std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
      }
    }
  }
  detail::endpoint_section(top.object("synthesizer"), "synthesizer", cfg.synthesizer, true, errors);
  detail::endpoint_section(top.object("trainee"), "trainee", cfg.trainee, false, errors);
  {
    const auto obj = top.object("retry");
    detail::Section s(obj, "retry", errors);
    s.field("max_attempts", cfg.retry.max_attempts, detail::positive<int>());
    long long base_ms = cfg.retry.base_delay.count();
    s.field<long long>("base_delay_ms", base_ms, {[](const long long& v) -> std::optional<std::string> {
                         if (v < 0) return "must be >= 0";
                         return std::nullopt;
                       }});
    cfg.retry.base_delay = std::chrono::milliseconds(base_ms);
    s.field("factor", cfg.retry.factor, detail::positive<double>());
    s.field<double>("jitter", cfg.retry.jitter, {[](const double& v) -> std::optional<std::string> {
                      if (v >= 0 && v < 1) return std::nullopt;
                      return "must be in [0, 1)";
                    }});
    s.finish();
  }
  {
    const auto obj = top.object("kg");
    detail::Section s(obj, "kg", errors);
    s.field<std::vector<std::string>>("entity_types", cfg.kg.entity_types,
                                      {[](const std::vector<std::string>& v) -> std::optional<std::string> {
                                        if (v.empty()) return "must list at least one type";
                                        return std::nullopt;
                                      }});
    s.field("summary_threshold", cfg.kg.summary_threshold, detail::positive<std::size_t>());
    s.finish();
  }
  {
    const auto obj = top.object("assessment");
    detail::Section s(obj, "assessment", errors);
    s.field("n", cfg.assessment.n, detail::positive<std::size_t>());
    s.field<double>("epsilon", cfg.assessment.epsilon, {[](const double& v) -> std::optional<std::string> {
                      if (v > 0 && v < 1) return std::nullopt;
                      return "must be in (0, 1)";
                    }});
    s.field("renormalize", cfg.assessment.renormalize);
    s.field("yes_tokens", cfg.assessment.yes_tokens);
    s.field("no_tokens", cfg.assessment.no_tokens);
    s.finish();
  }
  {
    const auto obj = top.object("traversal");
    detail::Section s(obj, "traversal", errors);
    auto& t = cfg.traversal;
    s.choice("qa_form", t.qa_form,
             {{"atomic", QAForm::atomic}, {"aggregated", QAForm::aggregated}, {"multi_hop", QAForm::multi_hop}});
    s.choice("expand_method", t.expand_method,
             {{"max_width", ExpandMethod::max_width}, {"max_tokens", ExpandMethod::max_tokens}});
    s.field("bidirectional", t.bidirectional);
    s.field("max_extra_edges", t.max_extra_edges, detail::positive<int>());
    s.field("max_tokens", t.max_tokens, detail::positive<int>());
    s.field("max_depth", t.max_depth, detail::positive<int>());
    s.choice("edge_sampling", t.edge_sampling,
             {{"max_loss", EdgeSampling::max_loss}, {"min_loss", EdgeSampling::min_loss},
              {"random", EdgeSampling::random}});
    s.choice("isolated_node_strategy", t.isolated_node_strategy,
             {{"add", IsolatedNodeStrategy::add}, {"ignore", IsolatedNodeStrategy::ignore}});
    s.field("random_seed", t.random_seed);
    s.field("allow_edge_reuse", t.allow_edge_reuse);
    s.finish();
  }
  {
    const auto obj = top.object("output");
    detail::Section s(obj, "output", errors);
    s.choice("format", cfg.output.format, {{"alpaca", DatasetFormat::alpaca}, {"sharegpt", DatasetFormat::sharegpt}});
    s.field("path", cfg.output.path);
    s.finish();
  }
  top.field("language", cfg.language);
  top.field("prompt_dir", cfg.prompt_dir);
  top.field("cache_dir", cfg.cache_dir);
  top.choice("mode", cfg.mode, {{"live", RunMode::live}, {"record", RunMode::record}, {"replay", RunMode::replay}});
  top.finish();

  cfg.assessment.language = cfg.language;
  if (!base_dir.empty()) {
    auto resolve = [&](std::string& p) {
      if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).lexically_normal().string();
    };
    resolve(cfg.prompt_dir);
    resolve(cfg.cache_dir);
    resolve(cfg.output.path);
  }
  if (cfg.mode == RunMode::replay &&
      !std::filesystem::exists(std::filesystem::path(cfg.cache_dir) / "cassette.jsonl")) {
    errors.push_back("mode: replay needs an existing cassette at " +
                     (std::filesystem::path(cfg.cache_dir) / "cassette.jsonl").string());
  }
  if (errors.empty()) result.config = std::move(cfg);
  return result;
}

inline ConfigResult validate_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    return {std::nullopt, {std::string("config: not valid JSON: ") + e.what()}};
  }
  return validate_config_json(root, base_dir);
}

// Relative paths in the file resolve against the file's directory.
inline ConfigResult load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return {std::nullopt, {"config: cannot read " + path.string()}};
  std::ostringstream ss;
  ss << in.rdbuf();
  return validate_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

// Canonical JSON of the whole config (paths as given).
inline nlohmann::json to_json(const PipelineConfig& c) {
  auto endpoint = [](const EndpointConfig& e, bool sampling) {
    nlohmann::json j = {{"base_url", e.endpoint.base_url},
                        {"model", e.endpoint.model_name},
                        {"api_key_env", e.endpoint.api_key_env_var},
                        {"concurrency", e.endpoint.concurrency}};
    if (sampling) {
      j["temperature"] = e.params.temperature;
      j["top_p"] = e.params.top_p;
      j["top_k"] = e.params.top_k.value_or(0);
      j["repetition_penalty"] = e.params.repetition_penalty;
      j["max_tokens"] = e.params.max_tokens;
    }
    return j;
  };
  const auto& t = c.traversal;
  return {
      {"input",
       {{"paths", c.input.paths},
        {"format", to_string(c.input.format)},
        {"chunk_tokens", c.input.chunk_tokens},
        {"chunk_overlap", c.input.chunk_overlap}}},
      {"synthesizer", endpoint(c.synthesizer, true)},
      {"trainee", endpoint(c.trainee, false)},
      {"retry",
       {{"max_attempts", c.retry.max_attempts},
        {"base_delay_ms", c.retry.base_delay.count()},
        {"factor", c.retry.factor},
        {"jitter", c.retry.jitter}}},
      {"kg", {{"entity_types", c.kg.entity_types}, {"summary_threshold", c.kg.summary_threshold}}},
      {"assessment",
       {{"n", c.assessment.n},
        {"epsilon", c.assessment.epsilon},
        {"renormalize", c.assessment.renormalize},
        {"yes_tokens", c.assessment.yes_tokens},
        {"no_tokens", c.assessment.no_tokens}}},
      {"traversal",
       {{"qa_form", to_string(t.qa_form)},
        {"expand_method", to_string(t.expand_method)},
        {"bidirectional", t.bidirectional},
        {"max_extra_edges", t.max_extra_edges},
        {"max_tokens", t.max_tokens},
        {"max_depth", t.max_depth},
        {"edge_sampling", to_string(t.edge_sampling)},
        {"isolated_node_strategy", to_string(t.isolated_node_strategy)},
        {"random_seed", t.random_seed},
        {"allow_edge_reuse", t.allow_edge_reuse}}},
      {"output", {{"format", to_string(c.output.format)}, {"path", c.output.path}}},
      {"language", c.language},
      {"prompt_dir", c.prompt_dir},
      {"cache_dir", c.cache_dir},
      {"mode", to_string(c.mode)},
  };
}

// Drops fields that cannot change any produced artifact: where things live,
// how requests are scheduled, and whether responses come from a cassette.
inline nlohmann::json semantic_json(const PipelineConfig& c) {
  auto j = to_json(c);
  j.erase("retry");
  j.erase("cache_dir");
  j.erase("mode");
  j.erase("prompt_dir");
  j["output"].erase("path");
  for (const char* role : {"synthesizer", "trainee"}) {
    j[role].erase("concurrency");
    j[role].erase("api_key_env");
  }
  return j;
}

inline std::string config_hash(const PipelineConfig& c) { return sha256_hex(semantic_json(c).dump()); }

}  // namespace graphgen
