#pragma once

// Stage sequencing with per-stage caching:
//
//   ingest -> extract -> assess -> traverse -> generate -> score
//
// Each stage writes one artifact under <cache_dir>/stages/<stage>/ plus a
// marker holding the stage key and the artifact hash.  The key covers the
// config fields the stage reads and the hash of the upstream artifact, so a
// change anywhere re-runs everything downstream of it.

#include <spdlog/spdlog.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "graphgen/assess.hpp"
#include "graphgen/cassette.hpp"
#include "graphgen/config.hpp"
#include "graphgen/corpus.hpp"
#include "graphgen/hashing.hpp"
#include "graphgen/http_backend.hpp"
#include "graphgen/kg.hpp"
#include "graphgen/llm.hpp"
#include "graphgen/metrics.hpp"
#include "graphgen/parallel.hpp"
#include "graphgen/prompts.hpp"
#include "graphgen/qagen.hpp"
#include "graphgen/traverse.hpp"

namespace graphgen {

namespace fs = std::filesystem;

inline nlohmann::json to_json(const GenSkip& s) {
  return {{"subgraph_id", s.subgraph_id}, {"stage", s.stage}, {"reason", s.reason}};
}

inline GenSkip gen_skip_from_json(const nlohmann::json& j) {
  return {j.at("subgraph_id").get<std::string>(), j.at("stage").get<std::string>(),
          j.at("reason").get<std::string>()};
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a temporary sibling then rename, so readers never see half a file.
inline void write_text_atomic(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

// ---------------------------------------------------------------------------
// Stage bodies.  The CLI subcommands call these directly.

struct ExtractCounts {
  std::size_t parse_failures = 0;
  std::size_t failed_chunks = 0;
  std::size_t reprompts = 0;
};

inline std::vector<Chunk> run_ingest(const InputConfig& input) {
  if (input.paths.empty()) throw IngestError("no input paths configured");
  std::vector<Chunk> chunks;
  for (const auto& doc : ingest(input.paths, input.format)) {
    auto cs = chunk_document(doc, input.chunk_tokens, input.chunk_overlap);
    chunks.insert(chunks.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
  }
  return chunks;
}

// Extraction runs in parallel; merging happens afterwards in chunk order so
// the graph does not depend on scheduling.
inline KnowledgeGraph build_graph(const std::vector<Chunk>& chunks, Client& client, const PipelineConfig& cfg,
                                  const PromptCatalog& catalog, ExtractCounts* counts = nullptr) {
  const auto& synth = cfg.synthesizer;
  const ExtractionOptions options{cfg.kg.entity_types, cfg.language};
  std::vector<std::optional<ExtractionResult>> results(chunks.size());
  parallel_for(chunks.size(), synth.endpoint.concurrency, [&](std::size_t i) {
    try {
      results[i] = extract_from_chunk(chunks[i], client, synth.endpoint, synth.params, catalog, options);
    } catch (const CassetteMiss&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      // Unparseable output or an LLM failure that outlived the retries.
      spdlog::warn("chunk {} left out of the graph: {}", chunks[i].chunk_id, e.what());
    }
  });

  KnowledgeGraph graph;
  ExtractCounts local;
  for (auto& r : results) {
    if (!r) {
      ++local.failed_chunks;
      continue;
    }
    local.parse_failures += r->parse_failures;
    local.reprompts += r->reprompted;
    graph.merge(r->entities, r->relations);
  }

  std::vector<Entity> entities;
  for (const auto& [_, e] : graph.entities()) entities.push_back(e);
  std::vector<Relation> relations;
  for (const auto& [_, r] : graph.relations()) relations.push_back(r);
  parallel_for(entities.size(), synth.endpoint.concurrency, [&](std::size_t i) {
    entities[i] = summarize_descriptions(entities[i], client, synth.endpoint, synth.params, catalog,
                                         cfg.kg.summary_threshold, cfg.language);
  });
  parallel_for(relations.size(), synth.endpoint.concurrency, [&](std::size_t i) {
    relations[i] = summarize_descriptions(relations[i], client, synth.endpoint, synth.params, catalog,
                                          cfg.kg.summary_threshold, cfg.language);
  });
  for (const auto& e : entities) graph.replace(e);
  for (const auto& r : relations) graph.replace(r);
  if (counts) *counts = local;
  return graph;
}

inline AssessStats run_assess(KnowledgeGraph& graph, Client& client, const PipelineConfig& cfg,
                              const PromptCatalog& catalog) {
  return assess_graph(graph, client, cfg.synthesizer.endpoint, cfg.synthesizer.params, cfg.trainee.endpoint,
                      catalog, cfg.assessment, cfg.synthesizer.endpoint.concurrency);
}

struct Generated {
  std::vector<QARecord> records;
  std::vector<GenSkip> skips;
};

inline Generated run_generate(const KnowledgeGraph& graph, const std::vector<Subgraph>& plan, QAForm form,
                              Client& client, const PipelineConfig& cfg, const PromptCatalog& catalog) {
  std::vector<GenOutcome> outcomes(plan.size());
  const GenOptions options{cfg.language};
  parallel_for(plan.size(), cfg.synthesizer.endpoint.concurrency, [&](std::size_t i) {
    try {
      outcomes[i] = generate_for(form, graph, plan[i], client, cfg.synthesizer.endpoint, cfg.synthesizer.params,
                                 catalog, options);
    } catch (const CassetteMiss&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      outcomes[i] = {std::nullopt, GenSkip{plan[i].id(), "llm", e.what()}};
    }
  });
  Generated g;
  for (auto& o : outcomes) {
    if (o.record) g.records.push_back(std::move(*o.record));
    if (o.skip) g.skips.push_back(std::move(*o.skip));
  }
  g.records = sorted_for_output(std::move(g.records));
  return g;
}

inline std::vector<std::string> answers_of(const std::vector<QARecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.answer);
  return out;
}

// Mean per-answer MTLD, raw and normalized with the default bounds.
inline nlohmann::json intrinsic_scores(const std::vector<QARecord>& records) {
  const auto stats = dataset_stats(answers_of(records));
  double mtld_sum = 0.0;
  for (const auto& r : records) mtld_sum += mtld(r.answer);
  const double mean = records.empty() ? 0.0 : mtld_sum / static_cast<double>(records.size());
  return {{"samples", stats.sample_count},
          {"avg_answer_tokens", stats.avg_answer_tokens},
          {"max_answer_tokens", stats.max_answer_tokens},
          {"mtld_raw", mean},
          {"mtld", normalize(mean, default_bounds("mtld"))}};
}

// ---------------------------------------------------------------------------
// Report

enum class StageStatus { not_run, ran, cached, failed };

inline std::string to_string(StageStatus s) {
  switch (s) {
    case StageStatus::not_run: return "not_run";
    case StageStatus::ran: return "ran";
    case StageStatus::cached: return "cached";
    case StageStatus::failed: return "failed";
  }
  return "?";
}

struct StageReport {
  std::string name;
  StageStatus status = StageStatus::not_run;
  double seconds = 0.0;
  std::string error;
};

struct RunReport {
  std::string config_hash;
  std::vector<StageReport> stages;
  std::size_t documents = 0;
  std::size_t chunks = 0;
  std::size_t failed_chunks = 0;
  std::size_t parse_failures = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t scored_relations = 0;
  std::size_t skipped_relations = 0;
  std::size_t subgraphs = 0;
  std::size_t qa_records = 0;
  std::size_t qa_skips = 0;
  std::size_t llm_calls = 0;
  std::string output_path;
  nlohmann::json scores;

  bool ok() const {
    return std::none_of(stages.begin(), stages.end(),
                        [](const StageReport& s) { return s.status == StageStatus::failed; });
  }
  int exit_code() const { return ok() ? 0 : 1; }

  const StageReport* stage(const std::string& name) const {
    for (const auto& s : stages) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    nlohmann::json j = {{"name", s.name}, {"status", to_string(s.status)}, {"seconds", s.seconds}};
    if (!s.error.empty()) j["error"] = s.error;
    stages.push_back(j);
  }
  return {{"config_hash", r.config_hash},
          {"ok", r.ok()},
          {"stages", stages},
          {"counts",
           {{"documents", r.documents},
            {"chunks", r.chunks},
            {"failed_chunks", r.failed_chunks},
            {"parse_failures", r.parse_failures},
            {"entities", r.entities},
            {"relations", r.relations},
            {"scored_relations", r.scored_relations},
            {"skipped_relations", r.skipped_relations},
            {"subgraphs", r.subgraphs},
            {"qa_records", r.qa_records},
            {"qa_skips", r.qa_skips},
            {"llm_calls", r.llm_calls}}},
          {"output_path", r.output_path},
          {"scores", r.scores}};
}

// ---------------------------------------------------------------------------
// Cache and lock

class CacheLock {
 public:
  explicit CacheLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (FILE* f = std::fopen(path_.c_str(), "wx")) {
        std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
        std::fclose(f);
        return;
      }
      if (attempt == 0 && stale()) {
        spdlog::warn("removing stale lock {}", path_.string());
        fs::remove(path_);
        continue;
      }
    }
    throw Error("cache directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  }
  ~CacheLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  CacheLock(const CacheLock&) = delete;
  CacheLock& operator=(const CacheLock&) = delete;

 private:
  bool stale() const {
    std::ifstream in(path_);
    long pid = 0;
    if (!(in >> pid) || pid <= 0) return true;
    return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
  }
  fs::path path_;
};

class StageCache {
 public:
  explicit StageCache(fs::path root) : root_(std::move(root)) {}

  fs::path artifact(const std::string& stage, const std::string& file) const { return root_ / stage / file; }

  // Returns the artifact text when the marker matches key and the artifact
  // hash still matches; a mismatch is logged and treated as a miss.
  std::optional<std::string> lookup(const std::string& stage, const std::string& key,
                                    const std::string& file) const {
    const fs::path marker = root_ / stage / "done.json";
    if (!fs::exists(marker)) return std::nullopt;
    try {
      const auto m = nlohmann::json::parse(read_text(marker));
      if (m.at("key").get<std::string>() != key) return std::nullopt;
      const auto text = read_text(artifact(stage, file));
      if (sha256_hex(text) != m.at("artifact_sha256").get<std::string>()) {
        spdlog::warn("cached {} artifact is corrupted; re-running the stage", stage);
        return std::nullopt;
      }
      return text;
    } catch (const std::exception& e) {
      spdlog::warn("unreadable cache for stage {} ({}); re-running the stage", stage, e.what());
      return std::nullopt;
    }
  }

  void store(const std::string& stage, const std::string& key, const std::string& file,
             const std::string& text) const {
    std::error_code ec;
    fs::remove(root_ / stage / "done.json", ec);
    write_text_atomic(artifact(stage, file), text);
    write_text_atomic(root_ / stage / "done.json",
                      nlohmann::json{{"key", key}, {"artifact_sha256", sha256_hex(text)}}.dump(2) + "\n");
  }

 private:
  fs::path root_;
};

// ---------------------------------------------------------------------------
// Orchestration

struct PipelineHooks {
  // Replaces the HTTP backend in live and record modes.
  std::shared_ptr<Backend> live_backend;
  Client::Sleeper sleeper;
};

inline std::shared_ptr<Backend> make_backend(const PipelineConfig& cfg, const PipelineHooks& hooks) {
  std::shared_ptr<Backend> live = hooks.live_backend;
  if (!live && cfg.mode != RunMode::replay) live = std::make_shared<HttpBackend>();
  const fs::path cassette_path = fs::path(cfg.cache_dir) / "cassette.jsonl";
  switch (cfg.mode) {
    case RunMode::live: return live;
    case RunMode::record: return std::make_shared<RecordingBackend>(live, std::make_shared<Cassette>(cassette_path));
    case RunMode::replay:
      if (!fs::exists(cassette_path)) throw ConfigError("replay mode needs " + cassette_path.string());
      return std::make_shared<ReplayBackend>(std::make_shared<Cassette>(cassette_path));
  }
  throw ConfigError("unknown mode");
}

inline PromptCatalog load_catalog(const PipelineConfig& cfg) {
  return PromptCatalog::with_overrides(cfg.prompt_dir);
}

inline RunReport run_pipeline(const PipelineConfig& cfg, const PipelineHooks& hooks = {}) {
  RunReport report;
  report.config_hash = config_hash(cfg);
  report.output_path = cfg.output.path;
  for (const char* name : {"ingest", "extract", "assess", "traverse", "generate", "score"}) {
    report.stages.push_back(StageReport{name, StageStatus::not_run, 0.0, ""});
  }

  CacheLock lock(cfg.cache_dir);
  const StageCache cache(fs::path(cfg.cache_dir) / "stages");
  const PromptCatalog catalog = load_catalog(cfg);
  const auto semantic = semantic_json(cfg);
  const std::string prompts_hash = sha256_hex(catalog.fingerprint());

  std::optional<Client> client_holder;
  auto client = [&]() -> Client& {
    if (!client_holder) {
      if (hooks.sleeper) {
        client_holder.emplace(make_backend(cfg, hooks), cfg.retry, hooks.sleeper);
      } else {
        client_holder.emplace(make_backend(cfg, hooks), cfg.retry);
      }
    }
    return *client_holder;
  };

  auto key_for = [&](const std::string& stage, nlohmann::json subset, const std::string& upstream) {
    return sha256_hex(nlohmann::json{{"stage", stage}, {"config", std::move(subset)}, {"upstream", upstream}}.dump());
  };

  std::size_t index = 0;
  bool failed = false;
  // Runs one stage, recording status and wall time.  body returns true when
  // the result came from the cache.
  auto stage = [&](const std::function<bool()>& body) {
    StageReport& s = report.stages[index++];
    if (failed) return;
    const auto start = std::chrono::steady_clock::now();
    try {
      s.status = body() ? StageStatus::cached : StageStatus::ran;
    } catch (const std::exception& e) {
      s.status = StageStatus::failed;
      s.error = e.what();
      failed = true;
      spdlog::error("stage {} failed: {}", s.name, e.what());
    }
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  std::vector<Chunk> chunks;
  std::string chunks_hash;
  stage([&] {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& p : cfg.input.paths) inputs.push_back(sha256_hex(read_text(p)));
    const auto key = key_for("ingest", {semantic["input"], inputs}, "");
    std::optional<std::string> text = cache.lookup("ingest", key, "chunks.jsonl");
    bool cached = text.has_value();
    if (cached) {
      try {
        chunks = chunks_from_jsonl(*text);
      } catch (const std::exception& e) {
        spdlog::warn("cached chunks unreadable ({}); re-running ingest", e.what());
        cached = false;
      }
    }
    if (!cached) {
      chunks = run_ingest(cfg.input);
      text = chunks_to_jsonl(chunks);
      cache.store("ingest", key, "chunks.jsonl", *text);
    }
    chunks_hash = sha256_hex(*text);
    std::set<std::string> docs;
    for (const auto& c : chunks) docs.insert(c.doc_id);
    report.documents = docs.size();
    report.chunks = chunks.size();
    return cached;
  });

  const nlohmann::json synth_subset = {semantic["synthesizer"], semantic["language"], prompts_hash};

  KnowledgeGraph graph;
  std::string graph_hash;
  auto cached_graph = [&](const std::string& stage_name, const std::string& key) -> bool {
    auto text = cache.lookup(stage_name, key, "graph.json");
    if (!text) return false;
    try {
      graph = graph_from_json(nlohmann::json::parse(*text));
      graph_hash = sha256_hex(*text);
      return true;
    } catch (const std::exception& e) {
      spdlog::warn("cached graph for {} unreadable ({}); re-running the stage", stage_name, e.what());
      return false;
    }
  };
  auto store_graph = [&](const std::string& stage_name, const std::string& key) {
    const std::string text = to_json(graph).dump(2) + "\n";
    cache.store(stage_name, key, "graph.json", text);
    graph_hash = sha256_hex(text);
  };

  stage([&] {
    const auto key = key_for("extract", {synth_subset, semantic["kg"]}, chunks_hash);
    const fs::path counts_file = cache.artifact("extract", "counts.json");
    bool cached = cached_graph("extract", key);
    if (cached && fs::exists(counts_file)) {
      const auto c = nlohmann::json::parse(read_text(counts_file));
      report.failed_chunks = c.value("failed_chunks", 0);
      report.parse_failures = c.value("parse_failures", 0);
    }
    if (!cached) {
      ExtractCounts counts;
      graph = build_graph(chunks, client(), cfg, catalog, &counts);
      report.failed_chunks = counts.failed_chunks;
      report.parse_failures = counts.parse_failures;
      write_text_atomic(counts_file, nlohmann::json{{"failed_chunks", counts.failed_chunks},
                                                    {"parse_failures", counts.parse_failures}}
                                         .dump());
      store_graph("extract", key);
    }
    if (report.failed_chunks == chunks.size() && !chunks.empty()) {
      throw ExtractionError("no chunk produced a usable extraction", "");
    }
    return cached;
  });

  stage([&] {
    const auto key = key_for("assess", {synth_subset, semantic["trainee"], semantic["assessment"]}, graph_hash);
    const bool cached = cached_graph("assess", key);
    if (!cached) {
      run_assess(graph, client(), cfg, catalog);
      store_graph("assess", key);
    }
    const auto stats = graph_stats(graph);
    report.entities = stats.entities;
    report.relations = stats.relations;
    report.scored_relations = stats.scored;
    report.skipped_relations = stats.relations - stats.scored;
    return cached;
  });

  std::vector<Subgraph> plan;
  std::string plan_hash;
  stage([&] {
    const auto key = key_for("traverse", semantic["traversal"], graph_hash);
    auto text = cache.lookup("traverse", key, "subgraphs.jsonl");
    bool cached = text.has_value();
    if (cached) {
      try {
        plan = subgraphs_from_jsonl(*text);
      } catch (const std::exception& e) {
        spdlog::warn("cached plan unreadable ({}); re-running traverse", e.what());
        cached = false;
      }
    }
    if (!cached) {
      TraversalConfig tc = cfg.traversal;
      // Relations whose assessment failed carry no loss; loss-ranked sampling
      // plans over the scored ones only.
      KnowledgeGraph scored = graph;
      if (tc.edge_sampling != EdgeSampling::random) {
        for (const auto& [k, r] : graph.relations()) {
          if (!r.loss) scored.remove_relation(k);
        }
      }
      plan = plan_subgraphs(scored, tc);
      text = subgraphs_to_jsonl(plan);
      cache.store("traverse", key, "subgraphs.jsonl", *text);
    }
    plan_hash = sha256_hex(*text);
    report.subgraphs = plan.size();
    return cached;
  });

  Generated generated;
  std::string generated_hash;
  stage([&] {
    const auto key = key_for("generate", {synth_subset, semantic["traversal"]["qa_form"]}, plan_hash);
    auto text = cache.lookup("generate", key, "generated.json");
    bool cached = text.has_value();
    if (cached) {
      try {
        const auto j = nlohmann::json::parse(*text);
        generated = {};
        for (const auto& r : j.at("records")) generated.records.push_back(qa_record_from_json(r));
        for (const auto& s : j.at("skips")) generated.skips.push_back(gen_skip_from_json(s));
      } catch (const std::exception& e) {
        spdlog::warn("cached generation unreadable ({}); re-running generate", e.what());
        cached = false;
      }
    }
    if (!cached) {
      generated = run_generate(graph, plan, cfg.traversal.qa_form, client(), cfg, catalog);
      nlohmann::json j = {{"records", nlohmann::json::array()}, {"skips", nlohmann::json::array()}};
      for (const auto& r : generated.records) j["records"].push_back(to_json(r));
      for (const auto& s : generated.skips) j["skips"].push_back(to_json(s));
      text = j.dump(2) + "\n";
      cache.store("generate", key, "generated.json", *text);
    }
    generated_hash = sha256_hex(*text);
    report.qa_records = generated.records.size();
    report.qa_skips = generated.skips.size();
    if (report.qa_records + report.qa_skips != report.subgraphs) {
      throw ContractError("count conservation violated: " + std::to_string(report.qa_records) + " records + " +
                          std::to_string(report.qa_skips) + " skips != " + std::to_string(report.subgraphs) +
                          " subgraphs");
    }
    if (generated.records.empty()) throw Error("generation produced no records");
    write_dataset(generated.records, cfg.output.path, cfg.output.format);
    return cached;
  });

  stage([&] {
    const auto key = key_for("score", nlohmann::json::object(), generated_hash);
    auto text = cache.lookup("score", key, "score.json");
    bool cached = text.has_value();
    if (cached) {
      try {
        report.scores = nlohmann::json::parse(*text);
      } catch (const std::exception&) {
        cached = false;
      }
    }
    if (!cached) {
      report.scores = intrinsic_scores(generated.records);
      cache.store("score", key, "score.json", report.scores.dump(2) + "\n");
    }
    return cached;
  });

  report.llm_calls = client_holder ? client_holder->calls() : 0;
  try {
    write_text_atomic(fs::path(cfg.cache_dir) / "report.json", to_json(report).dump(2) + "\n");
  } catch (const std::exception& e) {
    spdlog::warn("could not write run report: {}", e.what());
  }
  return report;
}

}  // namespace graphgen
