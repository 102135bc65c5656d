// graphgen command line.  Exit status: 0 success, 1 stage failure, 2 config
// or usage error.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphgen/graphgen.hpp"

namespace fs = std::filesystem;
using namespace graphgen;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct ConfigFailure {
  std::vector<std::string> errors;
};

struct GlobalOptions {
  std::string config;
  std::string mode;
  std::string cache_dir;
  std::vector<std::string> inputs;
  std::string input_format;
  std::optional<std::size_t> chunk_tokens;
  std::optional<std::size_t> chunk_overlap;
  std::string log_level = "info";
};

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

// Flags override the file; paths given on the command line resolve against
// the working directory.
PipelineConfig load(const GlobalOptions& g) {
  nlohmann::json root = nlohmann::json::object();
  fs::path base = fs::current_path();
  if (!g.config.empty()) {
    std::string text;
    try {
      text = read_text(g.config);
    } catch (const Error& e) {
      throw ConfigFailure{{e.what()}};
    }
    try {
      root = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigFailure{{std::string("config: not valid JSON: ") + e.what()}};
    }
    if (!root.is_object()) throw ConfigFailure{{"config: top level must be an object"}};
    base = fs::absolute(g.config).parent_path();
  }
  if (!g.mode.empty()) root["mode"] = g.mode;
  if (!g.cache_dir.empty()) root["cache_dir"] = absolute(g.cache_dir);
  if (!g.inputs.empty() || !g.input_format.empty() || g.chunk_tokens || g.chunk_overlap) {
    if (!root.contains("input") || !root["input"].is_object()) root["input"] = nlohmann::json::object();
    auto& in = root["input"];
    if (!g.inputs.empty()) {
      in["paths"] = nlohmann::json::array();
      for (const auto& p : g.inputs) in["paths"].push_back(absolute(p));
    }
    if (!g.input_format.empty()) in["format"] = g.input_format;
    if (g.chunk_tokens) in["chunk_tokens"] = *g.chunk_tokens;
    if (g.chunk_overlap) in["chunk_overlap"] = *g.chunk_overlap;
  }
  auto result = validate_config_json(root, base);
  if (!result.config) throw ConfigFailure{result.errors};
  return *result.config;
}

Client make_client(const PipelineConfig& cfg) { return Client(make_backend(cfg, {}), cfg.retry); }

void write_or_print(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text_atomic(out, text);
  }
}

KnowledgeGraph read_graph(const std::string& path) { return load_graph(path); }

std::vector<Chunk> chunks_for(const PipelineConfig& cfg, const std::string& chunks_file) {
  if (!chunks_file.empty()) return chunks_from_jsonl(read_text(chunks_file));
  return run_ingest(cfg.input);
}

std::string fmt_double(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

// External scores: one JSON object per line with an "id" naming the record's
// zero-based line index in the dataset, plus raw nat/coh/und/ind/deb values.
std::map<std::size_t, nlohmann::json> read_external_scores(const std::string& path) {
  std::map<std::size_t, nlohmann::json> out;
  std::istringstream lines(read_text(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const auto& id = j.at("id");
      const std::size_t index = id.is_string() ? std::stoul(id.get<std::string>()) : id.get<std::size_t>();
      out[index] = j;
    } catch (const std::exception& e) {
      throw LoadError(path + ":" + std::to_string(line_no) + ": bad score line (" + e.what() + ")");
    }
  }
  return out;
}

std::map<std::string, MetricBounds> read_bounds(const std::string& path) {
  std::map<std::string, MetricBounds> bounds;
  for (const char* m : {"mtld", "nat", "coh", "und", "ind", "deb"}) bounds[m] = default_bounds(m);
  if (path.empty()) return bounds;
  const auto j = nlohmann::json::parse(read_text(path), nullptr, true, true);
  for (const auto& [name, b] : j.items()) {
    if (!bounds.count(name)) throw ConfigError("bounds: unknown metric '" + name + "'");
    MetricBounds mb{b.at("min").get<double>(), b.at("max").get<double>()};
    if (!(mb.x_max > mb.x_min)) throw ConfigError("bounds." + name + ": max must exceed min");
    bounds[name] = mb;
  }
  return bounds;
}

int score_command(const std::string& dataset, const std::string& scores_file, const std::string& bounds_file,
                  const std::string& label) {
  std::vector<std::string> answers;
  std::istringstream lines(read_text(dataset));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      answers.push_back(parse_dataset_line(line).answer);
    } catch (const std::exception& e) {
      throw LoadError(dataset + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const auto bounds = read_bounds(bounds_file);
  const auto stats = dataset_stats(answers);

  double mtld_sum = 0.0;
  for (const auto& a : answers) mtld_sum += mtld(a);
  const double mtld_raw = answers.empty() ? 0.0 : mtld_sum / static_cast<double>(answers.size());

  std::map<std::string, double> raw = {{"mtld", mtld_raw}};
  if (!scores_file.empty()) {
    const auto external = read_external_scores(scores_file);
    std::size_t matched = 0;
    std::map<std::string, double> sums;
    for (const auto& [index, j] : external) {
      if (index >= answers.size()) {
        spdlog::warn("score id {} has no dataset record", index);
        continue;
      }
      ++matched;
      for (const char* m : {"nat", "coh", "und", "ind", "deb"}) sums[m] += j.at(m).get<double>();
    }
    if (matched < answers.size()) spdlog::warn("{} of {} records have external scores", matched, answers.size());
    for (const auto& [m, s] : sums) raw[m] = matched ? s / static_cast<double>(matched) : 0.0;
  }

  ScoreRow row;
  auto norm = [&](const char* m) { return raw.count(m) ? normalize(raw[m], bounds.at(m)) : 0.0; };
  row.mtld = norm("mtld");
  row.nat = norm("nat");
  row.coh = norm("coh");
  row.und = norm("und");
  row.ind = norm("ind");
  row.deb = norm("deb");
  const auto composite = aggregate(row);

  const std::vector<std::pair<std::string, std::string>> cols = {
      {"method", label},
      {"samples", std::to_string(stats.sample_count)},
      {"avg_tokens", fmt_double(stats.avg_answer_tokens, 1)},
      {"mtld", fmt_double(row.mtld, 1)},
      {"nat", fmt_double(row.nat, 1)},
      {"coh", fmt_double(row.coh, 1)},
      {"und", fmt_double(row.und, 1)},
      {"ind", fmt_double(row.ind, 1)},
      {"deb", fmt_double(row.deb, 1)},
      {"s_uni", fmt_double(composite.s_uni, 1)},
      {"s_rew", fmt_double(composite.s_rew, 1)},
      {"s_avg", fmt_double(composite.s_avg, 1)},
  };
  std::string header, values, head_text, value_text;
  for (const auto& [name, value] : cols) {
    header += (header.empty() ? "" : ",") + name;
    values += (values.empty() ? "" : ",") + value;
    const std::size_t width = std::max(name.size(), value.size()) + 2;
    head_text += name + std::string(width - name.size(), ' ');
    value_text += value + std::string(width - value.size(), ' ');
  }
  std::cout << header << "\n" << values << "\n\n" << head_text << "\n" << value_text << "\n";
  if (scores_file.empty()) std::cout << "(no external scores: nat/coh/und/ind/deb reported as 0)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph guided synthetic QA data generation"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--mode", g.mode, "live, record or replay")
      ->check(CLI::IsMember({"live", "record", "replay"}));
  app.add_option("--cache-dir", g.cache_dir, "stage cache and cassette directory");
  app.add_option("--input", g.inputs, "input document paths");
  app.add_option("--input-format", g.input_format, "plain_text or jsonl_content_field")
      ->check(CLI::IsMember({"plain_text", "jsonl_content_field"}));
  app.add_option("--chunk-tokens", g.chunk_tokens, "maximum tokens per chunk");
  app.add_option("--chunk-overlap", g.chunk_overlap, "tokens shared by consecutive chunks");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")->capture_default_str();

  std::string out;
  std::string graph_path;
  std::string chunks_file;
  std::string plan_path;

  auto* ingest_cmd = app.add_subcommand("ingest", "read and chunk the input documents");
  ingest_cmd->add_option("--out", out, "chunk JSONL (default stdout)");

  auto* kg_cmd = app.add_subcommand("kg", "knowledge graph commands");
  kg_cmd->require_subcommand(1);
  auto* kg_build = kg_cmd->add_subcommand("build", "extract and merge a graph");
  kg_build->add_option("--chunks", chunks_file, "chunk JSONL (default: ingest the inputs)");
  kg_build->add_option("--out", out, "graph JSON (default stdout)");
  auto* kg_stats = kg_cmd->add_subcommand("stats", "print graph statistics");
  kg_stats->add_option("--graph", graph_path)->required();
  auto* kg_export = kg_cmd->add_subcommand("export", "print the graph");
  kg_export->add_option("--graph", graph_path)->required();
  std::string export_format = "json";
  kg_export->add_option("--format", export_format)->check(CLI::IsMember({"json"}));

  auto* assess_cmd = app.add_subcommand("assess", "comprehension assessment");
  assess_cmd->require_subcommand(1);
  auto* assess_run = assess_cmd->add_subcommand("run", "score every relation");
  assess_run->add_option("--graph", graph_path)->required();
  assess_run->add_option("--out", out, "scored graph JSON (default stdout)");
  std::optional<std::size_t> n_override;
  std::optional<double> eps_override;
  assess_run->add_option("--n", n_override, "paraphrases and negations per relation");
  assess_run->add_option("--epsilon", eps_override, "probability floor");
  auto* assess_hist = assess_cmd->add_subcommand("hist", "loss histogram as CSV");
  assess_hist->add_option("--graph", graph_path)->required();
  std::size_t bins = 20;
  std::optional<double> hist_upper;
  assess_hist->add_option("--bins", bins)->capture_default_str();
  assess_hist->add_option("--upper", hist_upper, "right edge of the last bin (default: max loss)");

  auto* traverse_cmd = app.add_subcommand("traverse", "subgraph planning");
  traverse_cmd->require_subcommand(1);
  auto* traverse_plan = traverse_cmd->add_subcommand("plan", "write the subgraph manifest");
  traverse_plan->add_option("--graph", graph_path)->required();
  traverse_plan->add_option("--out", out, "manifest JSONL (default stdout)");

  auto* generate_cmd = app.add_subcommand("generate", "generate QA pairs for a manifest");
  generate_cmd->add_option("--graph", graph_path)->required();
  generate_cmd->add_option("--plan", plan_path, "manifest JSONL (default: plan from the graph)");
  std::string form;
  std::string dataset_format;
  generate_cmd->add_option("--form", form)->check(CLI::IsMember({"atomic", "aggregated", "multi_hop"}));
  generate_cmd->add_option("--format", dataset_format)->check(CLI::IsMember({"alpaca", "sharegpt"}));
  generate_cmd->add_option("--out", out, "dataset JSONL (default: output.path)");

  auto* score_cmd = app.add_subcommand("score", "intrinsic quality report");
  std::string dataset, external_scores, bounds_file, label = "graphgen";
  score_cmd->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--external-scores", external_scores)->check(CLI::ExistingFile);
  score_cmd->add_option("--bounds", bounds_file)->check(CLI::ExistingFile);
  score_cmd->add_option("--label", label)->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "full pipeline with caching");
  auto* dump_prompts = app.add_subcommand("prompts", "write the default prompt templates");
  std::string prompt_out;
  dump_prompts->add_option("dir", prompt_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("graphgen"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (dump_prompts->parsed()) {
      PromptCatalog().write_defaults(prompt_out);
      return 0;
    }
    if (score_cmd->parsed()) return score_command(dataset, external_scores, bounds_file, label);
    if (kg_stats->parsed()) {
      const auto s = graph_stats(read_graph(graph_path));
      nlohmann::json hist = nlohmann::json::object();
      for (const auto& [d, c] : s.degree_histogram) hist[std::to_string(d)] = c;
      std::cout << nlohmann::json{{"entities", s.entities},
                                  {"relations", s.relations},
                                  {"isolated", s.isolated},
                                  {"scored", s.scored},
                                  {"degree_histogram", hist}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (kg_export->parsed()) {
      std::cout << to_json(read_graph(graph_path)).dump(2) << "\n";
      return 0;
    }
    if (assess_hist->parsed()) {
      std::cout << "bin_lower,bin_upper,count\n";
      for (const auto& b : loss_histogram(read_graph(graph_path), bins, hist_upper)) {
        std::cout << fmt_double(b.lower, 6) << "," << fmt_double(b.upper, 6) << "," << b.count << "\n";
      }
      return 0;
    }

    PipelineConfig cfg = load(g);
    const PromptCatalog catalog = load_catalog(cfg);

    if (run_cmd->parsed()) {
      const auto report = run_pipeline(cfg);
      std::cout << to_json(report).dump(2) << "\n";
      return report.exit_code();
    }
    if (ingest_cmd->parsed()) {
      write_or_print(out, chunks_to_jsonl(run_ingest(cfg.input)));
      return 0;
    }
    if (traverse_plan->parsed()) {
      write_or_print(out, subgraphs_to_jsonl(plan_subgraphs(read_graph(graph_path), cfg.traversal)));
      return 0;
    }

    Client client = make_client(cfg);
    if (kg_build->parsed()) {
      ExtractCounts counts;
      const auto graph = build_graph(chunks_for(cfg, chunks_file), client, cfg, catalog, &counts);
      spdlog::info("{} entities, {} relations, {} parse failures, {} failed chunks", graph.entities().size(),
                   graph.relations().size(), counts.parse_failures, counts.failed_chunks);
      write_or_print(out, to_json(graph).dump(2) + "\n");
      return 0;
    }
    if (assess_run->parsed()) {
      if (n_override) cfg.assessment.n = *n_override;
      if (eps_override) cfg.assessment.epsilon = *eps_override;
      if (cfg.assessment.n == 0) throw ConfigFailure{{"--n must be positive"}};
      if (!(cfg.assessment.epsilon > 0 && cfg.assessment.epsilon < 1)) {
        throw ConfigFailure{{"--epsilon must be in (0, 1)"}};
      }
      auto graph = read_graph(graph_path);
      const auto stats = run_assess(graph, client, cfg, catalog);
      spdlog::info("{} relations scored, {} skipped", stats.scored, stats.skipped);
      write_or_print(out, to_json(graph).dump(2) + "\n");
      return 0;
    }
    if (generate_cmd->parsed()) {
      const auto graph = read_graph(graph_path);
      const QAForm qa_form = form.empty() ? cfg.traversal.qa_form : parse_qa_form(form);
      const DatasetFormat fmt = dataset_format.empty() ? cfg.output.format
                                : dataset_format == "alpaca" ? DatasetFormat::alpaca
                                                             : DatasetFormat::sharegpt;
      TraversalConfig tc = cfg.traversal;
      tc.qa_form = qa_form;
      const auto plan = plan_path.empty() ? plan_subgraphs(graph, tc) : subgraphs_from_jsonl(read_text(plan_path));
      const auto generated = run_generate(graph, plan, qa_form, client, cfg, catalog);
      spdlog::info("{} records, {} skips from {} subgraphs", generated.records.size(), generated.skips.size(),
                   plan.size());
      write_dataset(generated.records, out.empty() ? cfg.output.path : out, fmt);
      return 0;
    }
  } catch (const ConfigFailure& f) {
    for (const auto& e : f.errors) std::cerr << "config error: " << e << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
