// Regenerates tests/fixtures/cassette.jsonl by running the fixture pipeline
// in record mode against the simulated models.  Entries are sorted by key so
// the file is stable under re-recording.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "graphgen/pipeline.hpp"
#include "support/simulated_llm.hpp"

namespace fs = std::filesystem;
using namespace graphgen;

int main(int argc, char** argv) {
  const fs::path fixtures = argc > 1 ? fs::path(argv[1]) : fs::path(GRAPHGEN_FIXTURE_DIR);
  auto loaded = load_config(fixtures / "pipeline.json");
  if (!loaded.config) {
    for (const auto& e : loaded.errors) std::cerr << e << "\n";
    return 2;
  }
  PipelineConfig cfg = *loaded.config;
  const fs::path work = fs::temp_directory_path() / "graphgen-record";
  fs::remove_all(work);
  cfg.mode = RunMode::record;
  cfg.cache_dir = (work / "cache").string();
  cfg.output.path = (work / "qa.jsonl").string();

  PipelineHooks hooks;
  hooks.live_backend = std::make_shared<sim::SimulatedLlm>();
  const auto report = run_pipeline(cfg, hooks);
  std::cout << to_json(report).dump(2) << "\n";
  if (!report.ok()) return 1;

  std::vector<std::string> lines;
  {
    std::ifstream in(work / "cache" / "cassette.jsonl");
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) lines.push_back(line);
    }
  }
  std::sort(lines.begin(), lines.end());
  std::ofstream out(fixtures / "cassette.jsonl", std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
  std::cout << lines.size() << " cassette entries written\n";
  return 0;
}
