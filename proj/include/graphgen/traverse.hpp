#pragma once

// k-hop subgraph extraction around seed edges.
//
// Starting from a seed relation the subgraph grows one candidate edge at a
// time.  Candidates are the unvisited edges adjacent to the frontier; the next
// edge is picked by loss (or at random), inserted, and then the budget is
// checked.  If the budget is not yet reached, the new edge's endpoints
// contribute their adjacent edges to the candidate pool.  Depths follow BFS
// layering: seed endpoints sit at depth 0, an inserted edge gets
// 1 + min(depth of its already-included endpoints), and a node's depth is the
// minimum depth of the included edges touching it.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "graphgen/error.hpp"
#include "graphgen/kg.hpp"
#include "graphgen/text.hpp"

namespace graphgen {

enum class QAForm { atomic, aggregated, multi_hop };
enum class ExpandMethod { max_width, max_tokens };
enum class EdgeSampling { max_loss, min_loss, random };
enum class IsolatedNodeStrategy { add, ignore };

inline std::string to_string(QAForm f) {
  switch (f) {
    case QAForm::atomic: return "atomic";
    case QAForm::aggregated: return "aggregated";
    case QAForm::multi_hop: return "multi_hop";
  }
  return "?";
}
inline std::string to_string(ExpandMethod m) {
  return m == ExpandMethod::max_width ? "max_width" : "max_tokens";
}
inline std::string to_string(EdgeSampling s) {
  switch (s) {
    case EdgeSampling::max_loss: return "max_loss";
    case EdgeSampling::min_loss: return "min_loss";
    case EdgeSampling::random: return "random";
  }
  return "?";
}
inline std::string to_string(IsolatedNodeStrategy s) {
  return s == IsolatedNodeStrategy::add ? "add" : "ignore";
}

struct TraversalConfig {
  QAForm qa_form = QAForm::atomic;
  ExpandMethod expand_method = ExpandMethod::max_tokens;
  bool bidirectional = true;
  int max_extra_edges = 5;
  int max_tokens = 256;
  int max_depth = 2;
  EdgeSampling edge_sampling = EdgeSampling::max_loss;
  IsolatedNodeStrategy isolated_node_strategy = IsolatedNodeStrategy::add;
  std::uint64_t random_seed = 0;
  // When false every relation lands in at most one subgraph.
  bool allow_edge_reuse = false;
};

// Selection-order PRNG: std::mt19937_64 is fully specified by the standard,
// and picks use draw % size, so runs agree across platforms.
using TraversalRng = std::mt19937_64;

struct Subgraph {
  std::optional<RelationKey> seed;  // empty for node-only subgraphs
  std::vector<RelationKey> edges;   // insertion order, seed first
  std::set<std::string> nodes;
  std::size_t pre_length = 0;
  std::map<RelationKey, int> depth_of;

  std::string id() const { return seed ? to_string(*seed) : "node:" + *nodes.begin(); }
  bool operator==(const Subgraph&) const = default;
};

inline std::size_t description_tokens(const std::vector<std::string>& descriptions,
                                      const TokenCounter& counter = default_token_counter()) {
  std::size_t n = 0;
  for (const auto& d : descriptions) n += counter.count(d);
  return n;
}

inline std::size_t pre_length_of(const KnowledgeGraph& graph, const std::vector<RelationKey>& edges,
                                  const std::set<std::string>& nodes,
                                  const TokenCounter& counter = default_token_counter()) {
  std::size_t total = 0;
  for (const auto& k : edges) {
    const Relation* r = graph.find_relation(k);
    if (!r) throw ContractError("unknown relation " + to_string(k));
    total += description_tokens(r->descriptions, counter);
  }
  for (const auto& n : nodes) {
    const Entity* e = graph.find_entity(n);
    if (!e) throw ContractError("unknown entity " + n);
    total += description_tokens(e->descriptions, counter);
  }
  return total;
}

namespace detail {

inline double required_loss(const KnowledgeGraph& graph, const RelationKey& k) {
  const auto& loss = graph.find_relation(k)->loss;
  if (!loss) {
    throw ConfigError("relation " + to_string(k) +
                      " has no loss; run assessment or use edge_sampling = random");
  }
  return *loss;
}

}  // namespace detail

// `excluded` holds edges that may not be used (the global visited set);
// `rng` is shared across calls so a plan draws one deterministic stream.
inline Subgraph extract_khop(const KnowledgeGraph& graph, const RelationKey& seed,
                             const TraversalConfig& cfg,
                             const std::set<RelationKey>* excluded = nullptr,
                             TraversalRng* rng = nullptr) {
  const Relation* seed_rel = graph.find_relation(seed);
  if (!seed_rel) throw ContractError("seed relation " + to_string(seed) + " not in graph");
  const bool by_loss = cfg.edge_sampling != EdgeSampling::random;
  if (by_loss) detail::required_loss(graph, seed);
  TraversalRng local_rng(cfg.random_seed);
  if (!rng) rng = &local_rng;

  Subgraph sg;
  sg.seed = seed;
  sg.edges.push_back(seed);
  sg.depth_of[seed] = 0;
  sg.nodes = {seed.first, seed.second};
  sg.pre_length = pre_length_of(graph, sg.edges, sg.nodes);
  std::map<std::string, int> node_depth = {{seed.first, 0}, {seed.second, 0}};

  auto budget_reached = [&] {
    if (cfg.expand_method == ExpandMethod::max_width) {
      return sg.edges.size() >= 1 + static_cast<std::size_t>(cfg.max_extra_edges);
    }
    return sg.pre_length >= static_cast<std::size_t>(cfg.max_tokens);
  };
  if (budget_reached()) return sg;

  std::map<RelationKey, int> candidates;  // key -> candidate depth
  auto candidate_depth = [&](const RelationKey& k) {
    int best = -1;
    for (const auto& end : {k.first, k.second}) {
      auto it = node_depth.find(end);
      if (it != node_depth.end() && (best < 0 || it->second < best)) best = it->second;
    }
    return best + 1;
  };
  auto expand_from = [&](const std::string& node) {
    for (const auto& k : graph.adjacent(node)) {
      if (sg.depth_of.count(k) || (excluded && excluded->count(k))) continue;
      const int d = candidate_depth(k);
      if (d > cfg.max_depth) continue;
      if (by_loss) detail::required_loss(graph, k);
      auto [it, inserted] = candidates.try_emplace(k, d);
      if (!inserted) it->second = std::min(it->second, d);
    }
  };

  if (cfg.bidirectional) expand_from(seed.first);
  expand_from(seed.second);

  while (!candidates.empty()) {
    auto pick = candidates.begin();
    if (cfg.edge_sampling == EdgeSampling::random) {
      std::advance(pick, static_cast<std::ptrdiff_t>((*rng)() % candidates.size()));
    } else {
      double best = detail::required_loss(graph, pick->first);
      for (auto it = std::next(candidates.begin()); it != candidates.end(); ++it) {
        const double l = detail::required_loss(graph, it->first);
        if (cfg.edge_sampling == EdgeSampling::max_loss ? l > best : l < best) {
          best = l;
          pick = it;
        }
      }
    }
    const RelationKey e = pick->first;
    const int depth = pick->second;
    candidates.erase(pick);

    sg.edges.push_back(e);
    sg.depth_of[e] = depth;
    sg.pre_length += description_tokens(graph.find_relation(e)->descriptions);
    for (const auto& end : {e.first, e.second}) {
      if (sg.nodes.insert(end).second) {
        sg.pre_length += description_tokens(graph.find_entity(end)->descriptions);
      }
      auto [it, inserted] = node_depth.try_emplace(end, depth);
      if (!inserted) it->second = std::min(it->second, depth);
    }

    if (budget_reached()) break;
    expand_from(e.first);
    expand_from(e.second);
  }
  return sg;
}

namespace detail {

inline std::vector<RelationKey> seed_order(const KnowledgeGraph& graph, const TraversalConfig& cfg,
                                           TraversalRng& rng) {
  std::vector<RelationKey> keys;
  for (const auto& [k, _] : graph.relations()) keys.push_back(k);
  switch (cfg.edge_sampling) {
    case EdgeSampling::max_loss:
    case EdgeSampling::min_loss: {
      const bool desc = cfg.edge_sampling == EdgeSampling::max_loss;
      for (const auto& k : keys) required_loss(graph, k);
      std::stable_sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
        const double la = *graph.find_relation(a)->loss;
        const double lb = *graph.find_relation(b)->loss;
        return desc ? la > lb : la < lb;
      });
      break;
    }
    case EdgeSampling::random:
      for (std::size_t i = keys.size(); i > 1; --i) {
        std::swap(keys[i - 1], keys[rng() % i]);
      }
      break;
  }
  return keys;
}

}  // namespace detail

// Seeds are visited in sampling order (loss-descending for max_loss).  Atomic
// plans yield single-edge subgraphs; other forms expand each unvisited seed
// with extract_khop.  Isolated entities become node-only subgraphs only for
// atomic plans with isolated_node_strategy = add.
inline std::vector<Subgraph> plan_subgraphs(const KnowledgeGraph& graph, const TraversalConfig& cfg) {
  TraversalRng rng(cfg.random_seed);
  std::vector<Subgraph> plan;
  std::set<RelationKey> visited;
  for (const auto& seed : detail::seed_order(graph, cfg, rng)) {
    if (!cfg.allow_edge_reuse && visited.count(seed)) continue;
    Subgraph sg;
    if (cfg.qa_form == QAForm::atomic) {
      sg.seed = seed;
      sg.edges = {seed};
      sg.depth_of[seed] = 0;
      sg.nodes = {seed.first, seed.second};
      sg.pre_length = pre_length_of(graph, sg.edges, sg.nodes);
    } else {
      sg = extract_khop(graph, seed, cfg, cfg.allow_edge_reuse ? nullptr : &visited, &rng);
    }
    if (!cfg.allow_edge_reuse) visited.insert(sg.edges.begin(), sg.edges.end());
    plan.push_back(std::move(sg));
  }

  if (cfg.qa_form == QAForm::atomic && cfg.isolated_node_strategy == IsolatedNodeStrategy::add) {
    for (const auto& [name, e] : graph.entities()) {
      if (graph.degree(name) != 0) continue;
      Subgraph sg;
      sg.nodes = {name};
      sg.pre_length = pre_length_of(graph, {}, sg.nodes);
      plan.push_back(std::move(sg));
    }
  }
  return plan;
}

inline nlohmann::json to_json(const Subgraph& sg) {
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json depths = nlohmann::json::array();
  for (const auto& k : sg.edges) {
    edges.push_back({k.first, k.second});
    depths.push_back(sg.depth_of.at(k));
  }
  return {{"id", sg.id()},
          {"seed", sg.seed ? nlohmann::json{sg.seed->first, sg.seed->second} : nlohmann::json(nullptr)},
          {"edges", edges},
          {"nodes", sg.nodes},
          {"pre_length", sg.pre_length},
          {"depths", depths}};
}

inline Subgraph subgraph_from_json(const nlohmann::json& j) {
  Subgraph sg;
  if (!j.at("seed").is_null()) {
    sg.seed = RelationKey{j["seed"].at(0).get<std::string>(), j["seed"].at(1).get<std::string>()};
  }
  const auto& edges = j.at("edges");
  const auto& depths = j.at("depths");
  if (edges.size() != depths.size()) throw LoadError("subgraph: edges/depths length mismatch");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    RelationKey k{edges[i].at(0).get<std::string>(), edges[i].at(1).get<std::string>()};
    sg.edges.push_back(k);
    sg.depth_of[k] = depths[i].get<int>();
  }
  for (const auto& n : j.at("nodes")) sg.nodes.insert(n.get<std::string>());
  sg.pre_length = j.at("pre_length").get<std::size_t>();
  return sg;
}

inline std::string subgraphs_to_jsonl(const std::vector<Subgraph>& plan) {
  std::string out;
  for (const auto& sg : plan) out += to_json(sg).dump() + "\n";
  return out;
}

inline std::vector<Subgraph> subgraphs_from_jsonl(std::string_view content) {
  std::vector<Subgraph> out;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    if (nl == std::string_view::npos) nl = content.size();
    const auto line = content.substr(start, nl - start);
    if (!line.empty()) out.push_back(subgraph_from_json(nlohmann::json::parse(line)));
    start = nl + 1;
  }
  return out;
}

}  // namespace graphgen
