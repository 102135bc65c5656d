#pragma once

// Independent reference implementations used as test oracles.  They are
// written for clarity rather than speed and share no code paths with the
// library beyond the graph container and token counter.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "graphgen/kg.hpp"
#include "graphgen/traverse.hpp"

namespace graphgen::oracle {

// ---------------------------------------------------------------------------
// MTLD, following the textbook procedure literally: grow a window from the
// current factor start, recount its types from scratch at every step.

inline double mtld_direction(const std::vector<std::string>& tokens, double threshold = 0.72) {
  const std::size_t n = tokens.size();
  double factors = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::unordered_set<std::string> types(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    const double ttr = static_cast<double>(types.size()) / static_cast<double>(i + 1 - start);
    if (ttr < threshold) {
      factors += 1;
      start = i + 1;
    }
  }
  if (start < n) {
    std::unordered_set<std::string> types(tokens.begin() + static_cast<std::ptrdiff_t>(start), tokens.end());
    const double ttr = static_cast<double>(types.size()) / static_cast<double>(n - start);
    factors += (1 - ttr) / (1 - threshold);
  }
  if (factors == 0) return 200.0;
  return static_cast<double>(n) / factors;
}

inline double mtld(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return 0.0;
  std::vector<std::string> rev(tokens.rbegin(), tokens.rend());
  return 0.5 * (mtld_direction(tokens) + mtld_direction(rev));
}

// ---------------------------------------------------------------------------
// k-hop extraction as a state machine: every step recomputes the frontier
// from the current edge set instead of maintaining it incrementally.

struct KhopState {
  std::vector<RelationKey> edges;
  std::map<RelationKey, int> depth;
};

inline std::size_t state_pre_length(const KnowledgeGraph& g, const KhopState& s) {
  std::set<std::string> nodes;
  std::size_t total = 0;
  for (const auto& k : s.edges) {
    for (const auto& d : g.find_relation(k)->descriptions) total += count_tokens(d);
    nodes.insert(k.first);
    nodes.insert(k.second);
  }
  for (const auto& n : nodes) {
    for (const auto& d : g.find_entity(n)->descriptions) total += count_tokens(d);
  }
  return total;
}

inline bool budget_met(const KnowledgeGraph& g, const KhopState& s, const TraversalConfig& cfg) {
  if (cfg.expand_method == ExpandMethod::max_width) {
    return static_cast<int>(s.edges.size()) >= 1 + cfg.max_extra_edges;
  }
  return static_cast<int>(state_pre_length(g, s)) >= cfg.max_tokens;
}

// Candidate edges with their hop depth.  Node depth is the smallest depth of
// any chosen edge touching it.  Expansion happens from the seed's larger
// endpoint, from the smaller one too when bidirectional, and from both
// endpoints of every non-seed edge.
inline std::map<RelationKey, int> frontier(const KnowledgeGraph& g, const KhopState& s, const TraversalConfig& cfg,
                                           const std::set<RelationKey>& excluded) {
  const RelationKey seed = s.edges.front();
  std::map<std::string, int> node_depth;
  for (const auto& k : s.edges) {
    for (const auto& v : {k.first, k.second}) {
      auto it = node_depth.find(v);
      if (it == node_depth.end() || s.depth.at(k) < it->second) node_depth[v] = s.depth.at(k);
    }
  }
  std::set<std::string> expanded = {seed.second};
  if (cfg.bidirectional) expanded.insert(seed.first);
  for (std::size_t i = 1; i < s.edges.size(); ++i) {
    expanded.insert(s.edges[i].first);
    expanded.insert(s.edges[i].second);
  }
  std::map<RelationKey, int> out;
  for (const auto& [k, r] : g.relations()) {
    if (s.depth.count(k) || excluded.count(k)) continue;
    if (!expanded.count(k.first) && !expanded.count(k.second)) continue;
    int d = INT32_MAX;
    for (const auto& v : {k.first, k.second}) {
      if (node_depth.count(v)) d = std::min(d, node_depth[v] + 1);
    }
    if (d <= cfg.max_depth) out[k] = d;
  }
  return out;
}

inline KhopState khop(const KnowledgeGraph& g, const RelationKey& seed, const TraversalConfig& cfg,
                      const std::set<RelationKey>& excluded, std::mt19937_64& rng) {
  KhopState s;
  s.edges = {seed};
  s.depth[seed] = 0;
  while (!budget_met(g, s, cfg)) {
    const auto f = frontier(g, s, cfg, excluded);
    if (f.empty()) break;
    std::vector<std::pair<RelationKey, int>> options(f.begin(), f.end());  // key order
    std::size_t choice = 0;
    if (cfg.edge_sampling == EdgeSampling::random) {
      choice = static_cast<std::size_t>(rng() % options.size());
    } else {
      for (std::size_t i = 1; i < options.size(); ++i) {
        const double li = *g.find_relation(options[i].first)->loss;
        const double lc = *g.find_relation(options[choice].first)->loss;
        const bool better = cfg.edge_sampling == EdgeSampling::max_loss ? li > lc : li < lc;
        if (better) choice = i;
      }
    }
    s.edges.push_back(options[choice].first);
    s.depth[options[choice].first] = options[choice].second;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Random graphs for property tests.

inline std::string random_words(std::mt19937_64& rng, int lo, int hi) {
  static const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "rice", "gene", "yield",
                                                 "drought", "root", "grain", "panicle", "flood", "seed"};
  std::uniform_int_distribution<int> len(lo, hi);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string out;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) out += (i ? " " : "") + vocab[pick(rng)];
  return out;
}

// Up to max_nodes entities and max_edges relations; losses drawn from a
// coarse grid so ties occur.
inline KnowledgeGraph random_graph(std::mt19937_64& rng, int max_nodes = 12, int max_edges = 20,
                                   bool with_loss = true) {
  std::uniform_int_distribution<int> node_count(2, max_nodes);
  const int n = node_count(rng);
  std::vector<Entity> ents;
  for (int i = 0; i < n; ++i) {
    ents.push_back({"n" + std::to_string(i), "concept", {random_words(rng, 1, 8)}, {"c0"}, {}});
  }
  std::uniform_int_distribution<int> edge_count(1, max_edges);
  std::uniform_int_distribution<int> node(0, n - 1);
  std::uniform_int_distribution<int> grid(0, 10);
  std::vector<Relation> rels;
  const int m = edge_count(rng);
  for (int i = 0; i < m; ++i) {
    const int a = node(rng);
    const int b = node(rng);
    if (a == b) continue;
    Relation r{"n" + std::to_string(a), "n" + std::to_string(b), {random_words(rng, 1, 12)}, {"c0"}, {}, {}};
    if (with_loss) r.loss = grid(rng) / 5.0;
    rels.push_back(r);
  }
  KnowledgeGraph g;
  g.merge(ents, rels);
  if (rels.empty()) g.merge({}, {{"n0", "n1", {"fallback edge"}, {"c0"}, with_loss ? std::optional(0.5) : std::nullopt, {}}});
  return g;
}

}  // namespace graphgen::oracle

namespace graphgen::oracle {

// ASCII-only recount of the default token rule: whitespace separates, each
// punctuation character stands alone, other runs are one token.
inline std::size_t ascii_token_count(const std::string& text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (std::ispunct(c)) {
      ++n;
      in_word = false;
    } else if (!in_word) {
      ++n;
      in_word = true;
    }
  }
  return n;
}

}  // namespace graphgen::oracle
