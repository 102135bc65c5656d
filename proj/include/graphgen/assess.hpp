#pragma once

// Comprehension assessment of the trainee model.
//
// Each relation description R is rephrased n times (R_1..R_n) and negated n
// times (~R_1..~R_n).  The trainee answers yes/no for each statement and we
// read the first-token probabilities:
//
//   confidence = 1/(2n) * ( sum_j P(yes | R_j) + sum_j P(no | ~R_j) )
//   loss       = -1/(2n) * ( sum_j ln P(yes | R_j) + sum_j ln P(no | ~R_j) )
//
// Probabilities are floored at epsilon before use.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphgen/error.hpp"
#include "graphgen/kg.hpp"
#include "graphgen/llm.hpp"
#include "graphgen/parallel.hpp"
#include "graphgen/prompts.hpp"
#include "graphgen/text.hpp"

namespace graphgen {

enum class Polarity { positive, negative };

struct Statement {
  std::string text;
  Polarity polarity = Polarity::positive;
  RelationKey parent_relation;
  std::size_t index = 1;  // 1..n within its polarity

  bool operator==(const Statement&) const = default;
};

struct ProbeResult {
  Statement statement;
  double p_yes = 0.0;
  double p_no = 0.0;
};

struct ComprehensionScore {
  RelationKey relation;
  double confidence = 0.0;
  double loss = 0.0;
  std::size_t n = 0;
};

struct AssessConfig {
  std::size_t n = 2;
  double epsilon = 1e-6;
  // Divide p_yes and p_no by their sum before scoring.
  bool renormalize = false;
  std::set<std::string> yes_tokens = {"yes"};
  std::set<std::string> no_tokens = {"no"};
  std::string language = "English";
};

// n literal paraphrases and n negations, all sampled at temperature 1.  Call j
// of a polarity carries seed j so each request (and cassette key) is
// distinct; a duplicate text is regenerated once with seed 1000 + j.
inline std::vector<Statement> rephrase_statements(const Relation& relation, std::size_t n,
                                                  Client& client, const ModelEndpoint& synthesizer,
                                                  const GenerationParams& base_params,
                                                  const PromptCatalog& catalog,
                                                  const std::string& language = "English") {
  if (n == 0) throw ContractError("n must be positive");
  if (relation.descriptions.empty()) {
    throw ContractError("relation " + to_string(relation.key()) + " has no description");
  }
  const std::string source = join_descriptions(relation.descriptions);
  std::vector<Statement> out;
  for (const auto polarity : {Polarity::positive, Polarity::negative}) {
    const auto& tmpl =
        catalog.get(polarity == Polarity::positive ? "rephrase_literal" : "rephrase_opposite");
    const auto messages = user_prompt(tmpl.render({{"statement", source}, {"language", language}}));
    std::set<std::string> seen;
    for (std::size_t j = 1; j <= n; ++j) {
      GenerationParams params = base_params;
      params.temperature = 1.0;
      params.seed = static_cast<std::int64_t>(j);
      std::string text = trim(client.complete(synthesizer, messages, params).text);
      if (seen.count(text)) {
        params.seed = static_cast<std::int64_t>(1000 + j);
        std::string again = trim(client.complete(synthesizer, messages, params).text);
        if (seen.count(again)) {
          spdlog::warn("duplicate statement for {} accepted after regeneration",
                       to_string(relation.key()));
        }
        text = std::move(again);
      }
      seen.insert(text);
      out.push_back({text, polarity, relation.key(), j});
    }
  }
  return out;
}

// First top-logprob token whose folded, trimmed text is in the set; epsilon
// when absent.
inline double token_probability(const std::vector<TokenLogprob>& top,
                                const std::set<std::string>& match, double epsilon) {
  for (const auto& t : top) {
    if (match.count(case_fold(trim(t.token)))) {
      return std::clamp(std::exp(t.logprob), epsilon, 1.0);
    }
  }
  return epsilon;
}

inline ProbeResult probe_from_completion(const Statement& stmt, const CompletionResult& completion,
                                         const AssessConfig& cfg) {
  if (completion.first_token_top_logprobs.empty()) {
    throw ProbeError("trainee response carries no logprobs; the endpoint cannot be probed");
  }
  ProbeResult r{stmt, token_probability(completion.first_token_top_logprobs, cfg.yes_tokens, cfg.epsilon),
                token_probability(completion.first_token_top_logprobs, cfg.no_tokens, cfg.epsilon)};
  if (cfg.renormalize) {
    const double total = r.p_yes + r.p_no;
    r.p_yes = std::max(r.p_yes / total, cfg.epsilon);
    r.p_no = std::max(r.p_no / total, cfg.epsilon);
  }
  return r;
}

inline ProbeResult probe_statement(const Statement& stmt, Client& client,
                                   const ModelEndpoint& trainee, const PromptCatalog& catalog,
                                   const AssessConfig& cfg = {}) {
  const auto prompt = catalog.get("statement_judgment").render({{"statement", stmt.text}});
  const auto completion = client.complete(trainee, user_prompt(prompt), GenerationParams::judgment());
  return probe_from_completion(stmt, completion, cfg);
}

inline ComprehensionScore score_relation(const std::vector<ProbeResult>& probes,
                                         double epsilon = 1e-6) {
  if (probes.empty()) throw ContractError("score_relation needs probes");
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double conf_sum = 0.0;
  double log_sum = 0.0;
  const RelationKey parent = probes.front().statement.parent_relation;
  for (const auto& p : probes) {
    if (p.statement.parent_relation != parent) {
      throw ContractError("probes belong to different relations");
    }
    const double prob = std::max(
        p.statement.polarity == Polarity::positive ? p.p_yes : p.p_no, epsilon);
    (p.statement.polarity == Polarity::positive ? positives : negatives) += 1;
    conf_sum += prob;
    log_sum += std::log(prob);
  }
  if (positives != negatives) {
    throw ContractError("expected n positive and n negative probes, got " +
                        std::to_string(positives) + " and " + std::to_string(negatives));
  }
  const double two_n = static_cast<double>(probes.size());
  ComprehensionScore s;
  s.relation = parent;
  s.n = positives;
  s.confidence = conf_sum / two_n;
  s.loss = log_sum == 0.0 ? 0.0 : -log_sum / two_n;
  return s;
}

struct AssessStats {
  std::size_t scored = 0;
  std::size_t skipped = 0;
  std::size_t llm_failures = 0;
};

// Scores every relation of the graph in place.  A relation whose rephrasing
// or probing fails keeps an unset loss.
inline AssessStats assess_graph(KnowledgeGraph& graph, Client& client,
                                const ModelEndpoint& synthesizer,
                                const GenerationParams& synth_params, const ModelEndpoint& trainee,
                                const PromptCatalog& catalog, const AssessConfig& cfg,
                                std::size_t workers) {
  std::vector<RelationKey> keys;
  for (const auto& [k, _] : graph.relations()) keys.push_back(k);
  std::vector<std::optional<ComprehensionScore>> scores(keys.size());
  std::atomic<std::size_t> failures{0};

  parallel_for(keys.size(), workers, [&](std::size_t i) {
    const Relation& rel = *graph.find_relation(keys[i]);
    try {
      const auto statements = rephrase_statements(rel, cfg.n, client, synthesizer, synth_params,
                                                  catalog, cfg.language);
      std::vector<ProbeResult> probes;
      for (const auto& s : statements) probes.push_back(probe_statement(s, client, trainee, catalog, cfg));
      scores[i] = score_relation(probes, cfg.epsilon);
    } catch (const CassetteMiss&) {
      throw;
    } catch (const ProbeError&) {
      throw;
    } catch (const Error& e) {
      ++failures;
      spdlog::warn("assessment skipped for {}: {}", to_string(keys[i]), e.what());
    }
  });

  AssessStats stats;
  stats.llm_failures = failures;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (scores[i]) {
      graph.set_loss(keys[i], scores[i]->loss);
      ++stats.scored;
    } else {
      graph.set_loss(keys[i], std::nullopt);
      ++stats.skipped;
    }
  }
  return stats;
}

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
};

// Fixed-width bins over [0, upper]; upper defaults to the maximum loss.  The
// last bin is closed on the right.
inline std::vector<HistogramBin> loss_histogram(const KnowledgeGraph& graph, std::size_t bins,
                                                std::optional<double> upper = std::nullopt) {
  if (bins == 0) throw ContractError("bins must be positive");
  std::vector<double> losses;
  for (const auto& [_, r] : graph.relations()) {
    if (r.loss) losses.push_back(*r.loss);
  }
  if (losses.empty()) return {};
  double top = upper.value_or(*std::max_element(losses.begin(), losses.end()));
  if (!(top > 0)) top = 1.0;
  const double width = top / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = width * static_cast<double>(b);
    out[b].upper = b + 1 == bins ? top : width * static_cast<double>(b + 1);
  }
  for (double l : losses) {
    auto b = static_cast<std::size_t>(std::floor(l / width));
    out[std::min(b, bins - 1)].count += 1;
  }
  return out;
}

enum class SelectionEnd { top, bottom };

// Scored relations sorted by loss descending, ties by key ascending; returns
// the first (top) or last (bottom) floor(fraction * N) of them.
inline std::vector<RelationKey> select_by_loss(const KnowledgeGraph& graph, double fraction,
                                               SelectionEnd end) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("fraction must be in (0, 1]");
  }
  std::vector<std::pair<double, RelationKey>> scored;
  for (const auto& [k, r] : graph.relations()) {
    if (r.loss) scored.emplace_back(*r.loss, k);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const auto take = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(scored.size()) + 1e-9));
  std::vector<RelationKey> out;
  const std::size_t first = end == SelectionEnd::top ? 0 : scored.size() - take;
  for (std::size_t i = first; i < first + take; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace graphgen
