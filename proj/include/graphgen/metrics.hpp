#pragma once

// Intrinsic dataset quality: MTLD lexical diversity, min-max normalization to
// [0, 100], and the composite score
//
//   S_uni = (S_nat + S_coh + S_und) / 3
//   S_rew = (S_ind + S_deb) / 2
//   S_avg = (S_mtld + S_uni + S_rew) / 3

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "graphgen/error.hpp"
#include "graphgen/text.hpp"

namespace graphgen {

struct MtldConfig {
  double threshold = 0.72;
  // Returned for a direction that never closes a factor.
  double cap = 200.0;
};

// Case-folded, punctuation removed, split on whitespace.
inline std::vector<std::string> mtld_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const auto& cp : decode_utf8(case_fold(text))) {
    if (is_space(cp.value)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (!is_punct(cp.value)) {
      append_utf8(cur, cp.value);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace detail {

template <typename It>
double mtld_pass(It begin, It end, const MtldConfig& cfg) {
  double factors = 0.0;
  std::set<std::string_view> types;
  std::size_t count = 0;
  std::size_t total = 0;
  double ttr = 1.0;
  for (It it = begin; it != end; ++it) {
    ++total;
    ++count;
    types.insert(*it);
    ttr = static_cast<double>(types.size()) / static_cast<double>(count);
    if (ttr < cfg.threshold) {
      factors += 1.0;
      types.clear();
      count = 0;
      ttr = 1.0;
    }
  }
  if (count > 0) factors += (1.0 - ttr) / (1.0 - cfg.threshold);
  if (factors == 0.0) return cfg.cap;
  return static_cast<double>(total) / factors;
}

}  // namespace detail

inline double mtld_of_tokens(const std::vector<std::string>& tokens, const MtldConfig& cfg = {}) {
  if (tokens.empty()) return 0.0;
  const double forward = detail::mtld_pass(tokens.begin(), tokens.end(), cfg);
  const double backward = detail::mtld_pass(tokens.rbegin(), tokens.rend(), cfg);
  return (forward + backward) / 2.0;
}

inline double mtld(std::string_view text, const MtldConfig& cfg = {}) {
  return mtld_of_tokens(mtld_tokens(text), cfg);
}

struct MetricBounds {
  double x_min = 0.0;
  double x_max = 1.0;
};

inline MetricBounds default_bounds(const std::string& metric) {
  if (metric == "mtld") return {0.0, 200.0};
  if (metric == "nat" || metric == "coh" || metric == "und") return {0.0, 1.0};
  if (metric == "ind") return {0.0, 5.0};
  if (metric == "deb") return {0.0, 3.0};
  throw ContractError("unknown metric '" + metric + "'");
}

inline double normalize(double x, const MetricBounds& b) {
  if (!(b.x_max > b.x_min)) throw ContractError("metric bounds need x_max > x_min");
  return std::clamp((x - b.x_min) / (b.x_max - b.x_min) * 100.0, 0.0, 100.0);
}

// Normalized [0, 100] columns.
struct ScoreRow {
  double mtld = 0.0;
  double nat = 0.0;
  double coh = 0.0;
  double und = 0.0;
  double ind = 0.0;
  double deb = 0.0;
};

struct CompositeScore {
  double s_uni = 0.0;
  double s_rew = 0.0;
  double s_avg = 0.0;
};

inline CompositeScore aggregate(const ScoreRow& row) {
  CompositeScore s;
  s.s_uni = (row.nat + row.coh + row.und) / 3.0;
  s.s_rew = (row.ind + row.deb) / 2.0;
  s.s_avg = (row.mtld + s.s_uni + s.s_rew) / 3.0;
  return s;
}

struct DatasetStats {
  std::size_t sample_count = 0;
  double avg_answer_tokens = 0.0;
  std::size_t max_answer_tokens = 0;
};

inline DatasetStats dataset_stats(const std::vector<std::string>& answers,
                                  const TokenCounter& counter = default_token_counter()) {
  DatasetStats s;
  s.sample_count = answers.size();
  if (answers.empty()) return s;
  std::size_t total = 0;
  for (const auto& a : answers) {
    const std::size_t n = counter.count(a);
    total += n;
    s.max_answer_tokens = std::max(s.max_answer_tokens, n);
  }
  s.avg_answer_tokens = static_cast<double>(total) / static_cast<double>(answers.size());
  return s;
}

}  // namespace graphgen
