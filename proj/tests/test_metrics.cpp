#include <gtest/gtest.h>

#include <random>

#include "graphgen/metrics.hpp"
#include "support/oracles.hpp"
#include "support/reference_rows.hpp"

using namespace graphgen;

namespace {

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t length, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < length; ++i) out.push_back("w" + std::to_string(pick(rng)));
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

}  // namespace

TEST(Mtld, EmptyIsZero) {
  EXPECT_EQ(mtld(""), 0.0);
  EXPECT_EQ(mtld("  ,. !"), 0.0);
}

TEST(Mtld, RepeatedTokenMatchesReference) {
  std::vector<std::string> same(100, "rice");
  // Every second token closes a factor: 50 factors over 100 tokens.
  EXPECT_DOUBLE_EQ(oracle::mtld(same), 2.0);
  EXPECT_DOUBLE_EQ(mtld(join(same)), 2.0);
}

TEST(Mtld, AllDistinctHitsCap) {
  std::vector<std::string> distinct;
  for (int i = 0; i < 100; ++i) distinct.push_back("t" + std::to_string(i));
  EXPECT_DOUBLE_EQ(mtld(join(distinct)), 200.0);
  EXPECT_DOUBLE_EQ(normalize(mtld(join(distinct)), default_bounds("mtld")), 100.0);
}

TEST(Mtld, TokenizationFoldsCaseAndDropsPunctuation) {
  EXPECT_EQ(mtld_tokens("Rice, RICE rice! Paddy."), (std::vector<std::string>{"rice", "rice", "rice", "paddy"}));
  EXPECT_DOUBLE_EQ(mtld("Rice, RICE rice! Paddy."), mtld("rice rice rice paddy"));
}

TEST(Mtld, AgreesWithReferenceOnRandomSequences) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    std::uniform_int_distribution<std::size_t> len(1, 400);
    std::uniform_int_distribution<std::size_t> vocab(1, 80);
    const auto tokens = random_tokens(rng, len(rng), vocab(rng));
    EXPECT_NEAR(mtld_of_tokens(tokens), oracle::mtld(tokens), 1e-9);
    EXPECT_NEAR(mtld(join(tokens)), oracle::mtld(tokens), 1e-9);
  }
}

TEST(Mtld, ReversalSymmetry) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    auto tokens = random_tokens(rng, 50 + i * 3, 5 + i);
    const double forward = mtld_of_tokens(tokens);
    std::reverse(tokens.begin(), tokens.end());
    EXPECT_DOUBLE_EQ(forward, mtld_of_tokens(tokens));
  }
}

TEST(Mtld, RepetitionScoresBelowDistinct) {
  for (std::size_t n : {10u, 50u, 200u}) {
    std::vector<std::string> distinct, repeated;
    for (std::size_t i = 0; i < n; ++i) {
      distinct.push_back("d" + std::to_string(i));
      repeated.push_back("r" + std::to_string(i % 3));
    }
    EXPECT_LT(mtld_of_tokens(repeated), mtld_of_tokens(distinct));
  }
}

TEST(Mtld, NormalizedNeverExceedsHundred) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto tokens = random_tokens(rng, 1 + i, 1 + i * 2);
    const double s = normalize(mtld_of_tokens(tokens), default_bounds("mtld"));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 100.0);
  }
}

TEST(Normalize, Endpoints) {
  const MetricBounds b{0, 200};
  EXPECT_EQ(normalize(0, b), 0.0);
  EXPECT_EQ(normalize(200, b), 100.0);
  EXPECT_EQ(normalize(150, b), 75.0);
  EXPECT_EQ(normalize(-5, b), 0.0);
  EXPECT_EQ(normalize(500, b), 100.0);
  EXPECT_THROW(normalize(1, {1, 1}), ContractError);
}

TEST(Normalize, MonotoneAndIdempotent) {
  const MetricBounds b{2, 7};
  double prev = -1;
  for (double x = -3; x <= 12; x += 0.25) {
    const double s = normalize(x, b);
    EXPECT_GE(s, prev);
    prev = s;
    EXPECT_EQ(normalize(s, {0, 100}), s);
  }
}

TEST(Normalize, DefaultBounds) {
  EXPECT_EQ(default_bounds("mtld").x_max, 200);
  EXPECT_EQ(default_bounds("coh").x_max, 1);
  EXPECT_EQ(default_bounds("ind").x_max, 5);
  EXPECT_EQ(default_bounds("deb").x_max, 3);
  EXPECT_THROW(default_bounds("rouge"), ContractError);
}

TEST(Aggregate, AllZero) {
  const auto s = aggregate({});
  EXPECT_EQ(s.s_uni, 0);
  EXPECT_EQ(s.s_rew, 0);
  EXPECT_EQ(s.s_avg, 0);
}

TEST(Aggregate, Structure) {
  const auto s = aggregate({30, 60, 90, 30, 40, 80});
  EXPECT_DOUBLE_EQ(s.s_uni, 60);
  EXPECT_DOUBLE_EQ(s.s_rew, 60);
  EXPECT_DOUBLE_EQ(s.s_avg, 50);
}

TEST(Aggregate, ComparisonTableRows) {
  for (const auto& row : reference::comparison_rows()) {
    EXPECT_NEAR(aggregate(row.scores).s_avg, row.printed_avg, 0.05) << row.method;
  }
}

TEST(Aggregate, AblationTableRows) {
  for (const auto& row : reference::ablation_rows()) {
    EXPECT_NEAR(aggregate(row.scores).s_avg, row.printed_avg, 0.05) << row.method;
  }
}

TEST(DatasetStats, Basics) {
  const auto empty = dataset_stats({});
  EXPECT_EQ(empty.sample_count, 0u);
  EXPECT_EQ(empty.avg_answer_tokens, 0.0);
  EXPECT_EQ(empty.max_answer_tokens, 0u);
  const auto s = dataset_stats({"a b c d e f g h i j", "a b c d e f g h i j k l m n o p q r s t"});
  EXPECT_EQ(s.sample_count, 2u);
  EXPECT_DOUBLE_EQ(s.avg_answer_tokens, 15.0);
  EXPECT_EQ(s.max_answer_tokens, 20u);
}

TEST(DatasetStats, MatchesIndependentRecount) {
  std::mt19937_64 rng(9);
  const std::string alphabet = "abc xyz,.;!?-'() \n\t";
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> answers;
    std::uniform_int_distribution<int> count(0, 20), len(0, 120);
    std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      std::string a;
      const int l = len(rng);
      for (int j = 0; j < l; ++j) a += alphabet[ch(rng)];
      answers.push_back(a);
    }
    std::size_t total = 0, most = 0;
    for (const auto& a : answers) {
      const auto c = oracle::ascii_token_count(a);
      total += c;
      most = std::max(most, c);
    }
    const auto s = dataset_stats(answers);
    EXPECT_EQ(s.sample_count, answers.size());
    EXPECT_EQ(s.max_answer_tokens, most);
    EXPECT_DOUBLE_EQ(s.avg_answer_tokens, answers.empty() ? 0.0 : static_cast<double>(total) / answers.size());
  }
}
