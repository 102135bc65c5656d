#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "graphgen/qagen.hpp"

using namespace graphgen;
namespace fs = std::filesystem;

namespace {

ModelEndpoint synth() { return {"http://sim/v1", "synth", "", ModelRole::synthesizer, 4}; }

struct Script {
  std::vector<std::string> replies;
  std::vector<std::vector<ChatMessage>> requests;
  std::shared_ptr<Backend> backend() {
    return std::make_shared<FunctionBackend>([this](auto&, const auto& msgs, auto&) {
      requests.push_back(msgs);
      if (requests.size() > replies.size()) throw RequestError(400, "script exhausted");
      CompletionResult r;
      r.text = replies[requests.size() - 1];
      return r;
    });
  }
};

// Path a - b - c - d with losses on the first two edges.
KnowledgeGraph path_graph() {
  KnowledgeGraph g;
  g.merge({{"a", "gene", {"Gene a."}, {"c"}, {}},
           {"b", "gene", {"Gene b."}, {"c"}, {}},
           {"c", "trait", {"Trait c."}, {"c"}, {}},
           {"d", "trait", {"Trait d."}, {"c"}, {}}},
          {{"a", "b", {"a binds b"}, {"c"}, 0.2, {}},
           {"b", "c", {"b shapes c"}, {"c"}, 0.6, {}},
           {"c", "d", {"c precedes d"}, {"c"}, std::nullopt, {}}});
  return g;
}

Subgraph subgraph(const std::vector<RelationKey>& edges) {
  Subgraph sg;
  sg.seed = edges.front();
  sg.edges = edges;
  for (const auto& [x, y] : edges) {
    sg.nodes.insert(x);
    sg.nodes.insert(y);
  }
  return sg;
}

Subgraph node_only(const std::string& name) {
  Subgraph sg;
  sg.nodes = {name};
  return sg;
}

const RelationKey kAB{"a", "b"}, kBC{"b", "c"}, kCD{"c", "d"};

QARecord record(std::string q, std::string a, QAForm form, std::string id) {
  QARecord r;
  r.question = std::move(q);
  r.answer = std::move(a);
  r.form = form;
  r.subgraph_id = std::move(id);
  return r;
}

fs::path temp_file(const std::string& name) {
  static int counter = 0;
  return fs::temp_directory_path() /
         ("graphgen-qagen-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(ParseQa, Grammar) {
  auto p = parse_qa_response("Question: What is SUB1A?\nAnswer: A gene.");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->question, "What is SUB1A?");
  EXPECT_EQ(p->answer, "A gene.");

  p = parse_qa_response("  question:   Multi\nline?\n\tANSWER:  first\nsecond  \n");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->question, "Multi\nline?");
  EXPECT_EQ(p->answer, "first\nsecond");

  // "answer:" inside the question line does not count.
  p = parse_qa_response("Question: Is the answer: yes?\nAnswer: no");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->question, "Is the answer: yes?");

  EXPECT_FALSE(parse_qa_response(""));
  EXPECT_FALSE(parse_qa_response("Answer: x\n"));
  EXPECT_FALSE(parse_qa_response("Question: x"));
  EXPECT_FALSE(parse_qa_response("Question:\nAnswer: x"));
}

TEST(ParseQa, NeverThrows) {
  std::mt19937_64 rng(8);
  const std::string alphabet = "QuestionAnswer: \n\tqa\xC4\xB0\xC3\x9F";
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int j = 0; j < i % 120; ++j) s += alphabet[ch(rng)];
    EXPECT_NO_THROW(parse_qa_response(s));
  }
}

TEST(Atomic, SingleEdgeScriptedVerbatim) {
  Script script{{"Question: What binds b?\nAnswer: a does."}, {}};
  Client client(script.backend());
  const auto g = path_graph();
  const auto out = gen_atomic(g, subgraph({kAB}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.record);
  EXPECT_EQ(out.record->question, "What binds b?");
  EXPECT_EQ(out.record->answer, "a does.");
  EXPECT_EQ(out.record->form, QAForm::atomic);
  EXPECT_EQ(out.record->edges, std::vector<RelationKey>{kAB});
  EXPECT_DOUBLE_EQ(*out.record->max_loss, 0.2);
  EXPECT_NE(script.requests[0][0].content.find("a binds b"), std::string::npos);
}

TEST(Atomic, NodeOnlyUsesEntityDescription) {
  Script script{{"Question: q\nAnswer: a"}, {}};
  Client client(script.backend());
  const auto out = gen_atomic(path_graph(), node_only("c"), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.record);
  EXPECT_NE(script.requests[0][0].content.find("Trait c."), std::string::npos);
  EXPECT_FALSE(out.record->max_loss);
  EXPECT_EQ(out.record->subgraph_id, "node:c");
}

TEST(Atomic, TwoEdgesIsContractError) {
  Script script{{}, {}};
  Client client(script.backend());
  EXPECT_THROW(gen_atomic(path_graph(), subgraph({kAB, kBC}), client, synth(), {}, PromptCatalog{}), ContractError);
  const auto out = generate_for(QAForm::atomic, path_graph(), subgraph({kAB, kBC}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.skip);
  EXPECT_EQ(out.skip->stage, "shape");
}

TEST(Atomic, RepromptThenSkip) {
  Script script{{"Sure! Here you go.", "Question: q\nAnswer: a"}, {}};
  Client client(script.backend());
  auto out = gen_atomic(path_graph(), subgraph({kAB}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.record);
  ASSERT_EQ(script.requests.size(), 2u);
  EXPECT_EQ(script.requests[1].size(), 3u);

  Script bad{{"nope", "still nope"}, {}};
  Client bad_client(bad.backend());
  out = gen_atomic(path_graph(), subgraph({kAB}), bad_client, synth(), {}, PromptCatalog{});
  EXPECT_FALSE(out.record);
  ASSERT_TRUE(out.skip);
  EXPECT_EQ(out.skip->stage, "parse");
}

TEST(Atomic, LlmErrorIsSkip) {
  Script script{{}, {}};
  Client client(script.backend());
  const auto out = gen_atomic(path_graph(), subgraph({kAB}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.skip);
  EXPECT_EQ(out.skip->stage, "llm");
}

TEST(Aggregated, TwoCallsScripted) {
  Script script{{"A*", "Question: Q*"}, {}};
  Client client(script.backend());
  const auto out = gen_aggregated(path_graph(), subgraph({kAB, kBC, kCD}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.record);
  EXPECT_EQ(out.record->question, "Q*");
  EXPECT_EQ(out.record->answer, "A*");
  ASSERT_EQ(script.requests.size(), 2u);
  for (const auto* d : {"a binds b", "b shapes c", "c precedes d"}) {
    EXPECT_NE(script.requests[0][0].content.find(d), std::string::npos) << d;
  }
  EXPECT_NE(script.requests[1][0].content.find("A*"), std::string::npos);
  // Loss stats skip the unscored edge.
  EXPECT_DOUBLE_EQ(*out.record->max_loss, 0.6);
  EXPECT_DOUBLE_EQ(*out.record->mean_loss, 0.4);
}

TEST(Aggregated, EmptyAnswerSkipsAtAnswerStage) {
  Script script{{"   "}, {}};
  Client client(script.backend());
  const auto out = gen_aggregated(path_graph(), subgraph({kAB}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.skip);
  EXPECT_EQ(out.skip->stage, "answer");
  EXPECT_EQ(script.requests.size(), 1u);
}

TEST(Aggregated, QuestionFailureSkipsAtQuestionStage) {
  Script script{{"A*"}, {}};
  Client client(script.backend());
  const auto out = gen_aggregated(path_graph(), subgraph({kAB}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.skip);
  EXPECT_EQ(out.skip->stage, "question");
  EXPECT_THROW(gen_aggregated(path_graph(), node_only("a"), client, synth(), {}, PromptCatalog{}), ContractError);
}

TEST(Multihop, PathReferencesBothEdges) {
  Script script{{"Question: How does a reach c?\nAnswer: Through b."}, {}};
  Client client(script.backend());
  const auto out = gen_multihop(path_graph(), subgraph({kAB, kBC}), client, synth(), {}, PromptCatalog{});
  ASSERT_TRUE(out.record);
  EXPECT_EQ(out.record->edges, (std::vector<RelationKey>{kAB, kBC}));
  EXPECT_EQ(out.record->form, QAForm::multi_hop);
  EXPECT_DOUBLE_EQ(*out.record->max_loss, 0.6);
  EXPECT_DOUBLE_EQ(*out.record->mean_loss, 0.4);
  const auto& prompt = script.requests[0][0].content;
  for (const auto* s : {"a binds b", "b shapes c", "Gene a.", "Trait c."}) {
    EXPECT_NE(prompt.find(s), std::string::npos) << s;
  }
}

TEST(Multihop, OneEdgeIsContractError) {
  Script script{{}, {}};
  Client client(script.backend());
  EXPECT_THROW(gen_multihop(path_graph(), subgraph({kAB}), client, synth(), {}, PromptCatalog{}), ContractError);
}

TEST(Dataset, AlpacaSchema) {
  const auto line = dataset_line(record("Q", "A", QAForm::atomic, "x"), DatasetFormat::alpaca);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.size(), 3u);
  EXPECT_EQ(j["instruction"], "Q");
  EXPECT_EQ(j["input"], "");
  EXPECT_EQ(j["output"], "A");
}

TEST(Dataset, ShareGptRoundTrip) {
  const auto r = record("Wie \"heißt\" das?\n", "Reis.\tß", QAForm::aggregated, "x");
  const auto qa = parse_dataset_line(dataset_line(r, DatasetFormat::sharegpt));
  EXPECT_EQ(qa.question, r.question);
  EXPECT_EQ(qa.answer, r.answer);
  const auto j = nlohmann::json::parse(dataset_line(r, DatasetFormat::sharegpt));
  EXPECT_EQ(j["conversations"][0]["from"], "human");
  EXPECT_EQ(j["conversations"][1]["from"], "gpt");
}

TEST(Dataset, OrderedAndDeterministic) {
  std::vector<QARecord> records = {record("q3", "a", QAForm::multi_hop, "a -- b"),
                                   record("q2", "a", QAForm::atomic, "z -- y"),
                                   record("q1", "a", QAForm::atomic, "b -- c")};
  const auto p1 = temp_file("one.jsonl"), p2 = temp_file("two.jsonl");
  write_dataset(records, p1, DatasetFormat::alpaca);
  std::reverse(records.begin(), records.end());
  write_dataset(records, p2, DatasetFormat::alpaca);
  EXPECT_EQ(slurp(p1), slurp(p2));
  std::istringstream lines(slurp(p1));
  std::vector<std::string> questions;
  for (std::string line; std::getline(lines, line);) questions.push_back(parse_dataset_line(line).question);
  EXPECT_EQ(questions, (std::vector<std::string>{"q1", "q2", "q3"}));
  fs::remove(p1);
  fs::remove(p2);
  EXPECT_THROW(write_dataset({}, p1, DatasetFormat::alpaca), ContractError);
  EXPECT_THROW(write_dataset(records, "/proc/graphgen/none.jsonl", DatasetFormat::alpaca), Error);
}

TEST(Dataset, RecordJsonRoundTrip) {
  QARecord r = record("q", "a", QAForm::multi_hop, "a -- b");
  r.edges = {kAB, kBC};
  r.max_loss = 0.6;
  r.mean_loss = 0.4;
  EXPECT_EQ(qa_record_from_json(to_json(r)), r);
  r.max_loss.reset();
  r.mean_loss.reset();
  EXPECT_EQ(qa_record_from_json(to_json(r)), r);
}
