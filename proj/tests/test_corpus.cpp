#include <doctest.h>

#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "memlab/corpus.hpp"
#include "memlab/rng.hpp"
#include "memlab/tokenizer.hpp"

using namespace memlab;
using corpus::Passage;

TEST_SUITE_BEGIN("corpus");

TEST_CASE("gen_random_passage minimal case") {
  RngState rng(1);
  Passage p = corpus::gen_random_passage(rng, 1, 1, 1);
  REQUIRE(p.sentence_count() == 1);
  CHECK(p.sentences[0] == "t0 .");
}

TEST_CASE("gen_random_passage is deterministic under the rng") {
  RngState a(42), b(42);
  Passage pa = corpus::gen_random_passage(a, 4, 5, 64);
  Passage pb = corpus::gen_random_passage(b, 4, 5, 64);
  CHECK(pa.sentences == pb.sentences);
}

TEST_CASE("capacity-sweep geometry: one sentence of 25 tokens") {
  RngState rng(7);
  Passage p = corpus::gen_random_passage(rng, 1, 25, 64);
  REQUIRE(p.sentence_count() == 1);
  CHECK(tok::split_ws(p.sentences[0]).size() == 26);  // 25 content tokens + "."
}

TEST_CASE("gen_ids produces unique surfaces of the right shape") {
  RngState rng(5);
  auto nums = corpus::gen_ids(rng, corpus::IdKind::kNum, 3, 0);
  std::set<std::string> seen;
  for (const auto& id : nums) {
    CHECK(id.surface[0] == '#');
    CHECK(id.surface.size() == 4);  // zero-padded to 3 digits
    seen.insert(id.surface);
  }
  CHECK(seen.size() == 3);

  auto rares = corpus::gen_ids(rng, corpus::IdKind::kRare, 4, 32);
  for (const auto& id : rares) CHECK(tok::split_ws(id.surface).size() == 3);

  auto titles = corpus::gen_ids(rng, corpus::IdKind::kTitle, 2, 16);
  CHECK(titles[0].surface != titles[1].surface);
  for (const auto& id : titles) CHECK(tok::split_ws(id.surface).size() == 2);
}

TEST_CASE("gen_ids reports pool exhaustion") {
  RngState rng(5);
  // 1 name token -> only one distinct 2-token title exists.
  CHECK_THROWS_WITH_AS(corpus::gen_ids(rng, corpus::IdKind::kTitle, 3, 1),
                       doctest::Contains("exhausted"), std::runtime_error);
}

TEST_CASE("rare id tokens are disjoint from passage content tokens") {
  RngState rng(11);
  auto ids = corpus::gen_ids(rng, corpus::IdKind::kRare, 8, 32);
  std::set<std::string> id_tokens;
  for (const auto& id : ids) {
    for (const std::string& t : tok::split_ws(id.surface)) id_tokens.insert(t);
  }
  for (int i = 0; i < 8; ++i) {
    RngState prng = rng.split(static_cast<std::uint64_t>(i));
    Passage p = corpus::gen_random_passage(prng, 3, 5, 64);
    for (const std::string& s : p.sentences) {
      for (const std::string& t : tok::split_ws(s)) {
        if (t == ".") continue;
        CHECK(id_tokens.count(t) == 0);
      }
    }
  }
}

TEST_CASE("token pools are pairwise disjoint by construction") {
  std::set<std::string> all;
  int inserted = 0;
  for (int i = 0; i < 16; ++i) {
    all.insert(corpus::content_token(i));
    all.insert(corpus::rare_token(i));
    all.insert(corpus::name_token(i));
    all.insert(corpus::attr_token(i));
    all.insert(corpus::value_token(i));
    all.insert(corpus::entity_token(i));
    all.insert(corpus::marker_token(i));
    inserted += 7;
  }
  CHECK(static_cast<int>(all.size()) == inserted);
}

TEST_CASE("add_sentence_markers duplicates the marker at both boundaries") {
  Passage p;
  p.sentences = {"a ."};
  CHECK(corpus::add_sentence_markers(p) == "[0] a . [0]");
  p.sentences = {"a .", "b c ."};
  CHECK(corpus::add_sentence_markers(p) == "[0] a . [0] [1] b c . [1]");
}

TEST_CASE("marker round trip recovers each sentence") {
  RngState rng(13);
  Passage p = corpus::gen_random_passage(rng, 5, 4, 32);
  const std::string marked = corpus::add_sentence_markers(p);
  for (int j = 0; j < p.sentence_count(); ++j) {
    const std::string m = corpus::marker_token(j);
    const std::size_t first = marked.find(m);
    const std::size_t last = marked.rfind(m);
    REQUIRE(first != std::string::npos);
    REQUIRE(last != first);
    const std::string inner =
        tok::normalize_ws(marked.substr(first + m.size(), last - first - m.size()));
    CHECK(inner == p.sentences[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("permute_first is forced by its definition") {
  Passage p;
  p.sentences = {"A .", "B .", "C ."};
  auto orderings = corpus::permute_first(p);
  REQUIRE(orderings.size() == 3);
  CHECK(orderings[0] == std::vector<int>{0, 1, 2});
  CHECK(orderings[1] == std::vector<int>{1, 0, 2});
  CHECK(orderings[2] == std::vector<int>{2, 0, 1});
  // every sentence appears first exactly once
  std::set<int> fronts;
  for (const auto& o : orderings) fronts.insert(o[0]);
  CHECK(fronts.size() == 3);

  Passage single;
  single.sentences = {"A ."};
  CHECK(corpus::permute_first(single).size() == 1);
}

TEST_CASE("markers keep their original indices under permutation") {
  Passage p;
  p.sentences = {"A .", "B .", "C ."};
  const std::vector<int> order{2, 0, 1};
  CHECK(corpus::body_text(p, order, true) == "[2] C . [2] [0] A . [0] [1] B . [1]");
  CHECK(corpus::body_text(p, order, false) == "C . A . B .");
}

TEST_CASE("permute_random_k is uniform over orderings (chi-square sanity)") {
  Passage p;
  p.sentences = {"A .", "B .", "C ."};
  RngState rng(2025);
  std::map<std::vector<int>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n / 4; ++i) {
    for (auto& o : corpus::permute_random_k(p, 4, rng)) counts[o]++;
  }
  CHECK(counts.size() == 6);
  for (const auto& [o, c] : counts) {
    const double freq = static_cast<double>(c) / n;
    CHECK(freq == doctest::Approx(1.0 / 6.0).epsilon(0.12));  // 1/6 +- 0.02
  }
}

TEST_CASE("permute_random_k on a single sentence repeats the identity") {
  Passage p;
  p.sentences = {"A ."};
  RngState rng(3);
  auto orderings = corpus::permute_random_k(p, 5, rng);
  REQUIRE(orderings.size() == 5);
  for (const auto& o : orderings) CHECK(o == std::vector<int>{0});
}

TEST_CASE("duplicate_j emits J identical orderings") {
  Passage p;
  p.sentences = {"A .", "B .", "C .", "D ."};
  auto orderings = corpus::duplicate_j(p);
  REQUIRE(orderings.size() == 4);
  for (const auto& o : orderings) CHECK(o == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("write_orderings honors the spec modes") {
  Passage p;
  p.sentences = {"A .", "B .", "C ."};
  RngState rng(4);
  corpus::PermutationSpec spec;
  CHECK(corpus::write_orderings(p, spec, rng).size() == 1);
  spec.mode = corpus::PermMode::kFirst;
  CHECK(corpus::write_orderings(p, spec, rng).size() == 3);
  spec.mode = corpus::PermMode::kDupJ;
  CHECK(corpus::write_orderings(p, spec, rng).size() == 3);
  spec.mode = corpus::PermMode::kRandomK;
  spec.k = 4;
  CHECK(corpus::write_orderings(p, spec, rng).size() == 5);  // original + k shuffles
  spec.replace_original = true;
  CHECK(corpus::write_orderings(p, spec, rng).size() == 4);
}

TEST_CASE("gen_fact_passage shape, distinct attrs, and answer uniqueness") {
  RngState rng(21);
  corpus::FactPassage fp = corpus::gen_fact_passage(rng, 4, 3, 16, 16);
  REQUIRE(fp.passage.sentence_count() == 4);
  REQUIRE(fp.qa.size() == 4);
  std::set<std::string> attrs;
  for (int f = 0; f < 4; ++f) {
    const auto tokens = tok::split_ws(fp.passage.sentences[static_cast<std::size_t>(f)]);
    REQUIRE(tokens.size() == 7);  // the <attr> of <entity> is <val> .
    CHECK(tokens[0] == "the");
    CHECK(tokens[2] == "of");
    CHECK(tokens[3] == corpus::entity_token(3));
    CHECK(tokens[4] == "is");
    CHECK(tokens[6] == ".");
    attrs.insert(tokens[1]);
    CHECK(fp.qa[static_cast<std::size_t>(f)].answer == tokens[5]);
    CHECK(fp.qa[static_cast<std::size_t>(f)].answer_sentence_index == f);
  }
  CHECK(attrs.size() == 4);
  // each answer token occurs in exactly one sentence of its passage
  for (const auto& qa : fp.qa) {
    int hits = 0;
    for (const std::string& s : fp.passage.sentences) {
      for (const std::string& t : tok::split_ws(s)) {
        if (t == qa.answer) ++hits;
      }
    }
    CHECK(hits == 1);
  }
}

TEST_CASE("grounded-answer scan oracle agrees with stored QA pairs") {
  // independent oracle: find the sentence containing the question's attr
  // token and return its value token.
  RngState rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    corpus::FactPassage fp = corpus::gen_fact_passage(rng, 4, trial, 32, 32);
    for (const auto& qa : fp.qa) {
      const auto qtokens = tok::split_ws(qa.question);
      const std::string attr = qtokens[3];  // what is the <attr> of <entity> ?
      std::string oracle_answer;
      int oracle_index = -1;
      for (int s = 0; s < fp.passage.sentence_count(); ++s) {
        const auto st = tok::split_ws(fp.passage.sentences[static_cast<std::size_t>(s)]);
        if (st[1] == attr) {
          oracle_answer = st[5];
          oracle_index = s;
        }
      }
      CHECK(oracle_answer == qa.answer);
      CHECK(oracle_index == qa.answer_sentence_index);
    }
  }
}

TEST_CASE("split_corpus covers the paper defaults and edge cases") {
  RngState rng(8);
  std::vector<Passage> passages;
  for (int i = 0; i < 440; ++i) {
    RngState prng = rng.split(static_cast<std::uint64_t>(i));
    Passage p = corpus::gen_random_passage(prng, 1, 2, 8);
    p.id = {corpus::IdKind::kNum, "#" + std::to_string(i)};
    passages.push_back(std::move(p));
  }
  RngState srng(99);
  corpus::Corpus c = corpus::split_corpus(passages, 400, 40, srng);
  CHECK(c.train_indices.size() == 400);
  CHECK(c.val_indices.size() == 40);
  std::set<int> all(c.train_indices.begin(), c.train_indices.end());
  all.insert(c.val_indices.begin(), c.val_indices.end());
  CHECK(all.size() == 440);

  RngState srng2(99);
  corpus::Corpus c2 = corpus::split_corpus(passages, 400, 40, srng2);
  CHECK(c2.train_indices == c.train_indices);

  RngState srng3(1);
  corpus::Corpus all_val = corpus::split_corpus(passages, 0, 440, srng3);
  CHECK(all_val.train_indices.empty());
  CHECK(all_val.val_indices.size() == 440);

  RngState srng4(1);
  CHECK_THROWS_AS(corpus::split_corpus(passages, 10, 10, srng4), std::invalid_argument);
}

TEST_CASE("corpus files round-trip passages and qa") {
  RngState rng(15);
  std::vector<Passage> passages;
  for (int i = 0; i < 4; ++i) {
    RngState prng = rng.split(static_cast<std::uint64_t>(i));
    corpus::FactPassage fp = corpus::gen_fact_passage(prng, 2, i, 8, 8);
    fp.passage.id = {corpus::IdKind::kNum, "#00" + std::to_string(i)};
    passages.push_back(fp.passage);
  }
  RngState srng(2);
  corpus::Corpus c = corpus::split_corpus(passages, 3, 1, srng);
  corpus::QAPair qa;
  qa.question_id = "q0";
  qa.passage_id = "#000";
  qa.question = "what is the a0 of e0 ?";
  qa.answer = "v1";
  qa.answer_sentence_index = 1;
  c.qa.push_back(qa);

  c.save("corpus_tmp.tsv", "qa_tmp.tsv");
  corpus::Corpus loaded = corpus::Corpus::load("corpus_tmp.tsv", "qa_tmp.tsv");
  REQUIRE(loaded.passages.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(loaded.passages[i].id.surface == c.passages[i].id.surface);
    CHECK(loaded.passages[i].sentences == c.passages[i].sentences);
  }
  REQUIRE(loaded.qa.size() == 1);
  CHECK(loaded.qa[0].answer == "v1");
  CHECK(loaded.qa[0].answer_sentence_index == 1);
  std::remove("corpus_tmp.tsv");
  std::remove("qa_tmp.tsv");
}

TEST_SUITE_END();
