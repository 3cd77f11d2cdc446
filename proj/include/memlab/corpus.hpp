#pragma once

#include <string>
#include <vector>

#include "memlab/rng.hpp"

namespace memlab::corpus {

enum class IdKind { kNum, kRare, kTitle };
enum class PassageKind { kRand, kFact };
enum class PermMode { kNone, kFirst, kRandomK, kDupJ };

std::string to_string(IdKind k);
std::string to_string(PassageKind k);
std::string to_string(PermMode m);
IdKind id_kind_from(const std::string& s);
PassageKind passage_kind_from(const std::string& s);
PermMode perm_mode_from(const std::string& s);

struct PassageId {
  IdKind kind = IdKind::kNum;
  std::string surface;  // "#123" | three rare tokens | a two-token name
};

struct Passage {
  PassageId id;
  std::vector<std::string> sentences;  // each ends with the "." token
  PassageKind kind = PassageKind::kRand;

  int sentence_count() const { return static_cast<int>(sentences.size()); }
};

struct QAPair {
  std::string question_id;
  std::string passage_id;
  std::string question;
  std::string answer;  // a single token from the referenced sentence
  int answer_sentence_index = 0;
};

struct PermutationSpec {
  PermMode mode = PermMode::kNone;
  int k = 4;                      // shuffle count for kRandomK
  bool replace_original = false;  // kRandomK: drop the canonical-order instance
};

struct Corpus {
  std::vector<Passage> passages;
  std::vector<int> train_indices;
  std::vector<int> val_indices;
  std::vector<QAPair> qa;

  const Passage& by_id(const std::string& surface) const;
  std::vector<QAPair> qa_for(const std::vector<int>& passage_indices) const;

  void save(const std::string& passages_path, const std::string& qa_path) const;
  static Corpus load(const std::string& passages_path, const std::string& qa_path);
};

// ---- token pools ----
// Pools use disjoint prefixes so that id/content/attr/val/entity/marker
// token sets can never collide.
std::string content_token(int i);  // "t<i>"
std::string rare_token(int i);     // "r<i>"
std::string name_token(int i);     // "n<i>"
std::string attr_token(int i);     // "a<i>"
std::string value_token(int i);    // "v<i>"
std::string entity_token(int i);   // "e<i>"
std::string marker_token(int j);   // "[<j>]"

// ---- generation ----

Passage gen_random_passage(RngState& rng, int n_sentences, int tokens_per_sentence,
                           int alphabet_size);

/// n unique ids. kNum surfaces are "#" + zero-padded indices permuted by rng;
/// kRare draws 3 tokens from the rare pool; kTitle draws 2 from the name pool.
std::vector<PassageId> gen_ids(RngState& rng, IdKind kind, int n, int pool_size);

struct FactPassage {
  Passage passage;
  std::vector<QAPair> qa;  // one per sentence
};

/// Fact passages have sentences "the <attr> of <entity> is <val> ." with
/// attrs and vals distinct within the passage and a constant entity.
FactPassage gen_fact_passage(RngState& rng, int n_facts, int entity_index, int attr_pool,
                             int value_pool);

// ---- formatting & permutation ----

/// "[0] s0 [0] [1] s1 [1] ..." with the marker duplicated at both ends of
/// each sentence.
std::string add_sentence_markers(const Passage& p);

/// Passage body in the given sentence order. Markers, when requested, keep
/// their original sentence indices wherever the sentence moves.
std::string body_text(const Passage& p, const std::vector<int>& order, bool marked);
std::string body_text(const Passage& p, bool marked = false);  // canonical order

std::vector<int> identity_order(int j);

/// Ordering t moves sentence t to the front and keeps the rest in order;
/// ordering 0 is the original.
std::vector<std::vector<int>> permute_first(const Passage& p);
/// k independent uniform shuffles (the canonical order is appended
/// separately by the training-set builder unless replaced).
std::vector<std::vector<int>> permute_random_k(const Passage& p, int k, RngState& rng);
/// J copies of the original order (the data-duplication control).
std::vector<std::vector<int>> duplicate_j(const Passage& p);

/// Write-time orderings for one passage under a permutation spec.
std::vector<std::vector<int>> write_orderings(const Passage& p, const PermutationSpec& spec,
                                              RngState& rng);

Corpus split_corpus(std::vector<Passage> passages, int train_count, int val_count, RngState& rng);

}  // namespace memlab::corpus
