#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memlab/model.hpp"
#include "memlab/prompts.hpp"
#include "memlab/task.hpp"
#include "memlab/tokenizer.hpp"

namespace memlab::eval {

/// SQuAD-style answer normalization: lowercase, strip punctuation
/// characters, drop the articles {a, an, the}, collapse whitespace.
/// Idempotent.
std::string normalize_answer(const std::string& s);

/// Whitespace-normalized exact string equality. QA callers normalize with
/// normalize_answer first; recitation tasks compare verbatim.
int exact_match(const std::string& pred, const std::string& gold);

/// Bag-of-tokens F1 over whitespace tokens (multiset intersection).
double token_f1(const std::string& pred, const std::string& gold);

/// Sentence-level BLEU-4 in [0, 100]: uniform weights, brevity penalty,
/// add-one smoothing on higher-order n-grams with zero matches. Zero
/// unigram overlap or an empty prediction scores 0.
double bleu(const std::string& pred, const std::string& gold);

/// Split a recite-style output into (recitation, answer) on the task's
/// answer delimiter (last occurrence). With no delimiter present the whole
/// output is the answer and the recitation is empty.
std::pair<std::string, std::string> parse_recited_answer(const std::string& output, Task task);

struct EvalResult {
  prompts::InstanceMeta meta;
  std::string gold;
  std::string pred;
  double em = 0.0;
  double bleu = 0.0;
  double f1 = 0.0;
  bool has_recitation = false;
  double recite_bleu = 0.0;
};

struct IndexBucket {
  long count = 0;
  double em_sum = 0.0;

  double accuracy() const { return count ? em_sum / static_cast<double>(count) : 0.0; }
};

struct MetricsReport {
  long total = 0;
  double mean_em = 0.0;
  double mean_bleu = 0.0;
  double mean_f1 = 0.0;
  bool has_recite = false;
  double recite_bleu = 0.0;
  /// EM by sentence index; index -1 collects instances without one. Bucket
  /// counts sum to total.
  std::map<int, IndexBucket> by_index;

  std::string to_text() const;
  static MetricsReport from_text(const std::string& text);
};

/// Greedy-decode every instance and score it under the task's metric
/// policy. max_new <= 0 sizes the budget from the longest gold target.
/// Generation is striped across threads; per-instance results are
/// aggregated in instance order, so the report is identical for any
/// thread count.
MetricsReport evaluate_readset(const model::TransformerLM& m,
                               std::span<const prompts::Instance> instances, Task task,
                               const tok::Vocab& vocab, int max_new = 0,
                               std::vector<EvalResult>* dump = nullptr, int threads = 1);

/// Score one already-generated prediction (exposed for tests and report
/// recomputation).
EvalResult score_prediction(const std::string& pred, const prompts::Instance& inst, Task task);

void save_results(const std::vector<EvalResult>& results, const std::string& path);

}  // namespace memlab::eval
