#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memlab/corpus.hpp"
#include "memlab/eval.hpp"
#include "memlab/model.hpp"
#include "memlab/prompts.hpp"
#include "memlab/task.hpp"

namespace memlab::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with bias correction and decoupled weight decay on parameters
/// flagged for decay (non-LN, non-bias). Gradients are zeroed after each
/// step; a NaN gradient aborts naming the parameter.
class AdamOptimizer {
 public:
  AdamOptimizer(const std::vector<Parameter>& params, AdamConfig cfg);

  void step(std::vector<Parameter>& params, double lr_t);
  long step_count() const { return t_; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

enum class ScheduleKind { kLinearWarmup, kConstant };
std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from(const std::string& s);

struct Schedule {
  ScheduleKind kind = ScheduleKind::kLinearWarmup;
  double base_lr = 1e-3;
  double warmup_ratio = 0.05;  // warmup steps = ceil(ratio * total)
  long total_steps = 0;
};

/// Linear 0 -> base_lr over the warmup steps, then linear base_lr -> 0 at
/// total_steps; or a constant base_lr.
double lr_at(const Schedule& s, long step);

enum class Strategy { kMixed, kContinual };
std::string to_string(Strategy s);
Strategy strategy_from(const std::string& s);

// ---- training-set construction ----

struct TrainingSetSpec {
  Task task = Task::kFullRecitation;
  corpus::PermutationSpec perm;
  prompts::IdMode id_mode = prompts::IdMode::kGolden;
  bool recite = false;
  prompts::MaskPolicy read_mask = prompts::MaskPolicy::kTargetOnly;
};

/// The mixed-training composition: write instances of every passage
/// (training writes expanded per the permutation spec), read instances of
/// the training passages, and the withheld validation read set.
struct BuiltSets {
  std::vector<prompts::Instance> writes;
  std::vector<prompts::Instance> reads;
  std::vector<prompts::Instance> eval;
};

BuiltSets build_training_set(const corpus::Corpus& c, const TrainingSetSpec& spec, RngState& rng);
std::vector<prompts::Instance> merged_training_set(const BuiltSets& sets);

// ---- the training loop ----

struct Phase {
  std::vector<prompts::Instance> instances;
  int epochs = 1;
  double lr = 1e-3;
  bool eval = true;  // epoch-end evaluation on the withheld read set
};

struct TrainOptions {
  int batch_size = 16;
  int eval_every = 10;  // evaluate every Nth epoch (the final epoch always)
  ScheduleKind schedule = ScheduleKind::kLinearWarmup;
  double warmup_ratio = 0.05;
  AdamConfig adam;  // lr comes from the phase
  int max_new_tokens = 0;
  std::uint64_t seed = 1;
  Task task = Task::kFullRecitation;
  int threads = 1;
  bool verbose = false;
};

struct EpochStat {
  int phase = 0;
  int epoch = 0;  // global epoch index
  double mean_loss = 0.0;
  bool evaluated = false;
  eval::MetricsReport metrics;
};

struct TrainHistory {
  std::vector<EpochStat> epochs;
  int best_epoch = -1;  // maximizes validation EM, ties -> earliest
  double best_em = -1.0;

  std::string to_text() const;
  void save(const std::string& path) const;
};

struct TrainResult {
  TrainHistory history;
  eval::MetricsReport best_metrics;  // metrics at the best epoch
};

/// Runs the phases in order with a fresh optimizer and schedule per phase.
/// The model is left at the best-epoch parameters (final parameters when
/// nothing was evaluated). Aborts on divergence (NaN loss).
TrainResult run_plan(model::TransformerLM& m, const std::vector<Phase>& phases,
                     const std::vector<prompts::Instance>& eval_set, const tok::Vocab& vocab,
                     const TrainOptions& options);

}  // namespace memlab::train
