#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memlab/corpus.hpp"
#include "memlab/eval.hpp"
#include "memlab/model.hpp"
#include "memlab/task.hpp"
#include "memlab/train.hpp"

namespace memlab::experiments {

struct ExperimentConfig {
  Task task = Task::kFullRecitation;
  std::uint64_t seed = 1;
  std::string label;  // row tag in comparison reports; defaulted from the setup

  // corpus geometry
  corpus::IdKind id_kind = corpus::IdKind::kNum;
  int t_count = 64;
  int v_count = 16;
  int n_sentences = 4;  // facts per passage for QA corpora
  int tokens_per_sentence = 5;
  int alphabet_size = 64;
  int rare_pool = 64;
  int name_pool = 48;
  int attr_pool = 64;
  int value_pool = 64;

  // task axes
  prompts::IdMode id_mode = prompts::IdMode::kGolden;
  corpus::PermutationSpec perm;
  bool recite = false;
  train::Strategy strategy = train::Strategy::kMixed;
  prompts::MaskPolicy read_mask = prompts::MaskPolicy::kTargetOnly;

  // model (vocab_size 0 = sized from the generated vocabulary)
  model::ModelConfig model;

  // training
  double lr = 1e-3;
  int epochs = 200;
  int batch_size = 16;
  double warmup_ratio = 0.05;
  train::ScheduleKind schedule = train::ScheduleKind::kLinearWarmup;
  train::AdamConfig adam;
  int eval_every = 10;
  int max_new_tokens = 0;
  int threads = 1;

  void validate() const;
  std::string default_label() const;
};

/// Reference defaults per task (mirrored by the checked-in config files).
ExperimentConfig default_config(Task task);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

struct RunRecord {
  ExperimentConfig cfg;
  std::string run_dir;
  train::TrainHistory history;
  eval::MetricsReport metrics;
};

/// Deterministic corpus generation from (config, seed).
corpus::Corpus generate_corpus(const ExperimentConfig& cfg);

/// Corpus + vocab + instance files for a run directory (the `gen` step).
void generate_artifacts(const ExperimentConfig& cfg, const std::string& dir);

/// Full pipeline: generate, train, evaluate, persist. out_dir empty picks
/// runs/<task>/<timestamp>-<seed>.
RunRecord run(const ExperimentConfig& cfg, const std::string& out_dir = "",
              bool verbose = false);

/// Train from a directory prepared by generate_artifacts.
RunRecord train_from_dir(const std::string& dir, bool verbose = false);

/// Evaluate a checkpoint against a directory's withheld read set.
eval::MetricsReport eval_from_dir(const std::string& dir, const std::string& checkpoint_path = "");

/// One run per T value at fixed model size; emits a (T, EM, BLEU) table for
/// the capacity plot.
std::vector<RunRecord> sweep_capacity(const ExperimentConfig& base, const std::vector<int>& t_values,
                                      const std::string& out_root, bool verbose = false);
std::string sweep_table(const std::vector<RunRecord>& records);

/// Aligned comparison table over runs of one task; rows are tagged with the
/// run labels. Columns include Recite-BLEU iff any record recites.
std::string report_table(const std::vector<RunRecord>& records);
/// Machine-readable sibling (TSV).
std::string report_tsv(const std::vector<RunRecord>& records);

/// Reload the pieces of a persisted run needed for reporting.
RunRecord load_run_record(const std::string& run_dir);

}  // namespace memlab::experiments
