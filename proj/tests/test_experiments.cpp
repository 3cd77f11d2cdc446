#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/experiments.hpp"

using namespace memlab;
using experiments::ExperimentConfig;

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig tiny_run_config() {
  ExperimentConfig cfg = experiments::default_config(Task::kFullRecitation);
  cfg.t_count = 4;
  cfg.v_count = 2;
  cfg.n_sentences = 1;
  cfg.tokens_per_sentence = 3;
  cfg.alphabet_size = 16;
  cfg.model.d_model = 16;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.model.d_ff = 32;
  cfg.model.max_seq_len = 32;
  cfg.epochs = 3;
  cfg.eval_every = 3;
  cfg.batch_size = 4;
  cfg.seed = 11;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("default configs validate for every task") {
  for (Task t : {Task::kFullRecitation, Task::kCapacitySweep, Task::kSelectiveRecitation,
                 Task::kPositionalRecitation, Task::kAdjacentRecitation, Task::kGroundedQa,
                 Task::kOpenQa, Task::kClosedBook, Task::kOpenBook}) {
    ExperimentConfig cfg = experiments::default_config(t);
    CHECK_NOTHROW(cfg.validate());
    CHECK(!cfg.label.empty());
  }
}

TEST_CASE("config files round-trip") {
  TempDir dir("memlab_cfg_test");
  ExperimentConfig cfg = experiments::default_config(Task::kSelectiveRecitation);
  cfg.seed = 99;
  cfg.recite = true;
  cfg.perm.mode = corpus::PermMode::kRandomK;
  cfg.perm.k = 7;
  cfg.lr = 0.00125;
  const std::string path = (dir.path / "config").string();
  experiments::save_config(cfg, path);
  ExperimentConfig back = experiments::load_config(path);
  CHECK(back.task == cfg.task);
  CHECK(back.seed == 99);
  CHECK(back.recite);
  CHECK(back.perm.mode == corpus::PermMode::kRandomK);
  CHECK(back.perm.k == 7);
  CHECK(back.lr == cfg.lr);
  CHECK(back.label == cfg.label);
}

TEST_CASE("config validation enforces task constraints") {
  ExperimentConfig cfg = experiments::default_config(Task::kFullRecitation);
  cfg.strategy = train::Strategy::kContinual;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = experiments::default_config(Task::kSelectiveRecitation);
  cfg.n_sentences = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = experiments::default_config(Task::kFullRecitation);
  cfg.recite = true;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("corpus generation is deterministic from config and seed") {
  ExperimentConfig cfg = tiny_run_config();
  TempDir dir("memlab_corpus_det");
  corpus::Corpus c1 = experiments::generate_corpus(cfg);
  corpus::Corpus c2 = experiments::generate_corpus(cfg);
  c1.save((dir.path / "a.tsv").string(), (dir.path / "aq.tsv").string());
  c2.save((dir.path / "b.tsv").string(), (dir.path / "bq.tsv").string());
  CHECK(slurp((dir.path / "a.tsv").string()) == slurp((dir.path / "b.tsv").string()));

  cfg.seed = 12;
  corpus::Corpus c3 = experiments::generate_corpus(cfg);
  c3.save((dir.path / "c.tsv").string(), (dir.path / "cq.tsv").string());
  CHECK(slurp((dir.path / "a.tsv").string()) != slurp((dir.path / "c.tsv").string()));
}

TEST_CASE("a tiny run persists a self-contained run directory") {
  TempDir dir("memlab_tiny_run");
  ExperimentConfig cfg = tiny_run_config();
  experiments::RunRecord record = experiments::run(cfg, (dir.path / "run1").string());
  for (const char* name : {"config", "corpus.tsv", "qa.tsv", "vocab.txt", "instances-write.tsv",
                           "instances-read.tsv", "instances-eval.tsv", "checkpoint.bin",
                           "history.txt", "results.txt", "results-per-instance.tsv"}) {
    CHECK(fs::exists(dir.path / "run1" / name));
  }
  CHECK(record.metrics.total == 2);  // v_count read instances

  // seed replay: identical corpus bytes and identical metrics
  experiments::RunRecord replay = experiments::run(cfg, (dir.path / "run2").string());
  CHECK(slurp((dir.path / "run1/corpus.tsv").string()) ==
        slurp((dir.path / "run2/corpus.tsv").string()));
  CHECK(slurp((dir.path / "run1/vocab.txt").string()) ==
        slurp((dir.path / "run2/vocab.txt").string()));
  CHECK(record.metrics.mean_em == replay.metrics.mean_em);
  CHECK(record.metrics.mean_bleu == replay.metrics.mean_bleu);

  // checkpoint reload evaluates to the same metrics
  eval::MetricsReport reloaded = experiments::eval_from_dir((dir.path / "run1").string());
  CHECK(reloaded.mean_em == record.metrics.mean_em);
  CHECK(reloaded.mean_bleu == record.metrics.mean_bleu);

  // record reload for reporting
  experiments::RunRecord loaded = experiments::load_run_record((dir.path / "run1").string());
  CHECK(loaded.metrics.mean_em == record.metrics.mean_em);
  CHECK(loaded.cfg.label == cfg.label);
}

TEST_CASE("report table includes every record and rejects mixed tasks") {
  TempDir dir("memlab_report");
  ExperimentConfig cfg = tiny_run_config();
  experiments::RunRecord r1 = experiments::run(cfg, (dir.path / "a").string());
  cfg.seed = 13;
  cfg.label = "second setup";
  experiments::RunRecord r2 = experiments::run(cfg, (dir.path / "b").string());
  const std::string table = experiments::report_table({r1, r2});
  CHECK(table.find(r1.cfg.label) != std::string::npos);
  CHECK(table.find("second setup") != std::string::npos);
  // values in the table equal the records' metrics (4 decimal places)
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.4f", r1.metrics.mean_em);
  CHECK(table.find(buf) != std::string::npos);

  experiments::RunRecord other = r2;
  other.cfg.task = Task::kSelectiveRecitation;
  CHECK_THROWS_AS(experiments::report_table({r1, other}), std::invalid_argument);
}

TEST_CASE("a single-element sweep equals a plain run") {
  TempDir dir("memlab_sweep");
  ExperimentConfig cfg = tiny_run_config();
  cfg.task = Task::kCapacitySweep;
  cfg.id_kind = corpus::IdKind::kRare;
  cfg.label = cfg.default_label();
  std::vector<experiments::RunRecord> records =
      experiments::sweep_capacity(cfg, {4}, (dir.path / "sweep").string());
  REQUIRE(records.size() == 1);
  ExperimentConfig direct = cfg;
  direct.t_count = 4;
  direct.label = records[0].cfg.label;
  experiments::RunRecord single = experiments::run(direct, (dir.path / "single").string());
  CHECK(records[0].metrics.mean_em == single.metrics.mean_em);
  CHECK(records[0].metrics.mean_bleu == single.metrics.mean_bleu);
  CHECK(fs::exists(dir.path / "sweep" / "sweep.tsv"));
  const std::string table = experiments::sweep_table(records);
  CHECK(table.find("T\tem\tbleu") != std::string::npos);

  CHECK_THROWS_AS(experiments::sweep_capacity(cfg, {8, 4}, (dir.path / "bad").string()),
                  std::invalid_argument);
}

TEST_CASE("train_from_dir consumes artifacts written by gen") {
  TempDir dir("memlab_gen_train");
  ExperimentConfig cfg = tiny_run_config();
  experiments::generate_artifacts(cfg, (dir.path / "g").string());
  CHECK(fs::exists(dir.path / "g" / "instances-write.tsv"));
  experiments::RunRecord record = experiments::train_from_dir((dir.path / "g").string());
  CHECK(record.metrics.total == 2);
  CHECK(fs::exists(dir.path / "g" / "checkpoint.bin"));
}

TEST_SUITE_END();
