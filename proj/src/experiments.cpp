#include "memlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "memlab/tokenizer.hpp"

namespace memlab::experiments {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (t_count < 0 || v_count < 0 || t_count + v_count < 1) {
    throw std::invalid_argument("config: need at least one passage");
  }
  if (n_sentences < 1 || tokens_per_sentence < 1) {
    throw std::invalid_argument("config: passage geometry must be positive");
  }
  if (task == Task::kSelectiveRecitation && n_sentences < 4) {
    throw std::invalid_argument("config: selective recitation needs n_sentences >= 4");
  }
  if (strategy == train::Strategy::kContinual && task != Task::kOpenQa &&
      task != Task::kGroundedQa) {
    throw std::invalid_argument("config: continual training applies to the QA tasks only");
  }
  if (recite && (task == Task::kFullRecitation || task == Task::kCapacitySweep ||
                 task == Task::kClosedBook || task == Task::kOpenBook)) {
    throw std::invalid_argument("config: recite does not apply to " + to_string(task));
  }
  if (is_qa_task(task) && n_sentences > std::min(attr_pool, value_pool)) {
    throw std::invalid_argument("config: fact pools smaller than facts per passage");
  }
  if (perm.k < 1) throw std::invalid_argument("config: perm_k must be >= 1");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("config: epochs/batch_size >= 1");
  if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
    throw std::invalid_argument("config: warmup_ratio must lie in [0, 1)");
  }
}

std::string ExperimentConfig::default_label() const {
  std::string s = to_string(task);
  if (task == Task::kGroundedQa) s += " id=" + prompts::to_string(id_mode);
  if (perm.mode != corpus::PermMode::kNone) {
    s += " +perm(" + corpus::to_string(perm.mode);
    if (perm.mode == corpus::PermMode::kRandomK) s += "-" + std::to_string(perm.k);
    s += ")";
  }
  if (recite) s += " +recite";
  if (task == Task::kOpenQa) s += " " + train::to_string(strategy);
  return s;
}

ExperimentConfig default_config(Task task) {
  ExperimentConfig cfg;
  cfg.task = task;
  switch (task) {
    case Task::kFullRecitation:
      cfg.id_kind = corpus::IdKind::kNum;
      break;
    case Task::kCapacitySweep:
      cfg.id_kind = corpus::IdKind::kRare;
      cfg.t_count = 128;
      cfg.n_sentences = 1;
      cfg.tokens_per_sentence = 25;
      cfg.model.d_model = 64;
      cfg.model.n_layers = 2;
      cfg.model.n_heads = 2;
      cfg.model.d_ff = 256;
      cfg.model.max_seq_len = 64;
      cfg.lr = 2e-3;
      cfg.epochs = 120;
      cfg.eval_every = 30;
      break;
    case Task::kSelectiveRecitation:
    case Task::kPositionalRecitation:
    case Task::kAdjacentRecitation:
      cfg.id_kind = corpus::IdKind::kTitle;
      break;
    case Task::kGroundedQa:
    case Task::kClosedBook:
    case Task::kOpenBook:
      cfg.id_kind = corpus::IdKind::kNum;
      break;
    case Task::kOpenQa:
      cfg.id_kind = corpus::IdKind::kNum;  // unused: open-domain writes carry no id
      cfg.schedule = train::ScheduleKind::kConstant;
      break;
  }
  cfg.label = cfg.default_label();
  return cfg;
}

// ---- config file I/O (flat key = value lines) ----

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean \"" + v + "\"");
}

}  // namespace

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_config: cannot open " + path);
  out.precision(17);
  out << "task = " << to_string(cfg.task) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "label = " << cfg.label << "\n";
  out << "id_kind = " << corpus::to_string(cfg.id_kind) << "\n";
  out << "t_count = " << cfg.t_count << "\n";
  out << "v_count = " << cfg.v_count << "\n";
  out << "n_sentences = " << cfg.n_sentences << "\n";
  out << "tokens_per_sentence = " << cfg.tokens_per_sentence << "\n";
  out << "alphabet_size = " << cfg.alphabet_size << "\n";
  out << "rare_pool = " << cfg.rare_pool << "\n";
  out << "name_pool = " << cfg.name_pool << "\n";
  out << "attr_pool = " << cfg.attr_pool << "\n";
  out << "value_pool = " << cfg.value_pool << "\n";
  out << "id_mode = " << prompts::to_string(cfg.id_mode) << "\n";
  out << "perm_mode = " << corpus::to_string(cfg.perm.mode) << "\n";
  out << "perm_k = " << cfg.perm.k << "\n";
  out << "perm_replace_original = " << bool_str(cfg.perm.replace_original) << "\n";
  out << "recite = " << bool_str(cfg.recite) << "\n";
  out << "strategy = " << train::to_string(cfg.strategy) << "\n";
  out << "read_mask = " << prompts::to_string(cfg.read_mask) << "\n";
  out << "d_model = " << cfg.model.d_model << "\n";
  out << "n_layers = " << cfg.model.n_layers << "\n";
  out << "n_heads = " << cfg.model.n_heads << "\n";
  out << "d_ff = " << cfg.model.d_ff << "\n";
  out << "max_seq_len = " << cfg.model.max_seq_len << "\n";
  out << "dropout = " << cfg.model.dropout << "\n";
  out << "tie_embeddings = " << bool_str(cfg.model.tie_embeddings) << "\n";
  out << "lr = " << cfg.lr << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  out << "warmup_ratio = " << cfg.warmup_ratio << "\n";
  out << "schedule = " << train::to_string(cfg.schedule) << "\n";
  out << "beta1 = " << cfg.adam.beta1 << "\n";
  out << "beta2 = " << cfg.adam.beta2 << "\n";
  out << "adam_eps = " << cfg.adam.eps << "\n";
  out << "weight_decay = " << cfg.adam.weight_decay << "\n";
  out << "eval_every = " << cfg.eval_every << "\n";
  out << "max_new_tokens = " << cfg.max_new_tokens << "\n";
  out << "threads = " << cfg.threads << "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  ExperimentConfig cfg;
  bool saw_label = false;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok::normalize_ws(line.substr(0, eq));
    std::string value = tok::normalize_ws(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key == "task") cfg.task = task_from(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "label") { cfg.label = value; saw_label = true; }
    else if (key == "id_kind") cfg.id_kind = corpus::id_kind_from(value);
    else if (key == "t_count") cfg.t_count = std::stoi(value);
    else if (key == "v_count") cfg.v_count = std::stoi(value);
    else if (key == "n_sentences") cfg.n_sentences = std::stoi(value);
    else if (key == "tokens_per_sentence") cfg.tokens_per_sentence = std::stoi(value);
    else if (key == "alphabet_size") cfg.alphabet_size = std::stoi(value);
    else if (key == "rare_pool") cfg.rare_pool = std::stoi(value);
    else if (key == "name_pool") cfg.name_pool = std::stoi(value);
    else if (key == "attr_pool") cfg.attr_pool = std::stoi(value);
    else if (key == "value_pool") cfg.value_pool = std::stoi(value);
    else if (key == "id_mode") cfg.id_mode = prompts::id_mode_from(value);
    else if (key == "perm_mode") cfg.perm.mode = corpus::perm_mode_from(value);
    else if (key == "perm_k") cfg.perm.k = std::stoi(value);
    else if (key == "perm_replace_original") cfg.perm.replace_original = parse_bool(value);
    else if (key == "recite") cfg.recite = parse_bool(value);
    else if (key == "strategy") cfg.strategy = train::strategy_from(value);
    else if (key == "read_mask") cfg.read_mask = prompts::mask_policy_from(value);
    else if (key == "d_model") cfg.model.d_model = std::stoi(value);
    else if (key == "n_layers") cfg.model.n_layers = std::stoi(value);
    else if (key == "n_heads") cfg.model.n_heads = std::stoi(value);
    else if (key == "d_ff") cfg.model.d_ff = std::stoi(value);
    else if (key == "max_seq_len") cfg.model.max_seq_len = std::stoi(value);
    else if (key == "dropout") cfg.model.dropout = std::stod(value);
    else if (key == "tie_embeddings") cfg.model.tie_embeddings = parse_bool(value);
    else if (key == "lr") cfg.lr = std::stod(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "warmup_ratio") cfg.warmup_ratio = std::stod(value);
    else if (key == "schedule") cfg.schedule = train::schedule_kind_from(value);
    else if (key == "beta1") cfg.adam.beta1 = std::stod(value);
    else if (key == "beta2") cfg.adam.beta2 = std::stod(value);
    else if (key == "adam_eps") cfg.adam.eps = std::stod(value);
    else if (key == "weight_decay") cfg.adam.weight_decay = std::stod(value);
    else if (key == "eval_every") cfg.eval_every = std::stoi(value);
    else if (key == "max_new_tokens") cfg.max_new_tokens = std::stoi(value);
    else if (key == "threads") cfg.threads = std::stoi(value);
    else throw std::invalid_argument("load_config: unknown key \"" + key + "\" in " + path);
  }
  if (!saw_label || cfg.label.empty()) cfg.label = cfg.default_label();
  return cfg;
}

// ---- pipeline ----

corpus::Corpus generate_corpus(const ExperimentConfig& cfg) {
  cfg.validate();
  RngState rng(cfg.seed);
  const int m = cfg.t_count + cfg.v_count;
  const bool fact = is_qa_task(cfg.task);
  RngState id_rng = rng.split(1);
  const int pool = cfg.id_kind == corpus::IdKind::kRare ? cfg.rare_pool : cfg.name_pool;
  std::vector<corpus::PassageId> ids = corpus::gen_ids(id_rng, cfg.id_kind, m, pool);

  std::vector<corpus::Passage> passages;
  std::vector<corpus::QAPair> qa;
  for (int i = 0; i < m; ++i) {
    RngState passage_rng = rng.split(100 + static_cast<std::uint64_t>(i));
    if (fact) {
      corpus::FactPassage fp = corpus::gen_fact_passage(passage_rng, cfg.n_sentences, i,
                                                        cfg.attr_pool, cfg.value_pool);
      fp.passage.id = ids[static_cast<std::size_t>(i)];
      for (corpus::QAPair& pair : fp.qa) {
        pair.passage_id = fp.passage.id.surface;
        pair.question_id = "q" + std::to_string(qa.size());
        qa.push_back(std::move(pair));
      }
      passages.push_back(std::move(fp.passage));
    } else {
      corpus::Passage p = corpus::gen_random_passage(passage_rng, cfg.n_sentences,
                                                     cfg.tokens_per_sentence, cfg.alphabet_size);
      p.id = ids[static_cast<std::size_t>(i)];
      passages.push_back(std::move(p));
    }
  }
  RngState split_rng = rng.split(2);
  corpus::Corpus c = corpus::split_corpus(std::move(passages), cfg.t_count, cfg.v_count,
                                          split_rng);
  c.qa = std::move(qa);
  return c;
}

namespace {

train::TrainingSetSpec set_spec(const ExperimentConfig& cfg) {
  train::TrainingSetSpec spec;
  spec.task = cfg.task;
  spec.perm = cfg.perm;
  spec.id_mode = cfg.id_mode;
  spec.recite = cfg.recite;
  spec.read_mask = cfg.read_mask;
  return spec;
}

tok::Vocab build_run_vocab(const train::BuiltSets& sets) {
  std::vector<std::string> strings;
  auto collect = [&strings](const std::vector<prompts::Instance>& instances) {
    for (const prompts::Instance& inst : instances) {
      strings.push_back(inst.prompt);
      if (!inst.target.empty()) strings.push_back(inst.target);
    }
  };
  collect(sets.writes);
  collect(sets.reads);
  collect(sets.eval);
  return tok::Vocab::build(strings);
}

void check_instances_fit(const std::vector<prompts::Instance>& instances, int max_seq_len,
                         const tok::Vocab& vocab) {
  for (const prompts::Instance& inst : instances) {
    const long n = 2 + static_cast<long>(vocab.encode(inst.prompt).size()) +
                   static_cast<long>(vocab.encode(inst.target).size());
    if (n > max_seq_len) {
      throw std::invalid_argument("instance needs " + std::to_string(n) +
                                  " tokens but max_seq_len is " + std::to_string(max_seq_len) +
                                  ": " + inst.meta.serialize());
    }
  }
}

std::vector<train::Phase> make_phases(const ExperimentConfig& cfg, const train::BuiltSets& sets) {
  std::vector<train::Phase> phases;
  if (cfg.strategy == train::Strategy::kMixed) {
    phases.push_back({train::merged_training_set(sets), cfg.epochs, cfg.lr, true});
  } else {
    phases.push_back({sets.writes, cfg.epochs, cfg.lr, false});
    phases.push_back({sets.reads, cfg.epochs, cfg.lr, true});
  }
  return phases;
}

std::string timestamp_dir_name(std::uint64_t seed) {
  std::time_t now = std::time(nullptr);
  std::tm tm_buf{};
  gmtime_r(&now, &tm_buf);
  std::ostringstream out;
  out << std::put_time(&tm_buf, "%Y%m%d-%H%M%S") << "-" << seed;
  return out.str();
}

}  // namespace

void generate_artifacts(const ExperimentConfig& cfg, const std::string& dir) {
  cfg.validate();
  fs::create_directories(dir);
  const corpus::Corpus c = generate_corpus(cfg);
  RngState sets_rng = RngState(cfg.seed).split(3);
  const train::BuiltSets sets = train::build_training_set(c, set_spec(cfg), sets_rng);
  const tok::Vocab vocab = build_run_vocab(sets);

  save_config(cfg, dir + "/config");
  c.save(dir + "/corpus.tsv", dir + "/qa.tsv");
  vocab.save(dir + "/vocab.txt");
  prompts::save_instances(sets.writes, dir + "/instances-write.tsv");
  prompts::save_instances(sets.reads, dir + "/instances-read.tsv");
  prompts::save_instances(sets.eval, dir + "/instances-eval.tsv");
}

namespace {

RunRecord train_and_persist(const ExperimentConfig& cfg, const std::string& dir,
                            const train::BuiltSets& sets, const tok::Vocab& vocab, bool verbose) {
  model::ModelConfig mc = cfg.model;
  if (mc.vocab_size == 0) mc.vocab_size = vocab.size();
  if (mc.vocab_size < vocab.size()) {
    throw std::invalid_argument("config: vocab_size " + std::to_string(mc.vocab_size) +
                                " smaller than generated vocabulary " +
                                std::to_string(vocab.size()));
  }
  check_instances_fit(sets.writes, mc.max_seq_len, vocab);
  check_instances_fit(sets.reads, mc.max_seq_len, vocab);
  check_instances_fit(sets.eval, mc.max_seq_len, vocab);

  RngState rng(cfg.seed);
  RngState init_rng = rng.split(4);
  model::TransformerLM lm(mc, init_rng);

  train::TrainOptions options;
  options.batch_size = cfg.batch_size;
  options.eval_every = cfg.eval_every;
  options.schedule = cfg.schedule;
  options.warmup_ratio = cfg.warmup_ratio;
  options.adam = cfg.adam;
  options.max_new_tokens = cfg.max_new_tokens;
  options.seed = cfg.seed;
  options.task = cfg.task;
  options.threads = cfg.threads;
  options.verbose = verbose;

  train::TrainResult trained = train::run_plan(lm, make_phases(cfg, sets), sets.eval, vocab,
                                               options);

  // Re-evaluate the restored best parameters for the per-instance dump; the
  // report must match the cached best-epoch metrics exactly.
  std::vector<eval::EvalResult> per_instance;
  eval::MetricsReport final_metrics = eval::evaluate_readset(
      lm, sets.eval, cfg.task, vocab, cfg.max_new_tokens, &per_instance, cfg.threads);
  if (trained.history.best_epoch >= 0 &&
      final_metrics.mean_em != trained.best_metrics.mean_em) {
    throw std::runtime_error("run: re-evaluation of the best checkpoint diverged");
  }

  lm.save_checkpoint(dir + "/checkpoint.bin");
  trained.history.save(dir + "/history.txt");
  {
    std::ofstream out(dir + "/results.txt", std::ios::binary);
    if (!out) throw std::runtime_error("run: cannot open " + dir + "/results.txt");
    out << "label: " << cfg.label << "\n";
    out << "task: " << to_string(cfg.task) << "\n";
    out << "best_epoch: " << trained.history.best_epoch << "\n";
    out << final_metrics.to_text();
  }
  eval::save_results(per_instance, dir + "/results-per-instance.tsv");

  RunRecord record;
  record.cfg = cfg;
  record.run_dir = dir;
  record.history = std::move(trained.history);
  record.metrics = std::move(final_metrics);
  return record;
}

}  // namespace

RunRecord run(const ExperimentConfig& cfg, const std::string& out_dir, bool verbose) {
  cfg.validate();
  std::string dir = out_dir;
  if (dir.empty()) {
    dir = "runs/" + to_string(cfg.task) + "/" + timestamp_dir_name(cfg.seed);
  }
  generate_artifacts(cfg, dir);
  const corpus::Corpus c = generate_corpus(cfg);
  RngState sets_rng = RngState(cfg.seed).split(3);
  const train::BuiltSets sets = train::build_training_set(c, set_spec(cfg), sets_rng);
  const tok::Vocab vocab = build_run_vocab(sets);
  return train_and_persist(cfg, dir, sets, vocab, verbose);
}

RunRecord train_from_dir(const std::string& dir, bool verbose) {
  const ExperimentConfig cfg = load_config(dir + "/config");
  train::BuiltSets sets;
  sets.writes = prompts::load_instances(dir + "/instances-write.tsv");
  sets.reads = prompts::load_instances(dir + "/instances-read.tsv");
  sets.eval = prompts::load_instances(dir + "/instances-eval.tsv");
  const tok::Vocab vocab = tok::Vocab::load(dir + "/vocab.txt");
  return train_and_persist(cfg, dir, sets, vocab, verbose);
}

eval::MetricsReport eval_from_dir(const std::string& dir, const std::string& checkpoint_path) {
  const ExperimentConfig cfg = load_config(dir + "/config");
  const tok::Vocab vocab = tok::Vocab::load(dir + "/vocab.txt");
  const std::vector<prompts::Instance> eval_set =
      prompts::load_instances(dir + "/instances-eval.tsv");
  const std::string ckpt = checkpoint_path.empty() ? dir + "/checkpoint.bin" : checkpoint_path;
  const model::TransformerLM lm = model::TransformerLM::load_checkpoint(ckpt);
  return eval::evaluate_readset(lm, eval_set, cfg.task, vocab, cfg.max_new_tokens, nullptr,
                                cfg.threads);
}

std::vector<RunRecord> sweep_capacity(const ExperimentConfig& base, const std::vector<int>& t_values,
                                      const std::string& out_root, bool verbose) {
  if (t_values.empty()) throw std::invalid_argument("sweep_capacity: empty T list");
  for (std::size_t i = 1; i < t_values.size(); ++i) {
    if (t_values[i] <= t_values[i - 1]) {
      throw std::invalid_argument("sweep_capacity: T values must be ascending");
    }
  }
  std::vector<RunRecord> records;
  for (int t : t_values) {
    ExperimentConfig cfg = base;
    cfg.t_count = t;
    cfg.label = base.label + " T=" + std::to_string(t);
    const std::string dir = out_root + "/T" + std::to_string(t);
    records.push_back(run(cfg, dir, verbose));
  }
  std::ofstream table(out_root + "/sweep.tsv", std::ios::binary);
  if (table) table << sweep_table(records);
  return records;
}

std::string sweep_table(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "T\tem\tbleu\n";
  out.precision(6);
  out << std::fixed;
  for (const RunRecord& r : records) {
    out << r.cfg.t_count << '\t' << r.metrics.mean_em << '\t' << r.metrics.mean_bleu << '\n';
  }
  return out.str();
}

namespace {

std::string fixed6(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

}  // namespace

std::string report_table(const std::vector<RunRecord>& records) {
  if (records.empty()) return "(no runs)\n";
  for (const RunRecord& r : records) {
    if (r.cfg.task != records.front().cfg.task) {
      throw std::invalid_argument("report: runs mix tasks " + to_string(records.front().cfg.task) +
                                  " and " + to_string(r.cfg.task));
    }
  }
  const bool any_recite = std::any_of(records.begin(), records.end(),
                                      [](const RunRecord& r) { return r.metrics.has_recite; });
  std::size_t label_width = 5;
  for (const RunRecord& r : records) label_width = std::max(label_width, r.cfg.label.size());

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_width) + 2) << "setup" << std::right
      << std::setw(9) << "EM" << std::setw(9) << "BLEU" << std::setw(9) << "F1";
  if (any_recite) out << std::setw(13) << "Recite-BLEU";
  out << "\n";
  for (const RunRecord& r : records) {
    out << std::left << std::setw(static_cast<int>(label_width) + 2) << r.cfg.label << std::right
        << std::setw(9) << fixed6(r.metrics.mean_em) << std::setw(9) << fixed6(r.metrics.mean_bleu)
        << std::setw(9) << fixed6(r.metrics.mean_f1);
    if (any_recite) {
      out << std::setw(13) << (r.metrics.has_recite ? fixed6(r.metrics.recite_bleu) : "-");
    }
    out << "\n";
  }
  return out.str();
}

std::string report_tsv(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "label\tem\tbleu\tf1\trecite_bleu\trun_dir\n";
  out.precision(17);
  for (const RunRecord& r : records) {
    out << r.cfg.label << '\t' << r.metrics.mean_em << '\t' << r.metrics.mean_bleu << '\t'
        << r.metrics.mean_f1 << '\t';
    if (r.metrics.has_recite) out << r.metrics.recite_bleu;
    else out << "-";
    out << '\t' << r.run_dir << '\n';
  }
  return out.str();
}

RunRecord load_run_record(const std::string& run_dir) {
  RunRecord record;
  record.cfg = load_config(run_dir + "/config");
  record.run_dir = run_dir;
  std::ifstream in(run_dir + "/results.txt", std::ios::binary);
  if (!in) throw std::runtime_error("load_run_record: cannot open " + run_dir + "/results.txt");
  std::stringstream buffer;
  buffer << in.rdbuf();
  record.metrics = eval::MetricsReport::from_text(buffer.str());
  return record;
}

}  // namespace memlab::experiments
