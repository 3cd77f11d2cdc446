#include "memlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace memlab::train {

AdamOptimizer::AdamOptimizer(const std::vector<Parameter>& params, AdamConfig cfg) : cfg_(cfg) {
  for (const Parameter& p : params) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void AdamOptimizer::step(std::vector<Parameter>& params, double lr_t) {
  if (params.size() != m_.size()) {
    throw std::invalid_argument("AdamOptimizer: parameter count changed");
  }
  ++t_;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    double* theta = p.value.data();
    double* g = p.grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const long n = p.value.size();
    for (long c = 0; c < n; ++c) {
      if (std::isnan(g[c])) {
        throw std::runtime_error("AdamOptimizer: NaN gradient in parameter " + p.name);
      }
      m[c] = cfg_.beta1 * m[c] + (1.0 - cfg_.beta1) * g[c];
      v[c] = cfg_.beta2 * v[c] + (1.0 - cfg_.beta2) * g[c] * g[c];
      const double mhat = m[c] / bias1;
      const double vhat = v[c] / bias2;
      // decoupled decay on the pre-update value
      const double decay_term = p.decay ? lr_t * cfg_.weight_decay * theta[c] : 0.0;
      theta[c] -= lr_t * mhat / (std::sqrt(vhat) + cfg_.eps) + decay_term;
      g[c] = 0.0;
    }
  }
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::kLinearWarmup ? "linear_warmup" : "constant";
}

ScheduleKind schedule_kind_from(const std::string& s) {
  if (s == "linear_warmup") return ScheduleKind::kLinearWarmup;
  if (s == "constant") return ScheduleKind::kConstant;
  throw std::invalid_argument("unknown schedule: " + s);
}

double lr_at(const Schedule& s, long step) {
  if (step < 0 || step > s.total_steps) {
    throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(s.total_steps) + "]");
  }
  if (s.kind == ScheduleKind::kConstant) return s.base_lr;
  const long warmup =
      static_cast<long>(std::ceil(s.warmup_ratio * static_cast<double>(s.total_steps)));
  if (warmup > 0 && step < warmup) {
    return s.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (s.total_steps == warmup) return step < s.total_steps ? s.base_lr : 0.0;
  return s.base_lr * static_cast<double>(s.total_steps - step) /
         static_cast<double>(s.total_steps - warmup);
}

std::string to_string(Strategy s) { return s == Strategy::kMixed ? "mixed" : "continual"; }

Strategy strategy_from(const std::string& s) {
  if (s == "mixed") return Strategy::kMixed;
  if (s == "continual") return Strategy::kContinual;
  throw std::invalid_argument("unknown strategy: " + s);
}

// ---- training-set construction ----

namespace {

using prompts::Instance;

void append_writes(const corpus::Corpus& c, const std::vector<int>& indices,
                   const corpus::PermutationSpec& perm, bool marked, bool doc_style, RngState& rng,
                   std::vector<Instance>& out) {
  for (int idx : indices) {
    const corpus::Passage& p = c.passages[static_cast<std::size_t>(idx)];
    RngState passage_rng = rng.split(static_cast<std::uint64_t>(idx));
    for (const std::vector<int>& order : corpus::write_orderings(p, perm, passage_rng)) {
      out.push_back(doc_style ? prompts::render_write_doc(p, order)
                              : prompts::render_write(p, order, marked));
    }
  }
}

void apply_read_mask(std::vector<Instance>& instances, prompts::MaskPolicy mask) {
  for (Instance& inst : instances) inst.mask = mask;
}

}  // namespace

BuiltSets build_training_set(const corpus::Corpus& c, const TrainingSetSpec& spec, RngState& rng) {
  BuiltSets sets;
  RngState write_rng = rng.split(0x11);
  RngState read_rng = rng.split(0x22);
  RngState eval_rng = rng.split(0x33);

  const bool fact_task = is_qa_task(spec.task);
  for (const corpus::Passage& p : c.passages) {
    if (fact_task && p.kind != corpus::PassageKind::kFact) {
      throw std::invalid_argument("build_training_set: " + to_string(spec.task) +
                                  " needs a fact corpus");
    }
    if (spec.task == Task::kSelectiveRecitation && p.sentence_count() < 4) {
      throw std::invalid_argument(
          "build_training_set: selective recitation needs passages with more than 3 sentences");
    }
  }

  switch (spec.task) {
    case Task::kFullRecitation:
    case Task::kCapacitySweep: {
      append_writes(c, c.train_indices, spec.perm, false, false, write_rng, sets.writes);
      append_writes(c, c.val_indices, spec.perm, false, false, write_rng, sets.writes);
      for (int idx : c.train_indices) {
        sets.reads.push_back(prompts::render_read_full(c.passages[static_cast<std::size_t>(idx)]));
      }
      for (int idx : c.val_indices) {
        sets.eval.push_back(prompts::render_read_full(c.passages[static_cast<std::size_t>(idx)]));
      }
      break;
    }
    case Task::kSelectiveRecitation: {
      append_writes(c, c.train_indices, spec.perm, true, false, write_rng, sets.writes);
      append_writes(c, c.val_indices, spec.perm, true, false, write_rng, sets.writes);
      for (int idx : c.train_indices) {
        const corpus::Passage& p = c.passages[static_cast<std::size_t>(idx)];
        for (int j = 0; j < p.sentence_count(); ++j) {
          sets.reads.push_back(prompts::render_read_sentence(p, j, spec.recite));
        }
      }
      for (int idx : c.val_indices) {
        const corpus::Passage& p = c.passages[static_cast<std::size_t>(idx)];
        for (int j = 0; j < p.sentence_count(); ++j) {
          sets.eval.push_back(prompts::render_read_sentence(p, j, spec.recite));
        }
      }
      break;
    }
    case Task::kPositionalRecitation: {
      append_writes(c, c.train_indices, spec.perm, false, false, write_rng, sets.writes);
      append_writes(c, c.val_indices, spec.perm, false, false, write_rng, sets.writes);
      const prompts::Positional probes[] = {prompts::Positional::kFirst,
                                            prompts::Positional::kSecond,
                                            prompts::Positional::kLast};
      for (int idx : c.train_indices) {
        const corpus::Passage& p = c.passages[static_cast<std::size_t>(idx)];
        for (prompts::Positional which : probes) {
          sets.reads.push_back(prompts::render_read_positional(p, which, spec.recite));
        }
      }
      for (int idx : c.val_indices) {
        const corpus::Passage& p = c.passages[static_cast<std::size_t>(idx)];
        for (prompts::Positional which : probes) {
          sets.eval.push_back(prompts::render_read_positional(p, which, spec.recite));
        }
      }
      break;
    }
    case Task::kAdjacentRecitation: {
      append_writes(c, c.train_indices, spec.perm, false, false, write_rng, sets.writes);
      append_writes(c, c.val_indices, spec.perm, false, false, write_rng, sets.writes);
      auto add_probes = [&](const corpus::Passage& p, std::vector<Instance>& out) {
        for (int j = 0; j + 1 < p.sentence_count(); ++j) {
          out.push_back(prompts::render_read_adjacent(p, p.sentences[static_cast<std::size_t>(j)],
                                                      prompts::Direction::kNext, spec.recite));
        }
        for (int j = 1; j < p.sentence_count(); ++j) {
          out.push_back(prompts::render_read_adjacent(p, p.sentences[static_cast<std::size_t>(j)],
                                                      prompts::Direction::kPrev, spec.recite));
        }
      };
      for (int idx : c.train_indices) {
        add_probes(c.passages[static_cast<std::size_t>(idx)], sets.reads);
      }
      for (int idx : c.val_indices) add_probes(c.passages[static_cast<std::size_t>(idx)], sets.eval);
      break;
    }
    case Task::kGroundedQa: {
      append_writes(c, c.train_indices, spec.perm, false, false, write_rng, sets.writes);
      append_writes(c, c.val_indices, spec.perm, false, false, write_rng, sets.writes);
      for (const corpus::QAPair& qa : c.qa_for(c.train_indices)) {
        sets.reads.push_back(
            prompts::render_read_grounded_qa(c, qa, spec.id_mode, spec.recite, read_rng));
      }
      for (const corpus::QAPair& qa : c.qa_for(c.val_indices)) {
        sets.eval.push_back(
            prompts::render_read_grounded_qa(c, qa, spec.id_mode, spec.recite, eval_rng));
      }
      break;
    }
    case Task::kClosedBook: {
      // Fine-tuned solely on QA pairs; nothing is written to memory.
      for (const corpus::QAPair& qa : c.qa_for(c.train_indices)) {
        sets.reads.push_back(
            prompts::render_read_grounded_qa(c, qa, prompts::IdMode::kNone, false, read_rng));
      }
      for (const corpus::QAPair& qa : c.qa_for(c.val_indices)) {
        sets.eval.push_back(
            prompts::render_read_grounded_qa(c, qa, prompts::IdMode::kNone, false, eval_rng));
      }
      break;
    }
    case Task::kOpenBook: {
      // The passage body rides in the context window instead of the weights.
      for (const corpus::QAPair& qa : c.qa_for(c.train_indices)) {
        sets.reads.push_back(prompts::render_open_book_qa(c, qa));
      }
      for (const corpus::QAPair& qa : c.qa_for(c.val_indices)) {
        sets.eval.push_back(prompts::render_open_book_qa(c, qa));
      }
      break;
    }
    case Task::kOpenQa: {
      append_writes(c, c.train_indices, spec.perm, false, true, write_rng, sets.writes);
      append_writes(c, c.val_indices, spec.perm, false, true, write_rng, sets.writes);
      for (const corpus::QAPair& qa : c.qa_for(c.train_indices)) {
        sets.reads.push_back(prompts::render_open_qa(c, qa, spec.recite));
      }
      for (const corpus::QAPair& qa : c.qa_for(c.val_indices)) {
        sets.eval.push_back(prompts::render_open_qa(c, qa, spec.recite));
      }
      break;
    }
  }
  apply_read_mask(sets.reads, spec.read_mask);
  apply_read_mask(sets.eval, prompts::MaskPolicy::kTargetOnly);
  return sets;
}

std::vector<prompts::Instance> merged_training_set(const BuiltSets& sets) {
  std::vector<prompts::Instance> merged = sets.writes;
  merged.insert(merged.end(), sets.reads.begin(), sets.reads.end());
  return merged;
}

// ---- the training loop ----

namespace {

std::vector<Tensor> snapshot_values(const std::vector<Parameter>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter& p : params) out.push_back(p.value);
  return out;
}

void restore_values(std::vector<Parameter>& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = values[i];
}

}  // namespace

TrainResult run_plan(model::TransformerLM& m, const std::vector<Phase>& phases,
                     const std::vector<prompts::Instance>& eval_set, const tok::Vocab& vocab,
                     const TrainOptions& options) {
  if (options.batch_size < 1) throw std::invalid_argument("run_plan: batch_size must be >= 1");
  TrainResult result;
  RngState order_rng = RngState(options.seed).split(0xA1);
  RngState dropout_rng = RngState(options.seed).split(0xA2);

  std::vector<Tensor> best_values;
  int global_epoch = 0;

  for (std::size_t phase_i = 0; phase_i < phases.size(); ++phase_i) {
    const Phase& phase = phases[phase_i];
    const long n = static_cast<long>(phase.instances.size());
    if (n == 0) throw std::invalid_argument("run_plan: empty phase " + std::to_string(phase_i));
    const long steps_per_epoch = (n + options.batch_size - 1) / options.batch_size;
    Schedule schedule{options.schedule, phase.lr, options.warmup_ratio,
                      steps_per_epoch * phase.epochs};
    AdamOptimizer optimizer(m.parameters(), options.adam);
    m.zero_grads();

    for (int epoch = 0; epoch < phase.epochs; ++epoch, ++global_epoch) {
      std::vector<long> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      shuffle(std::span<long>(order), order_rng);

      double loss_sum = 0.0;
      long cursor = 0;
      while (cursor < n) {
        const long batch_n = std::min<long>(options.batch_size, n - cursor);
        const double scale = 1.0 / static_cast<double>(batch_n);
        for (long b = 0; b < batch_n; ++b) {
          const prompts::Instance& inst =
              phase.instances[static_cast<std::size_t>(order[static_cast<std::size_t>(cursor + b)])];
          const double loss = m.instance_loss(
              inst, vocab, scale, m.config().dropout > 0.0 ? &dropout_rng : nullptr);
          if (std::isnan(loss)) {
            throw std::runtime_error("run_plan: loss diverged to NaN at phase " +
                                     std::to_string(phase_i) + " epoch " +
                                     std::to_string(global_epoch) + " step " +
                                     std::to_string(optimizer.step_count()));
          }
          loss_sum += loss;
        }
        optimizer.step(m.parameters(), lr_at(schedule, optimizer.step_count()));
        cursor += batch_n;
      }

      EpochStat stat;
      stat.phase = static_cast<int>(phase_i);
      stat.epoch = global_epoch;
      stat.mean_loss = loss_sum / static_cast<double>(n);
      const bool last_epoch = epoch == phase.epochs - 1;
      const bool eval_now = phase.eval && !eval_set.empty() &&
                            ((epoch + 1) % std::max(1, options.eval_every) == 0 || last_epoch);
      if (eval_now) {
        stat.evaluated = true;
        stat.metrics = eval::evaluate_readset(m, eval_set, options.task, vocab,
                                              options.max_new_tokens, nullptr, options.threads);
        if (stat.metrics.mean_em > result.history.best_em) {
          result.history.best_em = stat.metrics.mean_em;
          result.history.best_epoch = global_epoch;
          result.best_metrics = stat.metrics;
          best_values = snapshot_values(m.parameters());
        }
      }
      if (options.verbose) {
        std::cerr << "epoch " << global_epoch << " loss " << stat.mean_loss;
        if (stat.evaluated) {
          std::cerr << " em " << stat.metrics.mean_em << " bleu " << stat.metrics.mean_bleu;
        }
        std::cerr << "\n";
      }
      result.history.epochs.push_back(std::move(stat));
    }
  }

  if (!best_values.empty()) restore_values(m.parameters(), best_values);
  return result;
}

std::string TrainHistory::to_text() const {
  std::ostringstream out;
  out.precision(17);
  for (const EpochStat& e : epochs) {
    out << "phase " << e.phase << " epoch " << e.epoch << " loss " << e.mean_loss;
    if (e.evaluated) {
      out << " em " << e.metrics.mean_em << " bleu " << e.metrics.mean_bleu << " f1 "
          << e.metrics.mean_f1;
      if (e.metrics.has_recite) out << " recite_bleu " << e.metrics.recite_bleu;
    }
    out << "\n";
  }
  out << "best_epoch " << best_epoch << " best_em " << best_em << "\n";
  return out.str();
}

void TrainHistory::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("TrainHistory::save: cannot open " + path);
  out << to_text();
}

}  // namespace memlab::train
