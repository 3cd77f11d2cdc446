#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "memlab/corpus.hpp"
#include "memlab/model.hpp"
#include "memlab/rng.hpp"
#include "memlab/train.hpp"

using namespace memlab;
using train::AdamConfig;
using train::AdamOptimizer;
using train::Schedule;
using train::ScheduleKind;

TEST_SUITE_BEGIN("train");

namespace {

std::vector<Parameter> scalar_param(double value) {
  std::vector<Parameter> params;
  params.emplace_back("w", Tensor::from({1}, {value}), true);
  return params;
}

}  // namespace

TEST_CASE("adam single step matches the closed form") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  auto params = scalar_param(1.0);
  params[0].grad.at(0) = 0.5;
  AdamOptimizer opt(params, cfg);
  opt.step(params, 0.1);
  CHECK(params[0].value.at(0) == doctest::Approx(0.90000000199999996).epsilon(1e-15));
  CHECK(params[0].grad.at(0) == 0.0);  // zeroed after the step

  // decoupled weight decay subtracts lr*wd*theta on top
  cfg.weight_decay = 0.01;
  auto params2 = scalar_param(1.0);
  params2[0].grad.at(0) = 0.5;
  AdamOptimizer opt2(params2, cfg);
  opt2.step(params2, 0.1);
  CHECK(params2[0].value.at(0) == doctest::Approx(0.89900000199999996).epsilon(1e-15));
}

TEST_CASE("adam two steps with a constant gradient match the recurrence") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  auto params = scalar_param(1.0);
  AdamOptimizer opt(params, cfg);
  params[0].grad.at(0) = 0.5;
  opt.step(params, 0.1);
  params[0].grad.at(0) = 0.5;
  opt.step(params, 0.1);
  CHECK(params[0].value.at(0) == doctest::Approx(0.80000000399999992).epsilon(1e-15));
  // moments decay at beta1/beta2 exactly
  const double g = 0.5;
  const double m2 = 0.9 * ((1 - 0.9) * g) + (1 - 0.9) * g;
  const double v2 = 0.999 * ((1 - 0.999) * g * g) + (1 - 0.999) * g * g;
  CHECK(opt.first_moment(0).at(0) == doctest::Approx(m2).epsilon(1e-15));
  CHECK(opt.second_moment(0).at(0) == doctest::Approx(v2).epsilon(1e-15));
}

TEST_CASE("adam with zero gradient and zero decay leaves parameters unchanged") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  auto params = scalar_param(3.25);
  AdamOptimizer opt(params, cfg);
  opt.step(params, 0.1);
  CHECK(params[0].value.at(0) == 3.25);
}

TEST_CASE("adam with lr zero is the identity on parameters") {
  AdamConfig cfg;
  auto params = scalar_param(2.5);
  params[0].grad.at(0) = 1.0;
  AdamOptimizer opt(params, cfg);
  opt.step(params, 0.0);
  CHECK(params[0].value.at(0) == 2.5);
}

TEST_CASE("adam aborts on a NaN gradient naming the parameter") {
  AdamConfig cfg;
  auto params = scalar_param(1.0);
  params[0].grad.at(0) = std::nan("");
  AdamOptimizer opt(params, cfg);
  CHECK_THROWS_WITH_AS(opt.step(params, 0.1), doctest::Contains("w"), std::runtime_error);
}

TEST_CASE("lr schedule hits the spec anchors") {
  Schedule s{ScheduleKind::kLinearWarmup, 1e-3, 0.05, 100};
  CHECK(train::lr_at(s, 0) == 0.0);
  CHECK(train::lr_at(s, 5) == 1e-3);  // warmup = ceil(0.05*100) = 5
  CHECK(train::lr_at(s, 100) == 0.0);
  CHECK(train::lr_at(s, 50) > 0.0);
  CHECK_THROWS_AS(train::lr_at(s, 101), std::invalid_argument);

  Schedule c{ScheduleKind::kConstant, 2e-3, 0.05, 100};
  CHECK(train::lr_at(c, 0) == 2e-3);
  CHECK(train::lr_at(c, 100) == 2e-3);

  Schedule no_warmup{ScheduleKind::kLinearWarmup, 1e-3, 0.0, 10};
  CHECK(train::lr_at(no_warmup, 0) == 1e-3);
}

namespace {

corpus::Corpus tiny_corpus(int train_count, int val_count, int sentences) {
  RngState rng(100);
  std::vector<corpus::Passage> passages;
  const int m = train_count + val_count;
  auto ids = corpus::gen_ids(rng, corpus::IdKind::kNum, m, 0);
  for (int i = 0; i < m; ++i) {
    RngState prng = rng.split(static_cast<std::uint64_t>(i));
    corpus::Passage p = corpus::gen_random_passage(prng, sentences, 3, 16);
    p.id = ids[static_cast<std::size_t>(i)];
    passages.push_back(std::move(p));
  }
  RngState srng(7);
  return corpus::split_corpus(std::move(passages), train_count, val_count, srng);
}

}  // namespace

TEST_CASE("mixed training composition counts writes, reads, and withheld evals") {
  corpus::Corpus c = tiny_corpus(2, 1, 2);
  train::TrainingSetSpec spec;
  spec.task = Task::kFullRecitation;
  RngState rng(5);
  train::BuiltSets sets = train::build_training_set(c, spec, rng);
  CHECK(sets.writes.size() == 3);  // 2 train + 1 val
  CHECK(sets.reads.size() == 2);
  CHECK(sets.eval.size() == 1);
  CHECK(train::merged_training_set(sets).size() == 5);
}

TEST_CASE("permutation first multiplies write instances by J") {
  corpus::Corpus c = tiny_corpus(2, 1, 4);
  train::TrainingSetSpec spec;
  spec.task = Task::kFullRecitation;
  spec.perm.mode = corpus::PermMode::kFirst;
  RngState rng(5);
  train::BuiltSets sets = train::build_training_set(c, spec, rng);
  CHECK(sets.writes.size() == 3 * 4);
}

TEST_CASE("the evaluation set contains no training passage's read instance") {
  corpus::Corpus c = tiny_corpus(4, 2, 4);
  train::TrainingSetSpec spec;
  spec.task = Task::kSelectiveRecitation;
  RngState rng(5);
  train::BuiltSets sets = train::build_training_set(c, spec, rng);
  std::set<std::string> train_prompts;
  for (const auto& inst : sets.reads) train_prompts.insert(inst.prompt);
  for (const auto& inst : sets.eval) CHECK(train_prompts.count(inst.prompt) == 0);
}

TEST_CASE("selective recitation requires more than three sentences") {
  corpus::Corpus c = tiny_corpus(2, 1, 3);
  train::TrainingSetSpec spec;
  spec.task = Task::kSelectiveRecitation;
  RngState rng(5);
  CHECK_THROWS_AS(train::build_training_set(c, spec, rng), std::invalid_argument);
}

TEST_CASE("qa tasks reject a non-fact corpus") {
  corpus::Corpus c = tiny_corpus(2, 1, 4);
  train::TrainingSetSpec spec;
  spec.task = Task::kGroundedQa;
  RngState rng(5);
  CHECK_THROWS_AS(train::build_training_set(c, spec, rng), std::invalid_argument);
}

namespace {

struct TinySetup {
  tok::Vocab vocab;
  std::vector<prompts::Instance> instances;
  model::ModelConfig cfg;
};

TinySetup tiny_setup() {
  TinySetup s;
  corpus::Corpus c = tiny_corpus(3, 1, 1);
  train::TrainingSetSpec spec;
  spec.task = Task::kFullRecitation;
  RngState rng(5);
  train::BuiltSets sets = train::build_training_set(c, spec, rng);
  s.instances = train::merged_training_set(sets);
  std::vector<std::string> strings;
  for (const auto& inst : s.instances) {
    strings.push_back(inst.prompt);
    strings.push_back(inst.target);
  }
  s.vocab = tok::Vocab::build(strings);
  s.cfg.vocab_size = s.vocab.size();
  s.cfg.d_model = 16;
  s.cfg.n_layers = 1;
  s.cfg.n_heads = 2;
  s.cfg.d_ff = 32;
  s.cfg.max_seq_len = 32;
  return s;
}

}  // namespace

TEST_CASE("one epoch at lr zero records a loss and leaves parameters unchanged") {
  TinySetup s = tiny_setup();
  RngState rng(9);
  model::TransformerLM lm(s.cfg, rng);
  const Tensor before = lm.parameters()[0].value;

  train::TrainOptions options;
  options.batch_size = 4;
  options.task = Task::kFullRecitation;
  options.schedule = ScheduleKind::kConstant;
  std::vector<train::Phase> phases{{s.instances, 1, 0.0, false}};
  train::TrainResult result = train::run_plan(lm, phases, {}, s.vocab, options);
  REQUIRE(result.history.epochs.size() == 1);
  CHECK(result.history.epochs[0].mean_loss > 0.0);
  for (long i = 0; i < before.size(); ++i) CHECK(lm.parameters()[0].value.at(i) == before.at(i));
}

TEST_CASE("same seed and config give a bit-identical loss history") {
  TinySetup s = tiny_setup();
  train::TrainOptions options;
  options.batch_size = 2;
  options.task = Task::kFullRecitation;
  options.seed = 77;
  std::vector<double> losses1, losses2;
  for (int run = 0; run < 2; ++run) {
    RngState rng(9);
    model::TransformerLM lm(s.cfg, rng);
    std::vector<train::Phase> phases{{s.instances, 3, 1e-3, false}};
    train::TrainResult result = train::run_plan(lm, phases, {}, s.vocab, options);
    for (const auto& e : result.history.epochs) {
      (run == 0 ? losses1 : losses2).push_back(e.mean_loss);
    }
  }
  CHECK(losses1 == losses2);
}

TEST_CASE("a tiny model memorizes its training reads end to end") {
  TinySetup s = tiny_setup();
  RngState rng(9);
  model::TransformerLM lm(s.cfg, rng);
  train::TrainOptions options;
  options.batch_size = 4;
  options.task = Task::kFullRecitation;
  options.eval_every = 40;
  options.seed = 5;
  std::vector<train::Phase> phases{{s.instances, 300, 1e-2, false}};
  train::TrainResult result = train::run_plan(lm, phases, {}, s.vocab, options);

  // training loss trend: non-increasing over the final 10% of epochs, with
  // at most 5% of epochs violating monotonicity overall
  const auto& epochs = result.history.epochs;
  long violations = 0;
  for (std::size_t i = epochs.size() - epochs.size() / 10; i < epochs.size(); ++i) {
    if (epochs[i].mean_loss > epochs[i - 1].mean_loss + 1e-9) ++violations;
  }
  CHECK(violations <= static_cast<long>(epochs.size() / 20 + 1));

  // the trained model reproduces a train-set read target
  int hits = 0, total = 0;
  for (const auto& inst : s.instances) {
    if (inst.target.empty()) continue;
    ++total;
    if (lm.generate_greedy(inst.prompt, 16, s.vocab) == inst.target) ++hits;
  }
  CHECK(total > 0);
  CHECK(hits == total);
}

TEST_CASE("training aborts when an instance exceeds the context window") {
  TinySetup s = tiny_setup();
  s.cfg.max_seq_len = 4;
  RngState rng(9);
  model::TransformerLM lm(s.cfg, rng);
  train::TrainOptions options;
  options.task = Task::kFullRecitation;
  std::vector<train::Phase> phases{{s.instances, 1, 1e-3, false}};
  CHECK_THROWS_AS(train::run_plan(lm, phases, {}, s.vocab, options), std::invalid_argument);
}

TEST_SUITE_END();
