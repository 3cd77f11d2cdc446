#include "memlab/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace memlab::eval {

namespace {

bool is_article(const std::string& token) { return token == "a" || token == "an" || token == "the"; }

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::string normalize_answer(const std::string& s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (char c : s) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (std::ispunct(uc)) continue;
    lowered.push_back(static_cast<char>(std::tolower(uc)));
  }
  std::string out;
  for (const std::string& token : tok::split_ws(lowered)) {
    if (is_article(token)) continue;
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

int exact_match(const std::string& pred, const std::string& gold) {
  return tok::normalize_ws(pred) == tok::normalize_ws(gold) ? 1 : 0;
}

double token_f1(const std::string& pred, const std::string& gold) {
  const std::vector<std::string> p = tok::split_ws(pred);
  const std::vector<std::string> g = tok::split_ws(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, long> gold_counts;
  for (const std::string& t : g) ++gold_counts[t];
  long common = 0;
  for (const std::string& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double bleu(const std::string& pred, const std::string& gold) {
  const std::vector<std::string> p = tok::split_ws(pred);
  const std::vector<std::string> g = tok::split_ws(gold);
  if (p.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    std::map<std::string, long> gold_ngrams;
    for (std::size_t i = 0; i + n <= g.size(); ++i) {
      std::string key;
      for (int t = 0; t < n; ++t) key += g[i + static_cast<std::size_t>(t)] + "\x1f";
      ++gold_ngrams[key];
    }
    const long total = std::max<long>(static_cast<long>(p.size()) - n + 1, 0);
    long match = 0;
    std::map<std::string, long> pred_ngrams;
    for (std::size_t i = 0; i + n <= p.size(); ++i) {
      std::string key;
      for (int t = 0; t < n; ++t) key += p[i + static_cast<std::size_t>(t)] + "\x1f";
      ++pred_ngrams[key];
    }
    for (const auto& [key, count] : pred_ngrams) {
      auto it = gold_ngrams.find(key);
      if (it != gold_ngrams.end()) match += std::min(count, it->second);
    }
    double precision;
    if (n == 1) {
      if (match == 0) return 0.0;
      precision = static_cast<double>(match) / static_cast<double>(total);
    } else if (match == 0) {
      precision = 1.0 / static_cast<double>(total + 1);
    } else {
      precision = static_cast<double>(match) / static_cast<double>(total);
    }
    log_sum += 0.25 * std::log(precision);
  }
  const double bp = p.size() >= g.size()
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(g.size()) / static_cast<double>(p.size()));
  return 100.0 * bp * std::exp(log_sum);
}

std::pair<std::string, std::string> parse_recited_answer(const std::string& output, Task task) {
  std::string delim;
  std::string strip_prefix;
  switch (task) {
    case Task::kGroundedQa:
    case Task::kClosedBook:
    case Task::kOpenBook:
      delim = "|| Answer:";
      break;
    case Task::kOpenQa:
      delim = std::string(prompts::kNewline) + " Answer:";
      strip_prefix = "Related documents:";
      break;
    default:
      delim = "||";
      break;
  }
  const std::size_t pos = output.rfind(delim);
  if (pos == std::string::npos) return {"", trim(output)};
  std::string recitation = trim(output.substr(0, pos));
  if (!strip_prefix.empty() && recitation.rfind(strip_prefix, 0) == 0) {
    recitation = trim(recitation.substr(strip_prefix.size()));
  }
  return {recitation, trim(output.substr(pos + delim.size()))};
}

namespace {

std::string truncate_tokens(const std::string& s, int count) {
  const std::vector<std::string> tokens = tok::split_ws(s);
  std::string out;
  for (std::size_t i = 0; i < tokens.size() && i < static_cast<std::size_t>(count); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace

EvalResult score_prediction(const std::string& pred, const prompts::Instance& inst, Task task) {
  EvalResult r;
  r.meta = inst.meta;
  r.gold = inst.target;
  r.pred = pred;

  auto [gold_rec, gold_ans] = parse_recited_answer(inst.target, task);
  std::string pred_ans = pred;
  if (!gold_rec.empty()) {
    auto [pred_rec, parsed_ans] = parse_recited_answer(pred, task);
    pred_ans = parsed_ans;
    r.has_recitation = true;
    r.recite_bleu = bleu(pred_rec, gold_rec);
  }

  if (task == Task::kCapacitySweep) {
    // Scored on the first 25 tokens: generation tends to run past the
    // passage length.
    r.em = exact_match(truncate_tokens(pred_ans, 25), truncate_tokens(gold_ans, 25));
    r.bleu = bleu(pred_ans, gold_ans);
    r.f1 = token_f1(pred_ans, gold_ans);
  } else if (is_qa_task(task)) {
    const std::string np = normalize_answer(pred_ans);
    const std::string ng = normalize_answer(gold_ans);
    r.em = exact_match(np, ng);
    r.f1 = token_f1(np, ng);
    r.bleu = bleu(pred_ans, gold_ans);
  } else {
    r.em = exact_match(pred_ans, gold_ans);
    r.bleu = bleu(pred_ans, gold_ans);
    r.f1 = token_f1(pred_ans, gold_ans);
  }
  return r;
}

MetricsReport evaluate_readset(const model::TransformerLM& m,
                               std::span<const prompts::Instance> instances, Task task,
                               const tok::Vocab& vocab, int max_new,
                               std::vector<EvalResult>* dump, int threads) {
  if (max_new <= 0) {
    for (const prompts::Instance& inst : instances) {
      max_new = std::max(max_new, static_cast<int>(tok::split_ws(inst.target).size()) + 4);
    }
    if (max_new <= 0) max_new = 8;
  }
  std::vector<std::string> preds(instances.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(instances.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      preds[i] = m.generate_greedy(instances[i].prompt, max_new, vocab);
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < instances.size();
             i += static_cast<std::size_t>(workers)) {
          preds[i] = m.generate_greedy(instances[i].prompt, max_new, vocab);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  MetricsReport report;
  double recite_sum = 0.0;
  long recite_count = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const prompts::Instance& inst = instances[i];
    EvalResult r = score_prediction(preds[i], inst, task);
    report.total += 1;
    report.mean_em += r.em;
    report.mean_bleu += r.bleu;
    report.mean_f1 += r.f1;
    if (r.has_recitation) {
      recite_sum += r.recite_bleu;
      ++recite_count;
    }
    IndexBucket& bucket = report.by_index[r.meta.sentence_index];
    bucket.count += 1;
    bucket.em_sum += r.em;
    if (dump) dump->push_back(std::move(r));
  }
  if (report.total > 0) {
    report.mean_em /= static_cast<double>(report.total);
    report.mean_bleu /= static_cast<double>(report.total);
    report.mean_f1 /= static_cast<double>(report.total);
  }
  report.has_recite = recite_count > 0;
  report.recite_bleu = recite_count ? recite_sum / static_cast<double>(recite_count) : 0.0;
  return report;
}

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "total: " << total << "\n";
  out << "em: " << mean_em << "\n";
  out << "bleu: " << mean_bleu << "\n";
  out << "f1: " << mean_f1 << "\n";
  if (has_recite) out << "recite_bleu: " << recite_bleu << "\n";
  for (const auto& [index, bucket] : by_index) {
    out << "index " << index << " count " << bucket.count << " em " << bucket.accuracy() << "\n";
  }
  return out.str();
}

MetricsReport MetricsReport::from_text(const std::string& text) {
  MetricsReport r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "total:") ls >> r.total;
    else if (key == "em:") ls >> r.mean_em;
    else if (key == "bleu:") ls >> r.mean_bleu;
    else if (key == "f1:") ls >> r.mean_f1;
    else if (key == "recite_bleu:") {
      ls >> r.recite_bleu;
      r.has_recite = true;
    } else if (key == "index") {
      int index;
      std::string word;
      long count;
      double em;
      ls >> index >> word >> count >> word >> em;
      r.by_index[index] = IndexBucket{count, em * static_cast<double>(count)};
    }
  }
  return r;
}

void save_results(const std::vector<EvalResult>& results, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_results: cannot open " + path);
  out.precision(17);
  for (const EvalResult& r : results) {
    out << r.meta.serialize() << '\t' << r.gold << '\t' << r.pred << '\t' << r.em << '\t' << r.bleu
        << '\t' << r.f1 << '\n';
  }
}

}  // namespace memlab::eval
