#include "memlab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "memlab/tokenizer.hpp"

namespace memlab::corpus {

std::string to_string(IdKind k) {
  switch (k) {
    case IdKind::kNum: return "num";
    case IdKind::kRare: return "rare";
    case IdKind::kTitle: return "title";
  }
  return "num";
}

std::string to_string(PassageKind k) { return k == PassageKind::kRand ? "rand" : "fact"; }

std::string to_string(PermMode m) {
  switch (m) {
    case PermMode::kNone: return "none";
    case PermMode::kFirst: return "first";
    case PermMode::kRandomK: return "random_k";
    case PermMode::kDupJ: return "dup_j";
  }
  return "none";
}

IdKind id_kind_from(const std::string& s) {
  if (s == "num") return IdKind::kNum;
  if (s == "rare") return IdKind::kRare;
  if (s == "title") return IdKind::kTitle;
  throw std::invalid_argument("unknown id kind: " + s);
}

PassageKind passage_kind_from(const std::string& s) {
  if (s == "rand") return PassageKind::kRand;
  if (s == "fact") return PassageKind::kFact;
  throw std::invalid_argument("unknown passage kind: " + s);
}

PermMode perm_mode_from(const std::string& s) {
  if (s == "none") return PermMode::kNone;
  if (s == "first") return PermMode::kFirst;
  if (s == "random_k") return PermMode::kRandomK;
  if (s == "dup_j") return PermMode::kDupJ;
  throw std::invalid_argument("unknown permutation mode: " + s);
}

std::string content_token(int i) { return "t" + std::to_string(i); }
std::string rare_token(int i) { return "r" + std::to_string(i); }
std::string name_token(int i) { return "n" + std::to_string(i); }
std::string attr_token(int i) { return "a" + std::to_string(i); }
std::string value_token(int i) { return "v" + std::to_string(i); }
std::string entity_token(int i) { return "e" + std::to_string(i); }
std::string marker_token(int j) { return "[" + std::to_string(j) + "]"; }

const Passage& Corpus::by_id(const std::string& surface) const {
  for (const Passage& p : passages) {
    if (p.id.surface == surface) return p;
  }
  throw std::invalid_argument("Corpus: no passage with id \"" + surface + "\"");
}

std::vector<QAPair> Corpus::qa_for(const std::vector<int>& passage_indices) const {
  std::unordered_set<std::string> wanted;
  for (int i : passage_indices) wanted.insert(passages[static_cast<std::size_t>(i)].id.surface);
  std::vector<QAPair> out;
  for (const QAPair& q : qa) {
    if (wanted.count(q.passage_id)) out.push_back(q);
  }
  return out;
}

Passage gen_random_passage(RngState& rng, int n_sentences, int tokens_per_sentence,
                           int alphabet_size) {
  if (n_sentences < 1 || tokens_per_sentence < 1 || alphabet_size < 1) {
    throw std::invalid_argument("gen_random_passage: all arguments must be >= 1");
  }
  Passage p;
  p.kind = PassageKind::kRand;
  std::set<std::string> seen;
  for (int s = 0; s < n_sentences; ++s) {
    // Resample on (astronomically rare) duplicate sentences so that
    // adjacent-sentence probes stay unambiguous.
    while (true) {
      std::string sentence;
      for (int t = 0; t < tokens_per_sentence; ++t) {
        if (t) sentence.push_back(' ');
        sentence += content_token(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(alphabet_size))));
      }
      sentence += " .";
      if (seen.insert(sentence).second || alphabet_size == 1) {
        p.sentences.push_back(std::move(sentence));
        break;
      }
    }
  }
  return p;
}

std::vector<PassageId> gen_ids(RngState& rng, IdKind kind, int n, int pool_size) {
  if (n < 1) throw std::invalid_argument("gen_ids: n must be >= 1");
  std::vector<PassageId> out;
  out.reserve(static_cast<std::size_t>(n));
  if (kind == IdKind::kNum) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    shuffle(std::span<int>(order), rng);
    int width = 3;
    for (long v = n - 1; v >= 1000; v /= 10) ++width;
    for (int i = 0; i < n; ++i) {
      std::ostringstream surface;
      surface << "#";
      std::string digits = std::to_string(order[static_cast<std::size_t>(i)]);
      surface << std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(digits.size(), static_cast<std::size_t>(width)), '0') << digits;
      out.push_back({kind, surface.str()});
    }
    return out;
  }
  const int tokens_per_id = kind == IdKind::kRare ? 3 : 2;
  std::set<std::string> used;
  long attempts = 0;
  const long max_attempts = 1000L * n + 1000;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > max_attempts) {
      throw std::runtime_error("gen_ids: pool of " + std::to_string(pool_size) +
                               " tokens exhausted generating " + std::to_string(n) + " unique ids");
    }
    std::string surface;
    for (int t = 0; t < tokens_per_id; ++t) {
      if (t) surface.push_back(' ');
      const int pick = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(pool_size)));
      surface += kind == IdKind::kRare ? rare_token(pick) : name_token(pick);
    }
    if (used.insert(surface).second) out.push_back({kind, surface});
  }
  return out;
}

FactPassage gen_fact_passage(RngState& rng, int n_facts, int entity_index, int attr_pool,
                             int value_pool) {
  if (n_facts < 1) throw std::invalid_argument("gen_fact_passage: n_facts must be >= 1");
  if (attr_pool < n_facts) {
    throw std::invalid_argument("gen_fact_passage: attr pool smaller than fact count");
  }
  if (value_pool < n_facts) {
    throw std::invalid_argument("gen_fact_passage: value pool smaller than fact count");
  }
  // Distinct attrs and distinct vals within the passage keep every answer
  // token unique to its sentence.
  std::vector<int> attrs(static_cast<std::size_t>(attr_pool));
  std::iota(attrs.begin(), attrs.end(), 0);
  shuffle(std::span<int>(attrs), rng);
  std::vector<int> vals(static_cast<std::size_t>(value_pool));
  std::iota(vals.begin(), vals.end(), 0);
  shuffle(std::span<int>(vals), rng);

  FactPassage out;
  out.passage.kind = PassageKind::kFact;
  const std::string entity = entity_token(entity_index);
  for (int f = 0; f < n_facts; ++f) {
    const std::string attr = attr_token(attrs[static_cast<std::size_t>(f)]);
    const std::string val = value_token(vals[static_cast<std::size_t>(f)]);
    out.passage.sentences.push_back("the " + attr + " of " + entity + " is " + val + " .");
    QAPair qa;
    qa.question = "what is the " + attr + " of " + entity + " ?";
    qa.answer = val;
    qa.answer_sentence_index = f;
    out.qa.push_back(std::move(qa));
  }
  return out;
}

std::string add_sentence_markers(const Passage& p) {
  return body_text(p, identity_order(p.sentence_count()), true);
}

std::string body_text(const Passage& p, const std::vector<int>& order, bool marked) {
  std::string out;
  for (int idx : order) {
    if (idx < 0 || idx >= p.sentence_count()) {
      throw std::invalid_argument("body_text: sentence index out of range");
    }
    const std::string& s = p.sentences[static_cast<std::size_t>(idx)];
    if (!out.empty()) out.push_back(' ');
    if (marked) {
      const std::string m = marker_token(idx);
      out += m + " " + s + " " + m;
    } else {
      out += s;
    }
  }
  return out;
}

std::string body_text(const Passage& p, bool marked) {
  return body_text(p, identity_order(p.sentence_count()), marked);
}

std::vector<int> identity_order(int j) {
  std::vector<int> order(static_cast<std::size_t>(j));
  std::iota(order.begin(), order.end(), 0);
  return order;
}

std::vector<std::vector<int>> permute_first(const Passage& p) {
  const int j = p.sentence_count();
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(j));
  for (int front = 0; front < j; ++front) {
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(j));
    order.push_back(front);
    for (int s = 0; s < j; ++s) {
      if (s != front) order.push_back(s);
    }
    out.push_back(std::move(order));
  }
  return out;
}

std::vector<std::vector<int>> permute_random_k(const Passage& p, int k, RngState& rng) {
  if (k < 1) throw std::invalid_argument("permute_random_k: k must be >= 1");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    std::vector<int> order = identity_order(p.sentence_count());
    shuffle(std::span<int>(order), rng);
    out.push_back(std::move(order));
  }
  return out;
}

std::vector<std::vector<int>> duplicate_j(const Passage& p) {
  return std::vector<std::vector<int>>(static_cast<std::size_t>(p.sentence_count()),
                                       identity_order(p.sentence_count()));
}

std::vector<std::vector<int>> write_orderings(const Passage& p, const PermutationSpec& spec,
                                              RngState& rng) {
  switch (spec.mode) {
    case PermMode::kNone:
      return {identity_order(p.sentence_count())};
    case PermMode::kFirst:
      return permute_first(p);
    case PermMode::kDupJ:
      return duplicate_j(p);
    case PermMode::kRandomK: {
      std::vector<std::vector<int>> out;
      if (!spec.replace_original) out.push_back(identity_order(p.sentence_count()));
      for (std::vector<int>& o : permute_random_k(p, spec.k, rng)) out.push_back(std::move(o));
      return out;
    }
  }
  return {identity_order(p.sentence_count())};
}

Corpus split_corpus(std::vector<Passage> passages, int train_count, int val_count, RngState& rng) {
  if (train_count < 0 || val_count < 0 ||
      static_cast<std::size_t>(train_count) + static_cast<std::size_t>(val_count) !=
          passages.size()) {
    throw std::invalid_argument("split_corpus: T + V must equal the passage count (T=" +
                                std::to_string(train_count) + ", V=" + std::to_string(val_count) +
                                ", M=" + std::to_string(passages.size()) + ")");
  }
  std::vector<int> order = identity_order(static_cast<int>(passages.size()));
  shuffle(std::span<int>(order), rng);
  Corpus c;
  c.passages = std::move(passages);
  c.train_indices.assign(order.begin(), order.begin() + train_count);
  c.val_indices.assign(order.begin() + train_count, order.end());
  std::sort(c.train_indices.begin(), c.train_indices.end());
  std::sort(c.val_indices.begin(), c.val_indices.end());
  return c;
}

void Corpus::save(const std::string& passages_path, const std::string& qa_path) const {
  std::ofstream out(passages_path, std::ios::binary);
  if (!out) throw std::runtime_error("Corpus::save: cannot open " + passages_path);
  for (const Passage& p : passages) {
    out << p.id.surface << '\t' << to_string(p.kind) << '\t';
    for (std::size_t s = 0; s < p.sentences.size(); ++s) {
      if (s) out << '|';
      out << p.sentences[s];
    }
    out << '\n';
  }
  std::ofstream qout(qa_path, std::ios::binary);
  if (!qout) throw std::runtime_error("Corpus::save: cannot open " + qa_path);
  for (const QAPair& q : qa) {
    qout << q.question_id << '\t' << q.passage_id << '\t' << q.question << '\t' << q.answer << '\t'
         << q.answer_sentence_index << '\n';
  }
}

namespace {
std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

int split_ws_count(const std::string& s) { return static_cast<int>(tok::split_ws(s).size()); }
}  // namespace

Corpus Corpus::load(const std::string& passages_path, const std::string& qa_path) {
  std::ifstream in(passages_path, std::ios::binary);
  if (!in) throw std::runtime_error("Corpus::load: cannot open " + passages_path);
  Corpus c;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = split_on(line, '\t');
    if (f.size() != 3) throw std::runtime_error("Corpus::load: malformed passage line");
    Passage p;
    p.id.surface = f[0];
    // The id kind is recoverable from the surface shape.
    p.id.kind = f[0].starts_with("#")          ? IdKind::kNum
                : split_ws_count(f[0]) == 3 ? IdKind::kRare
                                            : IdKind::kTitle;
    p.kind = passage_kind_from(f[1]);
    p.sentences = split_on(f[2], '|');
    // The train/val split travels in the instance files, not here; a loaded
    // corpus defaults to all-train.
    c.train_indices.push_back(static_cast<int>(c.passages.size()));
    c.passages.push_back(std::move(p));
  }
  std::ifstream qin(qa_path, std::ios::binary);
  if (qin) {
    while (std::getline(qin, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f = split_on(line, '\t');
      if (f.size() != 5) throw std::runtime_error("Corpus::load: malformed qa line");
      QAPair q;
      q.question_id = f[0];
      q.passage_id = f[1];
      q.question = f[2];
      q.answer = f[3];
      q.answer_sentence_index = std::stoi(f[4]);
      c.qa.push_back(std::move(q));
    }
  }
  return c;
}

}  // namespace memlab::corpus
