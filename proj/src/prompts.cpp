#include "memlab/prompts.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "memlab/tokenizer.hpp"

namespace memlab::prompts {

std::string to_string(MaskPolicy m) { return m == MaskPolicy::kFull ? "full" : "target_only"; }
std::string to_string(IdMode m) {
  switch (m) {
    case IdMode::kGolden: return "golden";
    case IdMode::kRandom: return "random";
    case IdMode::kNone: return "none";
  }
  return "golden";
}

MaskPolicy mask_policy_from(const std::string& s) {
  if (s == "full") return MaskPolicy::kFull;
  if (s == "target_only") return MaskPolicy::kTargetOnly;
  throw std::invalid_argument("unknown mask policy: " + s);
}

IdMode id_mode_from(const std::string& s) {
  if (s == "golden") return IdMode::kGolden;
  if (s == "random") return IdMode::kRandom;
  if (s == "none") return IdMode::kNone;
  throw std::invalid_argument("unknown id mode: " + s);
}

std::string InstanceMeta::serialize() const {
  std::ostringstream out;
  out << "task=" << task << ";pid=" << passage_id << ";j=" << sentence_index << ";qid=" << question_id
      << ";dir=" << direction;
  return out.str();
}

InstanceMeta InstanceMeta::parse(const std::string& s) {
  InstanceMeta meta;
  std::istringstream in(s);
  std::string field;
  while (std::getline(in, field, ';')) {
    const std::size_t eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "task") meta.task = value;
    else if (key == "pid") meta.passage_id = value;
    else if (key == "j") meta.sentence_index = std::stoi(value);
    else if (key == "qid") meta.question_id = value;
    else if (key == "dir") meta.direction = value;
  }
  return meta;
}

namespace {

InstanceMeta make_meta(std::string task, const corpus::Passage& p, int j = -1) {
  InstanceMeta meta;
  meta.task = std::move(task);
  meta.passage_id = p.id.surface;
  meta.sentence_index = j;
  return meta;
}

}  // namespace

Instance render_write(const corpus::Passage& p, const std::vector<int>& order, bool marked) {
  Instance inst;
  inst.prompt = "Article " + p.id.surface + " , Content: " + corpus::body_text(p, order, marked);
  inst.mask = MaskPolicy::kFull;
  inst.meta = make_meta("write", p);
  return inst;
}

Instance render_write(const corpus::Passage& p, bool marked) {
  return render_write(p, corpus::identity_order(p.sentence_count()), marked);
}

Instance render_read_full(const corpus::Passage& p) {
  Instance inst;
  inst.prompt = "Article " + p.id.surface + " : What is the content of this article?";
  inst.target = corpus::body_text(p, false);
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta = make_meta("read_full", p);
  return inst;
}

Instance render_read_sentence(const corpus::Passage& p, int j, bool recite) {
  if (j < 0 || j >= p.sentence_count()) {
    throw std::invalid_argument("render_read_sentence: sentence index " + std::to_string(j) +
                                " out of range for passage " + p.id.surface);
  }
  Instance inst;
  inst.prompt = "Article " + p.id.surface + " : What is Sentence " + corpus::marker_token(j) +
                " of this article?";
  const std::string& sentence = p.sentences[static_cast<std::size_t>(j)];
  inst.target = recite ? corpus::body_text(p, true) + " " + kReciteSep + " " + sentence : sentence;
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta = make_meta("read_sentence", p, j);
  return inst;
}

Instance render_read_positional(const corpus::Passage& p, Positional which, bool recite) {
  const int j = p.sentence_count();
  if (which == Positional::kSecond && j < 2) {
    throw std::invalid_argument("render_read_positional: passage " + p.id.surface +
                                " has no second sentence");
  }
  const char* word = which == Positional::kFirst ? "first"
                     : which == Positional::kSecond ? "second"
                                                    : "last";
  const int index = which == Positional::kFirst ? 0 : which == Positional::kSecond ? 1 : j - 1;
  Instance inst;
  inst.prompt = "Article " + p.id.surface + " : What is the " + word +
                " sentence of this article?";
  const std::string& sentence = p.sentences[static_cast<std::size_t>(index)];
  inst.target = recite ? corpus::body_text(p, false) + " " + kReciteSep + " " + sentence : sentence;
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta = make_meta("positional", p, index);
  return inst;
}

Instance render_read_adjacent(const corpus::Passage& p, const std::string& sentence, Direction dir,
                              bool recite) {
  int found = -1;
  for (int i = 0; i < p.sentence_count(); ++i) {
    if (p.sentences[static_cast<std::size_t>(i)] == sentence) {
      if (found >= 0) {
        throw std::invalid_argument("render_read_adjacent: sentence occurs more than once in " +
                                    p.id.surface);
      }
      found = i;
    }
  }
  if (found < 0) {
    throw std::invalid_argument("render_read_adjacent: sentence not found in " + p.id.surface);
  }
  const int target_index = dir == Direction::kNext ? found + 1 : found - 1;
  if (target_index < 0 || target_index >= p.sentence_count()) {
    throw std::invalid_argument("render_read_adjacent: no sentence " +
                                std::string(dir == Direction::kNext ? "after" : "before") +
                                " index " + std::to_string(found) + " in " + p.id.surface);
  }
  Instance inst;
  inst.prompt = "Article " + p.id.surface + " : What is the sentence " +
                (dir == Direction::kNext ? "after" : "before") + " : " + sentence;
  const std::string& target = p.sentences[static_cast<std::size_t>(target_index)];
  inst.target = recite ? corpus::body_text(p, false) + " " + kReciteSep + " " + target : target;
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta = make_meta("adjacent", p, target_index);
  inst.meta.direction = dir == Direction::kNext ? "next" : "prev";
  return inst;
}

Instance render_read_grounded_qa(const corpus::Corpus& c, const corpus::QAPair& qa, IdMode mode,
                                 bool recite, RngState& rng) {
  const corpus::Passage& golden = c.by_id(qa.passage_id);
  const corpus::Passage* named = &golden;
  if (mode == IdMode::kRandom) {
    if (c.passages.size() < 2) {
      throw std::invalid_argument("render_read_grounded_qa: random id mode needs >= 2 passages");
    }
    while (true) {
      const std::size_t pick =
          static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(c.passages.size())));
      if (c.passages[pick].id.surface != qa.passage_id) {
        named = &c.passages[pick];
        break;
      }
    }
  }
  Instance inst;
  if (mode == IdMode::kNone) {
    inst.prompt = std::string("Question: ") + qa.question + " " + kNewline + " Answer:";
  } else {
    inst.prompt = "Article " + named->id.surface + " " + kNewline + " Question: " + qa.question +
                  " " + kNewline + " Answer:";
  }
  if (recite) {
    // Recite the passage the prompt names; without an id, recite the golden
    // passage.
    const corpus::Passage& recited = mode == IdMode::kRandom ? *named : golden;
    inst.target = corpus::body_text(recited, false) + " " + kReciteSep + " Answer: " + qa.answer;
  } else {
    inst.target = qa.answer;
  }
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta.task = "grounded_qa";
  inst.meta.passage_id = qa.passage_id;
  inst.meta.sentence_index = qa.answer_sentence_index;
  inst.meta.question_id = qa.question_id;
  return inst;
}

Instance render_write_doc(const corpus::Passage& p, const std::vector<int>& order) {
  Instance inst;
  inst.prompt = "Document: " + corpus::body_text(p, order, false);
  inst.mask = MaskPolicy::kFull;
  inst.meta = make_meta("write_doc", p);
  return inst;
}

Instance render_write_doc(const corpus::Passage& p) {
  return render_write_doc(p, corpus::identity_order(p.sentence_count()));
}

Instance render_open_qa(const corpus::Corpus& c, const corpus::QAPair& qa, bool recite) {
  const corpus::Passage& golden = c.by_id(qa.passage_id);
  Instance inst;
  inst.prompt = std::string("Question: ") + qa.question + " " + kNewline + " Answer:";
  if (recite) {
    inst.target = std::string("Related documents: ") + corpus::body_text(golden, false) + " " +
                  kNewline + " Answer: " + qa.answer;
  } else {
    inst.target = qa.answer;
  }
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta.task = "open_qa";
  inst.meta.passage_id = qa.passage_id;
  inst.meta.sentence_index = qa.answer_sentence_index;
  inst.meta.question_id = qa.question_id;
  return inst;
}

Instance render_open_book_qa(const corpus::Corpus& c, const corpus::QAPair& qa) {
  const corpus::Passage& golden = c.by_id(qa.passage_id);
  Instance inst;
  inst.prompt = "Content: " + corpus::body_text(golden, false) + " " + kNewline +
                " Question: " + qa.question + " " + kNewline + " Answer:";
  inst.target = qa.answer;
  inst.mask = MaskPolicy::kTargetOnly;
  inst.meta.task = "open_book";
  inst.meta.passage_id = qa.passage_id;
  inst.meta.sentence_index = qa.answer_sentence_index;
  inst.meta.question_id = qa.question_id;
  return inst;
}

void save_instances(const std::vector<Instance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_instances: cannot open " + path);
  for (const Instance& inst : instances) {
    if (inst.prompt.find('\t') != std::string::npos ||
        inst.target.find('\t') != std::string::npos) {
      throw std::invalid_argument("save_instances: tab inside prompt/target");
    }
    out << inst.prompt << '\t' << inst.target << '\t' << to_string(inst.mask) << '\t'
        << inst.meta.serialize() << '\n';
  }
}

std::vector<Instance> load_instances(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_instances: cannot open " + path);
  std::vector<Instance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == '\t') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    fields.push_back(cur);
    if (fields.size() != 4) throw std::runtime_error("load_instances: malformed line in " + path);
    Instance inst;
    inst.prompt = fields[0];
    inst.target = fields[1];
    inst.mask = mask_policy_from(fields[2]);
    inst.meta = InstanceMeta::parse(fields[3]);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace memlab::prompts
