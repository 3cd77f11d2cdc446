#pragma once

#include <string>
#include <vector>

#include "memlab/corpus.hpp"
#include "memlab/rng.hpp"
#include "memlab/task.hpp"

namespace memlab::prompts {

/// Newlines inside templates are carried by a dedicated vocab token so the
/// whitespace tokenizer can round-trip them.
inline constexpr const char* kNewline = "<nl>";
/// Separator between a recited passage and the extracted span.
inline constexpr const char* kReciteSep = "||";

enum class MaskPolicy { kFull, kTargetOnly };
enum class IdMode { kGolden, kRandom, kNone };
enum class Positional { kFirst, kSecond, kLast };
enum class Direction { kNext, kPrev };

std::string to_string(MaskPolicy m);
std::string to_string(IdMode m);
MaskPolicy mask_policy_from(const std::string& s);
IdMode id_mode_from(const std::string& s);

struct InstanceMeta {
  std::string task;
  std::string passage_id;
  int sentence_index = -1;  // -1 when not applicable
  std::string question_id;
  std::string direction;

  std::string serialize() const;
  static InstanceMeta parse(const std::string& s);
};

/// One training/evaluation record: a prompt, an optional target
/// continuation, and the loss-mask policy.
struct Instance {
  std::string prompt;
  std::string target;  // empty for pure write instances
  MaskPolicy mask = MaskPolicy::kFull;
  InstanceMeta meta;
};

// ---- write/read templates ----

Instance render_write(const corpus::Passage& p, const std::vector<int>& order, bool marked);
Instance render_write(const corpus::Passage& p, bool marked = false);

Instance render_read_full(const corpus::Passage& p);

Instance render_read_sentence(const corpus::Passage& p, int j, bool recite);

Instance render_read_positional(const corpus::Passage& p, Positional which, bool recite);

/// The neighbor probe: `sentence` must occur exactly once in the passage and
/// the requested neighbor must exist.
Instance render_read_adjacent(const corpus::Passage& p, const std::string& sentence, Direction dir,
                              bool recite);

/// Grounded QA. kRandom draws a uniformly random non-golden passage id.
/// With recite=true the target recites the passage named by the prompt's id
/// (the golden passage under kGolden/kNone).
Instance render_read_grounded_qa(const corpus::Corpus& c, const corpus::QAPair& qa, IdMode mode,
                                 bool recite, RngState& rng);

/// Open-domain variants: no ids anywhere.
Instance render_write_doc(const corpus::Passage& p, const std::vector<int>& order);
Instance render_write_doc(const corpus::Passage& p);
Instance render_open_qa(const corpus::Corpus& c, const corpus::QAPair& qa, bool recite);

/// The in-context reference point: passage body inlined before the question.
Instance render_open_book_qa(const corpus::Corpus& c, const corpus::QAPair& qa);

// ---- persistence (the on-disk instance format consumed by training) ----

void save_instances(const std::vector<Instance>& instances, const std::string& path);
std::vector<Instance> load_instances(const std::string& path);

}  // namespace memlab::prompts
