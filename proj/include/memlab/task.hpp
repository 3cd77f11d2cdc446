#pragma once

#include <string>

namespace memlab {

enum class Task {
  kFullRecitation,
  kCapacitySweep,
  kSelectiveRecitation,
  kPositionalRecitation,
  kAdjacentRecitation,
  kGroundedQa,
  kOpenQa,
  kClosedBook,
  kOpenBook,
};

std::string to_string(Task t);
Task task_from(const std::string& s);

/// QA-style tasks score answers with SQuAD-style normalization; recitation
/// tasks require exact whitespace-normalized reproduction.
bool is_qa_task(Task t);

}  // namespace memlab
