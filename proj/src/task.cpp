#include "memlab/task.hpp"

#include <stdexcept>

namespace memlab {

std::string to_string(Task t) {
  switch (t) {
    case Task::kFullRecitation: return "full_recitation";
    case Task::kCapacitySweep: return "capacity_sweep";
    case Task::kSelectiveRecitation: return "selective_recitation";
    case Task::kPositionalRecitation: return "positional_recitation";
    case Task::kAdjacentRecitation: return "adjacent_recitation";
    case Task::kGroundedQa: return "grounded_qa";
    case Task::kOpenQa: return "open_qa";
    case Task::kClosedBook: return "closed_book";
    case Task::kOpenBook: return "open_book";
  }
  return "full_recitation";
}

Task task_from(const std::string& s) {
  if (s == "full_recitation") return Task::kFullRecitation;
  if (s == "capacity_sweep") return Task::kCapacitySweep;
  if (s == "selective_recitation") return Task::kSelectiveRecitation;
  if (s == "positional_recitation") return Task::kPositionalRecitation;
  if (s == "adjacent_recitation") return Task::kAdjacentRecitation;
  if (s == "grounded_qa") return Task::kGroundedQa;
  if (s == "open_qa") return Task::kOpenQa;
  if (s == "closed_book") return Task::kClosedBook;
  if (s == "open_book") return Task::kOpenBook;
  throw std::invalid_argument("unknown task: " + s);
}

bool is_qa_task(Task t) {
  return t == Task::kGroundedQa || t == Task::kOpenQa || t == Task::kClosedBook ||
         t == Task::kOpenBook;
}

}  // namespace memlab
