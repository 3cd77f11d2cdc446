#include "memlab/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace memlab::tok {

namespace {
const char* kSpecialSurfaces[kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<sep>"};
}

std::string normalize_ws(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool in_token = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_token = false;
    } else {
      if (!in_token && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_token = true;
    }
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

Vocab Vocab::build(std::span<const std::string> corpus_strings) {
  std::set<std::string> tokens;
  for (const std::string& s : corpus_strings) {
    for (std::string& t : split_ws(s)) tokens.insert(std::move(t));
  }
  Vocab v;
  for (const char* sp : kSpecialSurfaces) {
    v.token_to_id_.emplace(sp, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.emplace_back(sp);
  }
  for (const std::string& t : tokens) {  // std::set iterates in sorted order
    if (v.token_to_id_.count(t)) continue;
    v.token_to_id_.emplace(t, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(t);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) {
    throw std::invalid_argument("Vocab: out-of-vocabulary token \"" + token + "\"");
  }
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::invalid_argument("Vocab: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& t : split_ws(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kNumSpecials) continue;
    const std::string& t = token(id);
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Vocab::save: cannot open " + path);
  for (const std::string& t : id_to_token_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Vocab::load: cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    v.token_to_id_.emplace(line, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(line);
  }
  for (int i = 0; i < kNumSpecials; ++i) {
    if (v.size() <= i || v.id_to_token_[static_cast<std::size_t>(i)] != kSpecialSurfaces[i]) {
      throw std::runtime_error("Vocab::load: " + path + " does not start with the special tokens");
    }
  }
  return v;
}

}  // namespace memlab::tok
