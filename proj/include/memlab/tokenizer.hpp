#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace memlab::tok {

// Reserved special ids, fixed order.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kNumSpecials = 4;

/// Collapse whitespace runs to single spaces and trim the ends.
std::string normalize_ws(const std::string& s);
std::vector<std::string> split_ws(const std::string& s);

/// Closed vocabulary over whitespace-separated tokens. Ids are dense in
/// [0, V); specials occupy 0..3; the rest is sorted lexicographically.
/// Immutable after build.
class Vocab {
 public:
  static Vocab build(std::span<const std::string> corpus_strings);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
  int id(const std::string& token) const;  // throws naming the token if absent
  const std::string& token(int id) const;

  std::vector<int> encode(const std::string& text) const;
  /// Inverse of encode on whitespace-normalized text; special ids are dropped.
  std::string decode(std::span<const int> ids) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace memlab::tok
