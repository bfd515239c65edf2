#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace noie {

// Shared source/target token table. Ids 0-9 are reserved: PAD, UNK, BOS,
// EOS, then the six tuple placeholders. Remaining slots are filled by
// descending corpus frequency with lexicographic tie-breaking, so two
// builds from the same corpus assign identical ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kArg1Open = 4;
  static constexpr int kArg1Close = 5;
  static constexpr int kRelOpen = 6;
  static constexpr int kRelClose = 7;
  static constexpr int kArg2Open = 8;
  static constexpr int kArg2Close = 9;
  static constexpr int kNumSpecials = 10;

  static const std::vector<std::string>& specials();

  // Specials only.
  Vocabulary();

  // From pre-counted token frequencies.
  static Vocabulary build(const std::map<std::string, long long>& counts,
                          std::size_t max_size);
  // From an in-memory corpus of token lists.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t max_size);
  // From an explicit id-ordered token list (checkpoint load path).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace noie
