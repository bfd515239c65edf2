#include "noie/vocab.hpp"

#include <algorithm>
#include <stdexcept>

#include "noie/types.hpp"

namespace noie {

const std::vector<std::string>& Vocabulary::specials() {
  static const std::vector<std::string> s = {
      "<pad>", "<unk>", "<bos>", "<eos>",  "<arg1>", "</arg1>",
      "<rel>", "</rel>", "<arg2>", "</arg2>"};
  return s;
}

Vocabulary::Vocabulary() {
  tokens_ = specials();
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    ids_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::build(const std::map<std::string, long long>& counts,
                             std::size_t max_size) {
  if (max_size <= kNumSpecials)
    throw DataError("vocabulary max_size must exceed " +
                    std::to_string(int(kNumSpecials)));
  Vocabulary v;
  std::vector<std::pair<long long, std::string>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [tok, n] : counts) {
    if (v.ids_.count(tok)) continue;  // specials stay at their reserved ids
    ranked.emplace_back(n, tok);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (const auto& [n, tok] : ranked) {
    (void)n;
    if (v.tokens_.size() >= max_size) break;
    v.ids_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             std::size_t max_size) {
  std::map<std::string, long long> counts;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) ++counts[tok];
  return build(counts, max_size);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumSpecials)
    throw DataError("vocabulary token list too short for the reserved specials");
  for (int i = 0; i < kNumSpecials; ++i)
    if (tokens[static_cast<std::size_t>(i)] != specials()[static_cast<std::size_t>(i)])
      throw DataError("vocabulary token list does not start with the reserved specials");
  Vocabulary v;
  v.tokens_ = tokens;
  v.ids_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!v.ids_.emplace(tokens[i], static_cast<int>(i)).second)
      throw DataError("duplicate token in vocabulary list: " + tokens[i]);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.find(token) != ids_.end();
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

}  // namespace noie
