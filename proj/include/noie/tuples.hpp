#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "noie/rng.hpp"

namespace noie {

// One (sentence, extraction) training record. arg1/rel/arg2 must be
// non-empty contiguous token sub-spans of the sentence.
struct TuplePair {
  std::vector<std::string> sentence;
  std::vector<std::string> arg1, rel, arg2;
  double confidence = 1.0;
};

std::vector<std::string> tokenize(const std::string& text);

bool is_subspan(const std::vector<std::string>& needle,
                const std::vector<std::string>& haystack);

// Validity = non-empty slots, each a contiguous sub-span of the sentence,
// confidence in [0,1]. On failure `why` (if given) names the first problem.
bool tuple_valid(const TuplePair& p, std::string* why = nullptr);

// Tagged target sequence:
//   <arg1> ... </arg1> <rel> ... </rel> <arg2> ... </arg2>
// Throws DataError if a slot is empty.
std::vector<std::string> encode_tuple(const TuplePair& p);

struct TagParseError {
  enum Kind { MissingTag, OutOfOrderTag, EmptySlot, TrailingTokens };
  Kind kind;
  std::size_t position;  // first offending token index
  std::string message;
};

// Inverse of encode_tuple; never throws on arbitrary input. The returned
// pair carries no sentence and confidence 1.
std::optional<TuplePair> parse_tagged(const std::vector<std::string>& seq,
                                      TagParseError* err = nullptr);

// Bootstrap filter: sentence length and confidence thresholds plus the
// TuplePair invariants.
bool filter_pair(const TuplePair& p, std::size_t max_len = 40, double min_conf = 0.9,
                 std::string* why = nullptr);

struct LoadStats {
  std::size_t lines = 0;
  std::size_t kept = 0;
  std::size_t skipped = 0;
  std::string first_error;  // "line N: why" for the first malformed line
};

// Training-pair TSV: sentence \t arg1 \t rel \t arg2 \t confidence.
// Malformed lines are skipped and counted; in strict mode the first one
// throws DataError. Missing file throws DataError.
std::vector<TuplePair> load_pairs(const std::string& path, bool strict = false,
                                  LoadStats* stats = nullptr);

void save_pairs(const std::string& path, const std::vector<TuplePair>& pairs);

// Fixed template grammar over small noun/verb lexicons; sentences stay
// within 12 tokens and every pair passes filter_pair.
std::vector<TuplePair> gen_synthetic(std::size_t n, Rng& rng);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace noie
