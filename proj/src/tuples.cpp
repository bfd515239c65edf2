#include "noie/tuples.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "noie/types.hpp"
#include "noie/vocab.hpp"

namespace noie {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool is_subspan(const std::vector<std::string>& needle,
                const std::vector<std::string>& haystack) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
  }
  return false;
}

bool tuple_valid(const TuplePair& p, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (p.arg1.empty()) return fail("empty arg1");
  if (p.rel.empty()) return fail("empty rel");
  if (p.arg2.empty()) return fail("empty arg2");
  if (p.sentence.empty()) return fail("empty sentence");
  if (!(p.confidence >= 0.0 && p.confidence <= 1.0))
    return fail("confidence outside [0,1]");
  if (!is_subspan(p.arg1, p.sentence)) return fail("arg1 is not a sentence sub-span");
  if (!is_subspan(p.rel, p.sentence)) return fail("rel is not a sentence sub-span");
  if (!is_subspan(p.arg2, p.sentence)) return fail("arg2 is not a sentence sub-span");
  return true;
}

std::vector<std::string> encode_tuple(const TuplePair& p) {
  if (p.arg1.empty() || p.rel.empty() || p.arg2.empty())
    throw DataError("encode_tuple: empty slot");
  const auto& sp = Vocabulary::specials();
  std::vector<std::string> out;
  out.reserve(p.arg1.size() + p.rel.size() + p.arg2.size() + 6);
  out.push_back(sp[Vocabulary::kArg1Open]);
  out.insert(out.end(), p.arg1.begin(), p.arg1.end());
  out.push_back(sp[Vocabulary::kArg1Close]);
  out.push_back(sp[Vocabulary::kRelOpen]);
  out.insert(out.end(), p.rel.begin(), p.rel.end());
  out.push_back(sp[Vocabulary::kRelClose]);
  out.push_back(sp[Vocabulary::kArg2Open]);
  out.insert(out.end(), p.arg2.begin(), p.arg2.end());
  out.push_back(sp[Vocabulary::kArg2Close]);
  return out;
}

namespace {

int tag_index(const std::string& tok) {
  const auto& sp = Vocabulary::specials();
  for (int t = Vocabulary::kArg1Open; t <= Vocabulary::kArg2Close; ++t)
    if (tok == sp[static_cast<std::size_t>(t)]) return t - Vocabulary::kArg1Open;
  return -1;
}

}  // namespace

std::optional<TuplePair> parse_tagged(const std::vector<std::string>& seq,
                                      TagParseError* err) {
  const auto& sp = Vocabulary::specials();
  auto fail = [&](TagParseError::Kind k, std::size_t pos,
                  const std::string& msg) -> std::optional<TuplePair> {
    if (err) *err = TagParseError{k, pos, msg};
    return std::nullopt;
  };

  TuplePair out;
  std::vector<std::string>* slots[3] = {&out.arg1, &out.rel, &out.arg2};
  // expected = next tag in the canonical order <arg1> </arg1> <rel> </rel> <arg2> </arg2>
  int expected = 0;
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    const std::string& tok = seq[pos];
    if (expected == 6)
      return fail(TagParseError::TrailingTokens, pos,
                  "tokens after " + sp[Vocabulary::kArg2Close]);
    const std::string& want = sp[static_cast<std::size_t>(Vocabulary::kArg1Open + expected)];
    int t = tag_index(tok);
    if (t == expected) {
      if (expected % 2 == 1 && slots[expected / 2]->empty())
        return fail(TagParseError::EmptySlot, pos, "empty slot before " + tok);
      ++expected;
      continue;
    }
    if (t >= 0) {
      // A tag, but not the expected one. If the expected tag still occurs
      // later the structure is reordered; otherwise it is missing.
      bool later = std::find(seq.begin() + static_cast<std::ptrdiff_t>(pos) + 1,
                             seq.end(), want) != seq.end();
      if (later)
        return fail(TagParseError::OutOfOrderTag, pos, tok + " before " + want);
      return fail(TagParseError::MissingTag, pos, "expected " + want + ", found " + tok);
    }
    // Plain token: only valid inside an open slot.
    if (expected % 2 == 1) {
      slots[expected / 2]->push_back(tok);
      continue;
    }
    bool later = std::find(seq.begin() + static_cast<std::ptrdiff_t>(pos), seq.end(),
                           want) != seq.end();
    if (later)
      return fail(TagParseError::OutOfOrderTag, pos,
                  "token '" + tok + "' before " + want);
    return fail(TagParseError::MissingTag, pos, "expected " + want + ", found '" + tok + "'");
  }
  if (expected < 6)
    return fail(TagParseError::MissingTag, seq.size(),
                "expected " + sp[static_cast<std::size_t>(Vocabulary::kArg1Open + expected)] +
                    " before end of sequence");
  return out;
}

bool filter_pair(const TuplePair& p, std::size_t max_len, double min_conf,
                 std::string* why) {
  if (!tuple_valid(p, why)) return false;
  if (p.sentence.size() > max_len) {
    if (why) *why = "sentence longer than " + std::to_string(max_len) + " words";
    return false;
  }
  if (p.confidence < min_conf) {
    if (why) *why = "confidence below threshold";
    return false;
  }
  return true;
}

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<TuplePair> load_pairs(const std::string& path, bool strict,
                                  LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<TuplePair> out;
  LoadStats local;
  std::string line;
  while (std::getline(in, line)) {
    ++local.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    std::string why;
    TuplePair p;
    bool ok = fields.size() == 5;
    if (!ok) {
      why = "expected 5 tab-separated fields, got " + std::to_string(fields.size());
    } else {
      p.sentence = tokenize(fields[0]);
      p.arg1 = tokenize(fields[1]);
      p.rel = tokenize(fields[2]);
      p.arg2 = tokenize(fields[3]);
      try {
        std::size_t used = 0;
        p.confidence = std::stod(fields[4], &used);
        if (used != fields[4].size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        ok = false;
        why = "unparseable confidence '" + fields[4] + "'";
      }
      if (ok) ok = tuple_valid(p, &why);
    }
    if (!ok) {
      std::string msg = "line " + std::to_string(local.lines) + ": " + why;
      if (strict) throw DataError(path + ": " + msg);
      if (local.first_error.empty()) local.first_error = msg;
      ++local.skipped;
      continue;
    }
    ++local.kept;
    out.push_back(std::move(p));
  }
  if (stats) *stats = local;
  return out;
}

void save_pairs(const std::string& path, const std::vector<TuplePair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  char conf[32];
  for (const auto& p : pairs) {
    std::snprintf(conf, sizeof(conf), "%.6f", p.confidence);
    out << join_tokens(p.sentence) << '\t' << join_tokens(p.arg1) << '\t'
        << join_tokens(p.rel) << '\t' << join_tokens(p.arg2) << '\t' << conf << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace noie
