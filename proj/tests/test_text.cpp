#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "noie/rng.hpp"
#include "noie/tuples.hpp"
#include "noie/types.hpp"
#include "noie/vocab.hpp"

using namespace noie;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "noie_text_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

TuplePair example_pair() {
  TuplePair p;
  p.sentence = tokenize("deep learning is a subfield of machine learning");
  p.arg1 = {"deep", "learning"};
  p.rel = {"is", "a", "subfield", "of"};
  p.arg2 = {"machine", "learning"};
  p.confidence = 0.95;
  return p;
}

// Random valid tuples for round-trip and fuzz coverage.
TuplePair random_pair(Rng& rng) {
  static const std::vector<std::string> words = {"a", "b",  "c",  "dd", "ee",
                                                 "f", "gg", "hh", "ii", "jj"};
  auto span = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::string> out;
    std::size_t n = lo + rng.below(hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i)
      out.push_back(words[std::size_t(rng.below(words.size()))]);
    return out;
  };
  TuplePair p;
  p.arg1 = span(1, 3);
  p.rel = span(1, 3);
  p.arg2 = span(1, 3);
  p.sentence = p.arg1;
  p.sentence.insert(p.sentence.end(), p.rel.begin(), p.rel.end());
  p.sentence.insert(p.sentence.end(), p.arg2.begin(), p.arg2.end());
  p.confidence = rng.next_double();
  return p;
}

}  // namespace

TEST_CASE("tokenize: whitespace splitting") {
  CHECK(tokenize("deep learning is a subfield of machine learning").size() == 8);
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t \n ").empty());
  auto toks = tokenize("Instead , much of numerical analysis");
  REQUIRE(toks.size() == 6);
  CHECK(toks[0] == "Instead");
  CHECK(toks[1] == ",");
  CHECK(toks[5] == "analysis");
}

TEST_CASE("vocabulary: empty corpus keeps exactly the specials") {
  Vocabulary v = Vocabulary::build(std::vector<std::vector<std::string>>{}, 100);
  CHECK(v.size() == 10);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kArg1Open) == "<arg1>");
  CHECK(v.token(Vocabulary::kArg2Close) == "</arg2>");
  CHECK(v.id("anything") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary: frequency order with lexicographic ties") {
  Vocabulary v =
      Vocabulary::build(std::vector<std::vector<std::string>>{{"a", "a", "b"}}, 12);
  CHECK(v.size() == 12);
  CHECK(v.id("a") == 10);
  CHECK(v.id("b") == 11);
}

TEST_CASE("vocabulary: max_size truncates to the most frequent") {
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> sent;
    // token t_i appears 100-i times across the corpus
    for (int j = i; j < 100; ++j) sent.push_back("t" + std::to_string(j));
    corpus.push_back(sent);
  }
  Vocabulary v = Vocabulary::build(corpus, 20);
  CHECK(v.size() == 20);
  CHECK(v.contains("t99"));  // most frequent
  CHECK(v.contains("t90"));
  CHECK_FALSE(v.contains("t89"));
}

TEST_CASE("vocabulary: ids stable across rebuilds") {
  Rng rng(17);
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> sent;
    for (int j = 0; j < 8; ++j)
      sent.push_back("w" + std::to_string(rng.below(30)));
    corpus.push_back(sent);
  }
  Vocabulary a = Vocabulary::build(corpus, 25);
  Vocabulary b = Vocabulary::build(corpus, 25);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.token(int(i)) == b.token(int(i)));
}

TEST_CASE("encode_tuple reproduces the tagged serialization") {
  auto seq = encode_tuple(example_pair());
  CHECK(join_tokens(seq) ==
        "<arg1> deep learning </arg1> <rel> is a subfield of </rel> "
        "<arg2> machine learning </arg2>");
}

TEST_CASE("encode_tuple: empty slot is a validation error") {
  TuplePair p = example_pair();
  p.arg2.clear();
  CHECK_THROWS_AS(encode_tuple(p), DataError);
}

TEST_CASE("parse_tagged inverts encode_tuple") {
  auto parsed = parse_tagged(encode_tuple(example_pair()));
  REQUIRE(parsed.has_value());
  CHECK(parsed->arg1 == example_pair().arg1);
  CHECK(parsed->rel == example_pair().rel);
  CHECK(parsed->arg2 == example_pair().arg2);
}

TEST_CASE("parse_tagged: missing close tag") {
  auto seq = tokenize("<arg1> a </arg1> <rel> r <arg2> b </arg2>");
  TagParseError err;
  CHECK_FALSE(parse_tagged(seq, &err).has_value());
  CHECK(err.kind == TagParseError::MissingTag);
  CHECK(err.position == 5);  // <arg2> where </rel> was expected
}

TEST_CASE("parse_tagged: out-of-order tags") {
  auto seq = tokenize("<arg2> b </arg2> <rel> r </rel> <arg1> a </arg1>");
  TagParseError err;
  CHECK_FALSE(parse_tagged(seq, &err).has_value());
  CHECK(err.kind == TagParseError::OutOfOrderTag);
  CHECK(err.position == 0);
}

TEST_CASE("parse_tagged: empty slot and trailing tokens") {
  TagParseError err;
  CHECK_FALSE(parse_tagged(tokenize("<arg1> </arg1> <rel> r </rel> <arg2> b </arg2>"),
                           &err)
                  .has_value());
  CHECK(err.kind == TagParseError::EmptySlot);

  CHECK_FALSE(
      parse_tagged(tokenize("<arg1> a </arg1> <rel> r </rel> <arg2> b </arg2> x"), &err)
          .has_value());
  CHECK(err.kind == TagParseError::TrailingTokens);
  CHECK(err.position == 9);
}

TEST_CASE("codec round trip over random tuples") {
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    TuplePair p = random_pair(rng);
    auto parsed = parse_tagged(encode_tuple(p));
    REQUIRE(parsed.has_value());
    CHECK(parsed->arg1 == p.arg1);
    CHECK(parsed->rel == p.rel);
    CHECK(parsed->arg2 == p.arg2);
  }
}

TEST_CASE("parse_tagged never throws on arbitrary token lists") {
  Rng rng(7);
  const auto& sp = Vocabulary::specials();
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::string> seq;
    std::size_t n = rng.below(14);
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.below(2) == 0) {
        seq.push_back(sp[4 + rng.below(6)]);
      } else {
        seq.push_back("tok" + std::to_string(rng.below(5)));
      }
    }
    TagParseError err;
    auto out = parse_tagged(seq, &err);  // must return, never crash
    if (out) {
      CHECK_FALSE(out->arg1.empty());
      CHECK_FALSE(out->rel.empty());
      CHECK_FALSE(out->arg2.empty());
    }
  }
}

TEST_CASE("filter_pair: default thresholds and boundaries") {
  TuplePair p = example_pair();
  p.confidence = 0.95;
  CHECK(filter_pair(p));
  p.confidence = 0.9;
  CHECK(filter_pair(p));  // boundary kept
  p.confidence = 0.89;
  CHECK_FALSE(filter_pair(p));

  TuplePair long_p;
  long_p.arg1 = {"w0"};
  long_p.rel = {"w1"};
  long_p.arg2 = {"w2"};
  for (int i = 0; i < 41; ++i) long_p.sentence.push_back("w" + std::to_string(i % 3));
  long_p.confidence = 1.0;
  CHECK_FALSE(filter_pair(long_p));  // 41 words
  long_p.sentence.pop_back();
  CHECK(filter_pair(long_p));  // 40 words allowed
}

TEST_CASE("filter_pair rejects invalid tuples with a reason") {
  TuplePair p = example_pair();
  p.arg1 = {"not", "present"};
  std::string why;
  CHECK_FALSE(filter_pair(p, 40, 0.9, &why));
  CHECK(why.find("arg1") != std::string::npos);

  // non-contiguous subsequence is rejected: tokens occur but not as a span
  TuplePair q;
  q.sentence = tokenize("a b c d");
  q.arg1 = {"a", "c"};
  q.rel = {"b"};
  q.arg2 = {"d"};
  CHECK_FALSE(filter_pair(q, 40, 0.0, &why));
}

TEST_CASE("filter_pair is monotone in its thresholds") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    TuplePair p = random_pair(rng);
    std::size_t len1 = 2 + rng.below(12), len2 = 2 + rng.below(12);
    double c1 = rng.next_double(), c2 = rng.next_double();
    if (len1 < len2) std::swap(len1, len2);  // len2 is stricter
    if (c1 > c2) std::swap(c1, c2);          // c2 is stricter
    if (filter_pair(p, len2, c2)) CHECK(filter_pair(p, len1, c1));
  }
}

TEST_CASE("load_pairs: well-formed file") {
  std::string path = temp_path("pairs_ok.tsv");
  {
    std::ofstream out(path);
    out << "a b c\ta\tb\tc\t0.95\n";
    out << "x y z\tx\ty\tz\t1\n";
    out << "p q r\tp\tq\tr\t0.5\n";
  }
  LoadStats stats;
  auto pairs = load_pairs(path, false, &stats);
  CHECK(pairs.size() == 3);
  CHECK(stats.kept == 3);
  CHECK(stats.skipped == 0);
  CHECK(pairs[0].confidence == doctest::Approx(0.95));
}

TEST_CASE("load_pairs: malformed lines are skipped and counted") {
  std::string path = temp_path("pairs_bad.tsv");
  {
    std::ofstream out(path);
    out << "a b c\ta\tb\tc\t0.95\n";
    out << "only\ttwo\n";
    out << "a b c\ta\tb\tc\tnot_a_number\n";
    out << "a b c\tz\tb\tc\t0.5\n";  // arg1 not a sub-span
  }
  LoadStats stats;
  auto pairs = load_pairs(path, false, &stats);
  CHECK(pairs.size() == 1);
  CHECK(stats.skipped == 3);
  CHECK(stats.first_error.find("line 2") != std::string::npos);

  CHECK_THROWS_AS(load_pairs(path, true), DataError);
}

TEST_CASE("load_pairs: empty file and missing file") {
  std::string path = temp_path("pairs_empty.tsv");
  { std::ofstream out(path); }
  LoadStats stats;
  CHECK(load_pairs(path, false, &stats).empty());
  CHECK(stats.lines == 0);
  CHECK_THROWS_AS(load_pairs(temp_path("no_such_file.tsv")), DataError);
}

TEST_CASE("save_pairs/load_pairs round trip") {
  Rng rng(31);
  std::vector<TuplePair> pairs;
  for (int i = 0; i < 20; ++i) pairs.push_back(random_pair(rng));
  std::string path = temp_path("pairs_rt.tsv");
  save_pairs(path, pairs);
  auto loaded = load_pairs(path);
  REQUIRE(loaded.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].sentence == pairs[i].sentence);
    CHECK(loaded[i].arg1 == pairs[i].arg1);
    CHECK(loaded[i].confidence == doctest::Approx(pairs[i].confidence).epsilon(1e-6));
  }
}

TEST_CASE("gen_synthetic: validity, determinism, filter compliance") {
  Rng rng(7);
  auto one = gen_synthetic(1, rng);
  REQUIRE(one.size() == 1);
  CHECK(tuple_valid(one[0]));

  Rng r1(123), r2(123);
  auto a = gen_synthetic(50, r1);
  auto b = gen_synthetic(50, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sentence == b[i].sentence);
    CHECK(a[i].arg1 == b[i].arg1);
    CHECK(a[i].rel == b[i].rel);
    CHECK(a[i].arg2 == b[i].arg2);
  }

  Rng r3(55);
  auto many = gen_synthetic(200, r3);
  CHECK(many.size() == 200);
  for (const auto& p : many) {
    CHECK(p.sentence.size() <= 12);
    CHECK(filter_pair(p));
  }
}

TEST_CASE("gen_synthetic covers a usable range of patterns") {
  Rng rng(2024);
  auto pairs = gen_synthetic(400, rng);
  std::set<std::string> rels, arg1s;
  for (const auto& p : pairs) {
    rels.insert(join_tokens(p.rel));
    arg1s.insert(join_tokens(p.arg1));
  }
  CHECK(rels.size() >= 10);
  CHECK(arg1s.size() >= 30);
}
