#include <array>
#include <string>
#include <vector>

#include "noie/tuples.hpp"

// Template corpus for desk-scale runs: NP VP NP sentences with optional
// opener and final period, drawn from small fixed lexicons.

namespace noie {

namespace {

const std::vector<std::string> kHeads = {
    "engine",   "system",   "library",  "protocol",  "network",  "compiler",
    "dataset",  "algorithm", "parser",  "kernel",    "module",   "framework",
    "pipeline", "cluster",  "index",    "scheduler", "cache",    "router",
    "browser",  "editor",   "database", "toolkit",   "runtime",  "debugger",
    "profiler", "sandbox"};

const std::vector<std::string> kModifiers = {
    "deep",   "fast",     "modern", "digital",  "neural",   "open",
    "robust", "scalable", "portable", "secure", "adaptive", "efficient"};

// Multi-token noun phrases, used as-is.
const std::vector<std::vector<std::string>> kEntities = {
    {"deep", "learning"},          {"machine", "learning"},
    {"numerical", "analysis"},     {"information", "extraction"},
    {"computer", "vision"},        {"signal", "processing"},
    {"graph", "theory"},           {"operations", "research"}};

const std::vector<std::vector<std::string>> kVerbs = {
    {"is", "a", "subfield", "of"},
    {"is", "based", "on"},
    {"depends", "on"},
    {"was", "designed", "for"},
    {"provides", "support", "for"},
    {"runs", "on"},
    {"extends"},
    {"improves"},
    {"is", "compatible", "with"},
    {"derives", "from"},
    {"interacts", "with"},
    {"relies", "on"}};

const std::vector<std::vector<std::string>> kOpeners = {
    {"however", ","}, {"moreover", ","}, {"in", "practice", ","}};

std::vector<std::string> noun_phrase(Rng& rng) {
  if (rng.next_double() < 0.25)
    return kEntities[static_cast<std::size_t>(rng.below(kEntities.size()))];
  std::vector<std::string> np;
  if (rng.next_double() < 0.5) np.push_back("the");
  if (rng.next_double() < 0.4)
    np.push_back(kModifiers[static_cast<std::size_t>(rng.below(kModifiers.size()))]);
  np.push_back(kHeads[static_cast<std::size_t>(rng.below(kHeads.size()))]);
  return np;
}

TuplePair one_pair(Rng& rng) {
  TuplePair p;
  p.arg1 = noun_phrase(rng);
  p.rel = kVerbs[static_cast<std::size_t>(rng.below(kVerbs.size()))];
  p.arg2 = noun_phrase(rng);
  while (p.arg2 == p.arg1) p.arg2 = noun_phrase(rng);

  double t = rng.next_double();
  if (t < 0.25)
    p.sentence = kOpeners[static_cast<std::size_t>(rng.below(kOpeners.size()))];
  p.sentence.insert(p.sentence.end(), p.arg1.begin(), p.arg1.end());
  p.sentence.insert(p.sentence.end(), p.rel.begin(), p.rel.end());
  p.sentence.insert(p.sentence.end(), p.arg2.begin(), p.arg2.end());
  if (t < 0.8) p.sentence.push_back(".");
  p.confidence = 1.0;
  return p;
}

}  // namespace

std::vector<TuplePair> gen_synthetic(std::size_t n, Rng& rng) {
  std::vector<TuplePair> out;
  out.reserve(n);
  while (out.size() < n) {
    TuplePair p = one_pair(rng);
    if (p.sentence.size() > 12) continue;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace noie
