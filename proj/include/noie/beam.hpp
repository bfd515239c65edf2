#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "noie/eval.hpp"
#include "noie/model.hpp"
#include "noie/tuples.hpp"
#include "noie/types.hpp"
#include "noie/vocab.hpp"

namespace noie {

struct BeamConfig {
  int beam_width = 10;
  int top_k = 5;
  int max_decode_len = 80;

  void validate() const {
    if (beam_width < 1) throw DataError("beam config: beam_width must be >= 1");
    if (top_k < 1 || top_k > beam_width)
      throw DataError("beam config: top_k must be in [1, beam_width]");
    if (max_decode_len < 7)  // shortest well-formed tuple
      throw DataError("beam config: max_decode_len must be >= 7");
  }
};

template <class S>
struct Hypothesis {
  std::vector<int> ids;  // emitted extended ids; includes EOS when finished
  double logprob = 0.0;
  bool finished = false;
  int finish_step = -1;
  DecoderState<S> state;

  std::size_t emitted_len() const { return ids.size(); }
};

// Ordering used both for pruning and for the returned list: score
// descending, earlier finish first, then lexicographic ids.
template <class S>
bool hyp_before(const Hypothesis<S>& a, const Hypothesis<S>& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  const int fa = a.finished ? a.finish_step : std::numeric_limits<int>::max();
  const int fb = b.finished ? b.finish_step : std::numeric_limits<int>::max();
  if (fa != fb) return fa < fb;
  return a.ids < b.ids;
}

// Standard length-synchronous beam search. Candidates that emit EOS move
// to the finished pool; the rest keep the live set at most `beam_width`
// wide. When nothing finishes within max_decode_len the best unfinished
// hypotheses are returned with finished=false.
template <class S>
std::vector<Hypothesis<S>> beam_search(const ModelParams<S>& params,
                                       const SourceEncoding& src,
                                       const EncoderStates<S>& enc,
                                       const BeamConfig& beam) {
  beam.validate();
  if (src.embed_ids.empty()) throw DataError("beam_search: empty source");

  struct Candidate {
    double logprob;
    int parent;
    int token;
  };

  std::vector<Hypothesis<S>> live(1);
  live[0].state = bridge(params, enc);
  std::vector<Hypothesis<S>> finished;

  for (int step = 0; step < beam.max_decode_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    std::vector<DecoderState<S>> next_states(live.size());
    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      const int y_prev = live[hi].ids.empty() ? Vocabulary::kBos : live[hi].ids.back();
      OutputDistribution<S> dist =
          decode_step(params, src, enc, y_prev, live[hi].state, next_states[hi]);
      for (Eigen::Index w = 0; w < dist.probs.size(); ++w) {
        const double p = static_cast<double>(dist.probs[w]);
        if (p <= 0.0) continue;
        cands.push_back({live[hi].logprob + std::log(p), int(hi), int(w)});
      }
    }
    const std::size_t keep = std::min<std::size_t>(cands.size(),
                                                   std::size_t(beam.beam_width));
    std::partial_sort(cands.begin(), cands.begin() + std::ptrdiff_t(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });

    std::vector<Hypothesis<S>> next_live;
    for (std::size_t ci = 0; ci < keep; ++ci) {
      const Candidate& c = cands[ci];
      Hypothesis<S> h = live[std::size_t(c.parent)];
      h.ids.push_back(c.token);
      h.logprob = c.logprob;
      h.state = next_states[std::size_t(c.parent)];
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        h.finish_step = step;
        finished.push_back(std::move(h));
      } else {
        next_live.push_back(std::move(h));
      }
    }
    live = std::move(next_live);
  }

  if (finished.empty()) finished = std::move(live);  // nothing emitted EOS
  std::sort(finished.begin(), finished.end(), hyp_before<S>);
  if (finished.size() > std::size_t(beam.beam_width))
    finished.resize(std::size_t(beam.beam_width));
  return finished;
}

// Argmax decoding, kept separate from beam_search as an independent
// reference path (ties go to the lowest id).
template <class S>
std::vector<int> greedy_decode(const ModelParams<S>& params, const SourceEncoding& src,
                               const EncoderStates<S>& enc, int max_len) {
  DecoderState<S> state = bridge(params, enc);
  std::vector<int> out;
  int y_prev = Vocabulary::kBos;
  for (int step = 0; step < max_len; ++step) {
    DecoderState<S> next;
    OutputDistribution<S> dist = decode_step(params, src, enc, y_prev, state, next);
    Eigen::Index best = 0;
    for (Eigen::Index w = 1; w < dist.probs.size(); ++w)
      if (dist.probs[w] > dist.probs[best]) best = w;
    out.push_back(int(best));
    if (int(best) == Vocabulary::kEos) break;
    y_prev = int(best);
    state = std::move(next);
  }
  return out;
}

// Length-normalized sequence probability exp(logprob / emitted length).
template <class S>
double confidence(const Hypothesis<S>& h) {
  if (h.emitted_len() == 0) return 0.0;
  return std::exp(h.logprob / double(h.emitted_len()));
}

struct ExtractStats {
  std::size_t hypotheses = 0;
  std::size_t malformed = 0;  // dropped: parse failure or UNK inside
  std::size_t sentences = 0;
  double seconds = 0.0;

  double malformed_rate() const {
    return hypotheses ? double(malformed) / double(hypotheses) : 0.0;
  }
};

// Beam-decode one sentence and keep the top_k distinct well-formed
// tuples by confidence. Malformed and UNK-containing hypotheses are
// dropped; duplicates keep their maximum confidence.
template <class S>
std::vector<Extraction> extract_sentence(const ModelParams<S>& params,
                                         const Vocabulary& vocab,
                                         const std::string& sentence_id,
                                         const std::string& sentence,
                                         const BeamConfig& beam,
                                         ExtractStats* stats = nullptr) {
  const auto tokens = tokenize(sentence);
  if (tokens.empty()) return {};
  const auto src = SourceEncoding::from_tokens(tokens, vocab);
  EncoderStates<S> enc = encode(params, src.embed_ids);
  auto hyps = beam_search(params, src, enc, beam);

  std::vector<Extraction> found;
  for (const auto& h : hyps) {
    if (stats) ++stats->hypotheses;
    if (!h.finished) {
      if (stats) ++stats->malformed;
      continue;
    }
    std::vector<std::string> toks;
    bool has_unk = false;
    for (int id : h.ids) {
      if (id == Vocabulary::kEos) break;
      if (id == Vocabulary::kUnk) {
        has_unk = true;
        break;
      }
      toks.push_back(src.ext_token(id, vocab));
    }
    std::optional<TuplePair> parsed;
    if (!has_unk) parsed = parse_tagged(toks);
    if (!parsed) {
      if (stats) ++stats->malformed;
      continue;
    }
    Extraction e;
    e.sentence_id = sentence_id;
    e.arg1 = parsed->arg1;
    e.rel = parsed->rel;
    e.arg2 = parsed->arg2;
    e.confidence = confidence(h);
    bool dup = false;
    for (auto& prev : found) {
      if (prev.arg1 == e.arg1 && prev.rel == e.rel && prev.arg2 == e.arg2) {
        prev.confidence = std::max(prev.confidence, e.confidence);
        dup = true;
        break;
      }
    }
    if (!dup) found.push_back(std::move(e));
  }
  std::sort(found.begin(), found.end(), [](const Extraction& a, const Extraction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return std::tie(a.arg1, a.rel, a.arg2) < std::tie(b.arg1, b.rel, b.arg2);
  });
  if (found.size() > std::size_t(beam.top_k)) found.resize(std::size_t(beam.top_k));
  return found;
}

// Corpus extraction over `sentence_id \t sentence` lines. Sentences may
// be processed by several threads; the output preserves input order and
// is byte-identical regardless of thread count.
template <class S>
ExtractStats extract_corpus(const ModelParams<S>& params, const Vocabulary& vocab,
                            const std::string& in_path, const std::string& out_path,
                            const BeamConfig& beam, int threads = 1) {
  std::ifstream in(in_path);
  if (!in) throw DataError("cannot open " + in_path);
  std::vector<std::pair<std::string, std::string>> sentences;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(in_path + ": line " + std::to_string(lineno) +
                      ": expected sentence_id<TAB>sentence");
    sentences.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<Extraction>> results(sentences.size());
  std::vector<ExtractStats> stats(sentences.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= sentences.size()) break;
      results[i] = extract_sentence<S>(params, vocab, sentences[i].first,
                                       sentences[i].second, beam, &stats[i]);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<Extraction> all;
  ExtractStats total;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    all.insert(all.end(), results[i].begin(), results[i].end());
    total.hypotheses += stats[i].hypotheses;
    total.malformed += stats[i].malformed;
  }
  total.sentences = sentences.size();
  total.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_predictions(out_path, all);
  return total;
}

}  // namespace noie
