#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "noie/gradcheck.hpp"
#include "noie/model.hpp"
#include "noie/ops.hpp"
#include "test_util.hpp"

using namespace noie;

namespace {

// Small model over the reserved specials plus a handful of words.
Vocabulary tiny_vocab() {
  return Vocabulary::build(
      std::vector<std::vector<std::string>>{{"alpha", "beta", "gamma", "delta"}}, 20);
}

ModelParams<double> tiny_model(const Vocabulary& vocab, int hidden, int layers,
                               bool bidir, double dropout, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.num_layers = layers;
  cfg.hidden_dim = hidden;
  cfg.embed_dim = hidden;
  cfg.vocab_size = int(vocab.size());
  cfg.bidirectional_encoder = bidir;
  cfg.dropout = dropout;
  ModelParams<double> params(cfg);
  Rng rng(seed);
  params.init_uniform(rng, 1.0);
  return params;
}

}  // namespace

TEST_CASE("gradient_check: linear + softmax + NLL") {
  Rng rng(21);
  ParamTensor<double> W("W", 5, 3), b("b", 5, 1);
  W.init_uniform(rng, 0.8);
  b.init_uniform(rng, 0.8);
  Vecd x = testutil::random_vecd(rng, 3);
  const int target = 2;

  auto f = [&]() -> Matd {
    LinearCache<double> cache;
    Vecd logits = linear(W, b, x, &cache);
    Vecd p = softmax(logits);
    double loss = -std::log(p[target]);
    Vecd dlogits = p;
    dlogits[target] -= 1.0;
    linear_backward(W, b, cache, dlogits);
    return Matd::Constant(1, 1, loss);
  };
  CHECK(gradient_check<double>(f, {&W, &b}, {1e-5, 0, 77}) < 1e-6);
}

TEST_CASE("gradient_check: single lstm_cell") {
  Rng rng(22);
  LstmCellWeights<double> w("w", 4, 3);
  w.init_uniform(rng, 0.5);
  Vecd x = testutil::random_vecd(rng, 4);
  Vecd h0 = testutil::random_vecd(rng, 3);
  Vecd c0 = testutil::random_vecd(rng, 3);
  Vecd wh = testutil::random_vecd(rng, 3);
  Vecd wc = testutil::random_vecd(rng, 3);

  auto f = [&]() -> Matd {
    LstmCache<double> cache;
    Vecd h, c;
    lstm_cell(w, x, h0, c0, h, c, &cache);
    double loss = wh.dot(h) + wc.dot(c);
    Vecd dx, dhp, dcp;
    lstm_cell_backward(w, cache, wh, wc, dx, dhp, dcp);
    return Matd::Constant(1, 1, loss);
  };
  CHECK(gradient_check<double>(f, {&w.W_input, &w.W_hidden, &w.bias}, {1e-5, 0, 78}) <
        1e-6);
}

TEST_CASE("gradient_check: full pair loss through encoder, attention and copy") {
  Vocabulary vocab = tiny_vocab();
  ModelParams<double> params = tiny_model(vocab, 3, 2, true, 0.0, 31);

  // 'zeta' is OOV and appears twice so the copy branch carries real mass
  std::vector<std::string> source = {"alpha", "zeta", "beta", "zeta", "gamma"};
  std::vector<std::string> target = {"<arg1>", "alpha", "</arg1>", "<rel>",
                                     "zeta",  "</rel>", "<arg2>", "beta", "</arg2>"};
  auto pair_src = SourceEncoding::from_tokens(source, vocab);
  std::vector<int> tgt = {Vocabulary::kBos};
  for (int id : pair_src.target_ext_ids(target, vocab)) tgt.push_back(id);
  tgt.push_back(Vocabulary::kEos);
  REQUIRE(tgt[5] >= int(vocab.size()));  // the copied token really is extended

  auto f = [&]() -> Matd {
    double nll = pair_nll_backward(params, pair_src, tgt, 1.0);
    return Matd::Constant(1, 1, nll);
  };
  double err = gradient_check<double>(f, params.all_params(), {1e-5, 6, 79});
  CHECK(err < 1e-4);
}

TEST_CASE("gradient_check: pair loss with fixed dropout masks") {
  Vocabulary vocab = tiny_vocab();
  ModelParams<double> params = tiny_model(vocab, 3, 2, false, 0.3, 33);

  std::vector<std::string> source = {"alpha", "beta", "gamma"};
  std::vector<std::string> target = {"<arg1>", "alpha", "</arg1>", "<rel>",
                                     "beta",  "</rel>", "<arg2>", "gamma", "</arg2>"};
  auto pair_src = SourceEncoding::from_tokens(source, vocab);
  std::vector<int> tgt = {Vocabulary::kBos};
  for (int id : pair_src.target_ext_ids(target, vocab)) tgt.push_back(id);
  tgt.push_back(Vocabulary::kEos);

  auto f = [&]() -> Matd {
    Rng drop(4242);  // identical masks on every call
    double nll = pair_nll_backward(params, pair_src, tgt, 1.0, &drop);
    return Matd::Constant(1, 1, nll);
  };
  double err = gradient_check<double>(f, params.all_params(), {1e-5, 6, 80});
  CHECK(err < 1e-4);
}

TEST_CASE("gradient_check: random configurations stay under 1e-4") {
  Rng meta(99);
  for (int it = 0; it < 10; ++it) {
    Vocabulary vocab = tiny_vocab();
    int hidden = 2 + int(meta.below(3));
    int layers = 1 + int(meta.below(2));
    bool bidir = meta.below(2) == 0;
    ModelParams<double> params = tiny_model(vocab, hidden, layers, bidir, 0.0,
                                            meta.next_u64());

    std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "zeta", "eta"};
    std::vector<std::string> source;
    int m = 2 + int(meta.below(4));
    for (int j = 0; j < m; ++j)
      source.push_back(words[std::size_t(meta.below(words.size()))]);
    auto pair_src = SourceEncoding::from_tokens(source, vocab);
    std::vector<int> tgt = {Vocabulary::kBos};
    int n = 2 + int(meta.below(4));
    for (int j = 0; j < n; ++j)
      tgt.push_back(int(meta.below(std::uint64_t(pair_src.ext_vocab_size()))));
    tgt.push_back(Vocabulary::kEos);

    auto f = [&]() -> Matd {
      return Matd::Constant(1, 1, pair_nll_backward(params, pair_src, tgt, 1.0));
    };
    CHECK(gradient_check<double>(f, params.all_params(), {1e-5, 4, meta.next_u64()}) <
          1e-4);
  }
}

TEST_CASE("gradient_check: non-scalar output is an error") {
  ParamTensor<double> W("W", 2, 2);
  auto f = [&]() -> Matd { return Matd::Zero(2, 1); };
  CHECK_THROWS_AS(gradient_check<double>(f, {&W}), DimError);
}
