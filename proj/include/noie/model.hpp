#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "noie/ops.hpp"
#include "noie/types.hpp"
#include "noie/vocab.hpp"

// Encoder-decoder with attention and copying. The encoder is a stacked
// (optionally bidirectional) LSTM over source embeddings; each decoder
// step attends over the encoder outputs with an MLP alignment model
//   e_j = v' tanh(W_state s_prev + W_memory h_j),
// consumes [embedding(y_prev); context] and projects
// [embedding(y_prev); s_t; context] to vocabulary logits. The output
// distribution combines generation probabilities over the fixed
// vocabulary with attention mass copied onto out-of-vocabulary source
// tokens, renormalized to sum to one.

namespace noie {

struct ModelConfig {
  int num_layers = 3;
  int hidden_dim = 256;
  int embed_dim = 256;
  int vocab_size = 0;
  bool bidirectional_encoder = true;
  double dropout = 0.3;
  int max_source_len = 100;

  int enc_out_dim() const { return hidden_dim * (bidirectional_encoder ? 2 : 1); }
  int feature_dim() const { return embed_dim + hidden_dim + enc_out_dim(); }

  void validate() const {
    if (num_layers < 1 || hidden_dim < 1 || embed_dim < 1 || vocab_size < 1)
      throw DimError("model config: all dimensions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw DimError("model config: dropout must be in [0,1)");
  }
};

// Source sentence mapped through a vocabulary. OOV tokens embed as UNK
// but keep distinct extended ids >= vocab_size so the copy branch can
// address them; extended id vocab_size + k is the k-th distinct OOV
// token in first-occurrence order.
struct SourceEncoding {
  std::vector<int> embed_ids;
  std::vector<int> ext_ids;
  std::vector<std::string> oov_tokens;
  int vocab_size = 0;

  int ext_vocab_size() const { return vocab_size + static_cast<int>(oov_tokens.size()); }

  static SourceEncoding from_tokens(const std::vector<std::string>& tokens,
                                    const Vocabulary& vocab) {
    SourceEncoding s;
    s.vocab_size = static_cast<int>(vocab.size());
    for (const auto& tok : tokens) {
      if (vocab.contains(tok)) {
        int id = vocab.id(tok);
        s.embed_ids.push_back(id);
        s.ext_ids.push_back(id);
      } else {
        int k = -1;
        for (std::size_t j = 0; j < s.oov_tokens.size(); ++j)
          if (s.oov_tokens[j] == tok) k = static_cast<int>(j);
        if (k < 0) {
          k = static_cast<int>(s.oov_tokens.size());
          s.oov_tokens.push_back(tok);
        }
        s.embed_ids.push_back(Vocabulary::kUnk);
        s.ext_ids.push_back(s.vocab_size + k);
      }
    }
    return s;
  }

  // Target tokens to extended ids: vocabulary first, then this source's
  // OOV table, else UNK.
  std::vector<int> target_ext_ids(const std::vector<std::string>& tokens,
                                  const Vocabulary& vocab) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
      if (vocab.contains(tok)) {
        out.push_back(vocab.id(tok));
        continue;
      }
      int id = Vocabulary::kUnk;
      for (std::size_t j = 0; j < oov_tokens.size(); ++j)
        if (oov_tokens[j] == tok) id = vocab_size + static_cast<int>(j);
      out.push_back(id);
    }
    return out;
  }

  std::string ext_token(int id, const Vocabulary& vocab) const {
    if (id < vocab_size) return vocab.token(id);
    return oov_tokens.at(static_cast<std::size_t>(id - vocab_size));
  }
};

template <class S>
struct ModelParams {
  ModelConfig cfg;
  ParamTensor<S> embedding;  // embed_dim x vocab_size, one column per token
  std::vector<LstmCellWeights<S>> enc_fwd, enc_bwd;  // per layer
  std::vector<LstmCellWeights<S>> dec;               // per layer
  ParamTensor<S> attn_W_state;   // hidden x hidden
  ParamTensor<S> attn_W_memory;  // hidden x enc_out
  ParamTensor<S> attn_v;         // hidden x 1
  std::vector<ParamTensor<S>> bridge_W_h, bridge_b_h;  // per decoder layer
  std::vector<ParamTensor<S>> bridge_W_c, bridge_b_c;
  ParamTensor<S> out_W;  // vocab x feature_dim
  ParamTensor<S> out_b;  // vocab x 1

  ModelParams() = default;

  explicit ModelParams(const ModelConfig& c) : cfg(c) {
    cfg.validate();
    const int H = cfg.hidden_dim, E = cfg.embed_dim, V = cfg.vocab_size;
    const int EO = cfg.enc_out_dim();
    embedding = ParamTensor<S>("embedding", E, V);
    for (int l = 0; l < cfg.num_layers; ++l) {
      int in = (l == 0) ? E : EO;
      enc_fwd.emplace_back("enc.l" + std::to_string(l) + ".fwd", in, H);
      if (cfg.bidirectional_encoder)
        enc_bwd.emplace_back("enc.l" + std::to_string(l) + ".bwd", in, H);
    }
    for (int l = 0; l < cfg.num_layers; ++l) {
      int in = (l == 0) ? E + EO : H;
      dec.emplace_back("dec.l" + std::to_string(l), in, H);
    }
    attn_W_state = ParamTensor<S>("attn.W_state", H, H);
    attn_W_memory = ParamTensor<S>("attn.W_memory", H, EO);
    attn_v = ParamTensor<S>("attn.v", H, 1);
    for (int l = 0; l < cfg.num_layers; ++l) {
      std::string p = "bridge.l" + std::to_string(l);
      bridge_W_h.emplace_back(p + ".W_h", H, EO);
      bridge_b_h.emplace_back(p + ".b_h", H, 1);
      bridge_W_c.emplace_back(p + ".W_c", H, EO);
      bridge_b_c.emplace_back(p + ".b_c", H, 1);
    }
    out_W = ParamTensor<S>("out.W", V, cfg.feature_dim());
    out_b = ParamTensor<S>("out.b", V, 1);
  }

  // Stable order; initialization, checkpoints and SGD all walk this list.
  std::vector<ParamTensor<S>*> all_params() {
    std::vector<ParamTensor<S>*> ps;
    ps.push_back(&embedding);
    auto add_cell = [&](LstmCellWeights<S>& w) {
      ps.push_back(&w.W_input);
      ps.push_back(&w.W_hidden);
      ps.push_back(&w.bias);
    };
    for (auto& w : enc_fwd) add_cell(w);
    for (auto& w : enc_bwd) add_cell(w);
    for (auto& w : dec) add_cell(w);
    ps.push_back(&attn_W_state);
    ps.push_back(&attn_W_memory);
    ps.push_back(&attn_v);
    for (int l = 0; l < cfg.num_layers; ++l) {
      ps.push_back(&bridge_W_h[static_cast<std::size_t>(l)]);
      ps.push_back(&bridge_b_h[static_cast<std::size_t>(l)]);
      ps.push_back(&bridge_W_c[static_cast<std::size_t>(l)]);
      ps.push_back(&bridge_b_c[static_cast<std::size_t>(l)]);
    }
    ps.push_back(&out_W);
    ps.push_back(&out_b);
    return ps;
  }

  void init_uniform(Rng& rng, double range = 0.1) {
    for (auto* p : all_params()) p->init_uniform(rng, range);
  }

  void zero_grad() {
    for (auto* p : all_params()) p->zero_grad();
  }

  double grad_norm() {
    double sq = 0;
    for (auto* p : all_params()) sq += static_cast<double>(p->grad.squaredNorm());
    return std::sqrt(sq);
  }

  void scale_grads(double s) {
    for (auto* p : all_params()) p->grad *= static_cast<S>(s);
  }

  void sgd_step(double lr) {
    for (auto* p : all_params()) p->value -= static_cast<S>(lr) * p->grad;
  }
};

template <class S>
struct EncoderStates {
  Mat<S> outputs;  // enc_out_dim x m, column j = h_j
  Vec<S> final_h, final_c;  // top layer, forward||backward finals
  int len() const { return static_cast<int>(outputs.cols()); }
};

template <class S>
struct DecoderState {
  std::vector<Vec<S>> h, c;  // per layer
  const Vec<S>& top_h() const { return h.back(); }
};

template <class S>
struct AttentionResult {
  Vec<S> context;  // enc_out_dim
  Vec<S> weights;  // alpha, length m
  Vec<S> scores;   // e, length m
};

template <class S>
struct OutputDistribution {
  Vec<S> probs;  // ext_vocab_size, sums to 1
};

// Dropout bookkeeping: inverted masks (0 or 1/keep) drawn from a
// dedicated stream; empty mask = identity.
template <class S>
struct DropoutCtx {
  bool training = false;
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return training && rate > 0.0 && rng != nullptr; }

  Vec<S> mask(Eigen::Index n) {
    Vec<S> m(n);
    const S keep = static_cast<S>(1.0 - rate);
    for (Eigen::Index i = 0; i < n; ++i)
      m[i] = rng->next_double() < rate ? S(0) : S(1) / keep;
    return m;
  }
};

// ---- encoder ----

template <class S>
struct EncTrace {
  // cells[layer][dir][pos]; dir 0 = forward, 1 = backward
  std::vector<std::array<std::vector<LstmCache<S>>, 2>> cells;
  std::vector<Mat<S>> drop_masks;  // mask on layer l input, l >= 1
  std::vector<int> embed_ids;
};

template <class S>
EncoderStates<S> encode(const ModelParams<S>& params, const std::vector<int>& embed_ids,
                        EncTrace<S>* trace = nullptr, DropoutCtx<S>* drop = nullptr) {
  const ModelConfig& cfg = params.cfg;
  const int m = static_cast<int>(embed_ids.size());
  if (m == 0) throw DimError("encode: empty input");
  if (m > cfg.max_source_len)
    throw DimError("encode: source length " + std::to_string(m) + " exceeds limit " +
                   std::to_string(cfg.max_source_len));
  for (int id : embed_ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw DimError("encode: token id " + std::to_string(id) + " out of range");

  const int H = cfg.hidden_dim;
  const int L = cfg.num_layers;
  const bool bidir = cfg.bidirectional_encoder;

  if (trace) {
    trace->cells.assign(static_cast<std::size_t>(L), {});
    trace->drop_masks.assign(static_cast<std::size_t>(L), Mat<S>());
    trace->embed_ids = embed_ids;
  }

  Mat<S> cur(cfg.embed_dim, m);
  for (int j = 0; j < m; ++j) cur.col(j) = params.embedding.value.col(embed_ids[j]);

  EncoderStates<S> enc;
  for (int l = 0; l < L; ++l) {
    if (l > 0 && drop && drop->active()) {
      Mat<S> mask(cur.rows(), cur.cols());
      for (int j = 0; j < m; ++j) mask.col(j) = drop->mask(cur.rows());
      cur = cur.cwiseProduct(mask);
      if (trace) trace->drop_masks[static_cast<std::size_t>(l)] = std::move(mask);
    }
    auto& fw = params.enc_fwd[static_cast<std::size_t>(l)];
    if (trace) {
      trace->cells[static_cast<std::size_t>(l)][0].resize(static_cast<std::size_t>(m));
      if (bidir)
        trace->cells[static_cast<std::size_t>(l)][1].resize(static_cast<std::size_t>(m));
    }

    Mat<S> out(bidir ? 2 * H : H, m);
    Vec<S> h = Vec<S>::Zero(H), c = Vec<S>::Zero(H);
    for (int j = 0; j < m; ++j) {
      LstmCache<S>* cc =
          trace ? &trace->cells[static_cast<std::size_t>(l)][0][static_cast<std::size_t>(j)]
                : nullptr;
      Vec<S> nh, nc;
      lstm_cell(fw, Vec<S>(cur.col(j)), h, c, nh, nc, cc);
      h = std::move(nh);
      c = std::move(nc);
      out.col(j).head(H) = h;
    }
    Vec<S> fwd_final_h = h, fwd_final_c = c;

    Vec<S> bwd_final_h, bwd_final_c;
    if (bidir) {
      auto& bw = params.enc_bwd[static_cast<std::size_t>(l)];
      h.setZero();
      c.setZero();
      for (int j = m - 1; j >= 0; --j) {
        LstmCache<S>* cc =
            trace ? &trace->cells[static_cast<std::size_t>(l)][1][static_cast<std::size_t>(j)]
                  : nullptr;
        Vec<S> nh, nc;
        lstm_cell(bw, Vec<S>(cur.col(j)), h, c, nh, nc, cc);
        h = std::move(nh);
        c = std::move(nc);
        out.col(j).tail(H) = h;
      }
      bwd_final_h = h;
      bwd_final_c = c;
    }

    if (l == L - 1) {
      enc.final_h.resize(cfg.enc_out_dim());
      enc.final_c.resize(cfg.enc_out_dim());
      enc.final_h.head(H) = fwd_final_h;
      enc.final_c.head(H) = fwd_final_c;
      if (bidir) {
        enc.final_h.tail(H) = bwd_final_h;
        enc.final_c.tail(H) = bwd_final_c;
      }
    }
    cur = std::move(out);
  }
  enc.outputs = std::move(cur);
  return enc;
}

// Backward through the whole encoder stack. d_outputs/d_final_* are the
// upstream gradients; embedding and cell grads accumulate in params.
template <class S>
void encode_backward(ModelParams<S>& params, const EncTrace<S>& trace,
                     const Mat<S>& d_outputs, const Vec<S>& d_final_h,
                     const Vec<S>& d_final_c) {
  const ModelConfig& cfg = params.cfg;
  const int H = cfg.hidden_dim;
  const int L = cfg.num_layers;
  const bool bidir = cfg.bidirectional_encoder;
  const int m = static_cast<int>(trace.embed_ids.size());

  Mat<S> d_above = d_outputs;  // gradient on current layer's output matrix
  for (int l = L - 1; l >= 0; --l) {
    const auto& caches = trace.cells[static_cast<std::size_t>(l)];
    const int in_dim = params.enc_fwd[static_cast<std::size_t>(l)].input_dim();
    Mat<S> d_input = Mat<S>::Zero(in_dim, m);

    // forward direction: processed 0..m-1, final state at j = m-1
    {
      auto& w = params.enc_fwd[static_cast<std::size_t>(l)];
      Vec<S> dh_carry = Vec<S>::Zero(H), dc_carry = Vec<S>::Zero(H);
      if (l == L - 1) {
        dh_carry += d_final_h.head(H);
        dc_carry += d_final_c.head(H);
      }
      for (int j = m - 1; j >= 0; --j) {
        Vec<S> dh = dh_carry + d_above.col(j).head(H);
        Vec<S> dx, dhp, dcp;
        lstm_cell_backward(w, caches[0][static_cast<std::size_t>(j)], dh, dc_carry, dx,
                           dhp, dcp);
        d_input.col(j) += dx;
        dh_carry = std::move(dhp);
        dc_carry = std::move(dcp);
      }
    }
    if (bidir) {
      // backward direction: processed m-1..0, final state at j = 0
      auto& w = params.enc_bwd[static_cast<std::size_t>(l)];
      Vec<S> dh_carry = Vec<S>::Zero(H), dc_carry = Vec<S>::Zero(H);
      if (l == L - 1) {
        dh_carry += d_final_h.tail(H);
        dc_carry += d_final_c.tail(H);
      }
      for (int j = 0; j < m; ++j) {
        Vec<S> dh = dh_carry + d_above.col(j).tail(H);
        Vec<S> dx, dhp, dcp;
        lstm_cell_backward(w, caches[1][static_cast<std::size_t>(j)], dh, dc_carry, dx,
                           dhp, dcp);
        d_input.col(j) += dx;
        dh_carry = std::move(dhp);
        dc_carry = std::move(dcp);
      }
    }

    if (l > 0) {
      if (trace.drop_masks[static_cast<std::size_t>(l)].size() > 0)
        d_input = d_input.cwiseProduct(trace.drop_masks[static_cast<std::size_t>(l)]);
      d_above = std::move(d_input);
    } else {
      for (int j = 0; j < m; ++j)
        params.embedding.grad.col(trace.embed_ids[static_cast<std::size_t>(j)]) +=
            d_input.col(j);
    }
  }
}

// ---- attention ----

template <class S>
struct AttnCache {
  Vec<S> s_prev;
  Mat<S> tanh_q;  // hidden x m
  Vec<S> alpha;
  bool ran = false;
};

template <class S>
AttentionResult<S> attend(const ModelParams<S>& params, const EncoderStates<S>& enc,
                          const Vec<S>& s_prev, AttnCache<S>* cache = nullptr) {
  if (s_prev.size() != params.cfg.hidden_dim)
    throw DimError("attend: state is " + shape_str(s_prev.size(), 1) +
                   " but hidden dim is " + std::to_string(params.cfg.hidden_dim));
  Vec<S> ws = params.attn_W_state.value * s_prev;
  Mat<S> q = ((params.attn_W_memory.value * enc.outputs).colwise() + ws)
                 .array()
                 .tanh()
                 .matrix();
  AttentionResult<S> res;
  res.scores = q.transpose() * params.attn_v.value.col(0);
  res.weights = softmax(res.scores);
  res.context.noalias() = enc.outputs * res.weights;
  guard_finite(res.context, "attention context");
  if (cache) {
    cache->s_prev = s_prev;
    cache->tanh_q = std::move(q);
    cache->alpha = res.weights;
    cache->ran = true;
  }
  return res;
}

// d_context and d_alpha are upstream gradients; returns d_s_prev and
// accumulates the encoder-output gradient into d_enc_outputs.
template <class S>
Vec<S> attend_backward(ModelParams<S>& params, const EncoderStates<S>& enc,
                       const AttnCache<S>& cc, const Vec<S>& d_context,
                       const Vec<S>& d_alpha_extra, Mat<S>& d_enc_outputs) {
  if (!cc.ran) throw StateError("attend_backward: no recorded forward");
  Vec<S> d_alpha = enc.outputs.transpose() * d_context;
  if (d_alpha_extra.size() > 0) d_alpha += d_alpha_extra;
  Vec<S> de = softmax_backward<S>(cc.alpha, d_alpha);

  // e_j = v' tanh_q_j
  params.attn_v.grad.col(0) += cc.tanh_q * de;
  Mat<S> dq = params.attn_v.value.col(0) * de.transpose();  // hidden x m
  Mat<S> dpre = dq.cwiseProduct((S(1) - cc.tanh_q.array().square()).matrix());

  Vec<S> dpre_sum = dpre.rowwise().sum();
  params.attn_W_memory.grad.noalias() += dpre * enc.outputs.transpose();
  params.attn_W_state.grad.noalias() += dpre_sum * cc.s_prev.transpose();

  d_enc_outputs.noalias() += params.attn_W_memory.value.transpose() * dpre;
  d_enc_outputs.noalias() += d_context * cc.alpha.transpose();
  return params.attn_W_state.value.transpose() * dpre_sum;
}

// ---- bridge ----

template <class S>
struct BridgeCache {
  std::vector<Vec<S>> h0, c0;  // tanh outputs per layer
  bool ran = false;
};

template <class S>
DecoderState<S> bridge(const ModelParams<S>& params, const EncoderStates<S>& enc,
                       BridgeCache<S>* cache = nullptr) {
  const int L = params.cfg.num_layers;
  DecoderState<S> st;
  st.h.resize(static_cast<std::size_t>(L));
  st.c.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    st.h[static_cast<std::size_t>(l)] =
        (params.bridge_W_h[static_cast<std::size_t>(l)].value * enc.final_h +
         params.bridge_b_h[static_cast<std::size_t>(l)].value.col(0))
            .array()
            .tanh()
            .matrix();
    st.c[static_cast<std::size_t>(l)] =
        (params.bridge_W_c[static_cast<std::size_t>(l)].value * enc.final_c +
         params.bridge_b_c[static_cast<std::size_t>(l)].value.col(0))
            .array()
            .tanh()
            .matrix();
  }
  if (cache) {
    cache->h0 = st.h;
    cache->c0 = st.c;
    cache->ran = true;
  }
  return st;
}

template <class S>
void bridge_backward(ModelParams<S>& params, const EncoderStates<S>& enc,
                     const BridgeCache<S>& cc, const std::vector<Vec<S>>& dh0,
                     const std::vector<Vec<S>>& dc0, Vec<S>& d_final_h,
                     Vec<S>& d_final_c) {
  if (!cc.ran) throw StateError("bridge_backward: no recorded forward");
  const int L = params.cfg.num_layers;
  d_final_h = Vec<S>::Zero(enc.final_h.size());
  d_final_c = Vec<S>::Zero(enc.final_c.size());
  for (int l = 0; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Vec<S> dph = dh0[li].cwiseProduct((S(1) - cc.h0[li].array().square()).matrix());
    Vec<S> dpc = dc0[li].cwiseProduct((S(1) - cc.c0[li].array().square()).matrix());
    params.bridge_W_h[li].grad.noalias() += dph * enc.final_h.transpose();
    params.bridge_b_h[li].grad.col(0) += dph;
    params.bridge_W_c[li].grad.noalias() += dpc * enc.final_c.transpose();
    params.bridge_b_c[li].grad.col(0) += dpc;
    d_final_h.noalias() += params.bridge_W_h[li].value.transpose() * dph;
    d_final_c.noalias() += params.bridge_W_c[li].value.transpose() * dpc;
  }
}

// ---- decoder step with copy-combined output ----

template <class S>
struct StepTrace {
  int y_prev = -1;           // extended id fed into this step
  int y_prev_embed = -1;     // embedding column actually used
  AttnCache<S> attn;
  std::vector<LstmCache<S>> cells;        // per layer
  std::vector<Vec<S>> layer_drop_masks;   // on layer l input, l >= 1
  Vec<S> feature;                         // post-dropout projection input
  Vec<S> feat_drop_mask;
  Vec<S> p_gen;
  Vec<S> oov_mass;
  S z_norm = S(1);
};

inline int embed_id_for(const SourceEncoding& src, int ext_id) {
  if (ext_id < 0 || ext_id >= src.ext_vocab_size())
    throw DimError("decode_step: extended id " + std::to_string(ext_id) +
                   " out of range (extended vocab " +
                   std::to_string(src.ext_vocab_size()) + ")");
  return ext_id < src.vocab_size ? ext_id : Vocabulary::kUnk;
}

template <class S>
OutputDistribution<S> decode_step(const ModelParams<S>& params, const SourceEncoding& src,
                                  const EncoderStates<S>& enc, int y_prev_ext,
                                  const DecoderState<S>& state, DecoderState<S>& next,
                                  StepTrace<S>* trace = nullptr,
                                  DropoutCtx<S>* drop = nullptr) {
  const ModelConfig& cfg = params.cfg;
  const int L = cfg.num_layers;
  const int embed_id = embed_id_for(src, y_prev_ext);
  Vec<S> emb = params.embedding.value.col(embed_id);

  if (trace) {
    trace->y_prev = y_prev_ext;
    trace->y_prev_embed = embed_id;
    trace->cells.resize(static_cast<std::size_t>(L));
    trace->layer_drop_masks.assign(static_cast<std::size_t>(L), Vec<S>());
  }

  AttentionResult<S> att =
      attend(params, enc, state.top_h(), trace ? &trace->attn : nullptr);

  next.h.resize(static_cast<std::size_t>(L));
  next.c.resize(static_cast<std::size_t>(L));
  Vec<S> x(cfg.embed_dim + cfg.enc_out_dim());
  x.head(cfg.embed_dim) = emb;
  x.tail(cfg.enc_out_dim()) = att.context;
  for (int l = 0; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l);
    if (l > 0 && drop && drop->active()) {
      Vec<S> mask = drop->mask(x.size());
      x = x.cwiseProduct(mask);
      if (trace) trace->layer_drop_masks[li] = std::move(mask);
    }
    Vec<S> nh, nc;
    lstm_cell(params.dec[li], x, state.h[li], state.c[li], nh, nc,
              trace ? &trace->cells[li] : nullptr);
    next.h[li] = std::move(nh);
    next.c[li] = std::move(nc);
    x = next.h[li];
  }

  Vec<S> feature(cfg.feature_dim());
  feature.head(cfg.embed_dim) = emb;
  feature.segment(cfg.embed_dim, cfg.hidden_dim) = next.h.back();
  feature.tail(cfg.enc_out_dim()) = att.context;
  if (drop && drop->active()) {
    Vec<S> mask = drop->mask(feature.size());
    feature = feature.cwiseProduct(mask);
    if (trace) trace->feat_drop_mask = mask;
  }

  Vec<S> logits = params.out_W.value * feature + params.out_b.value.col(0);
  Vec<S> p_gen = softmax(logits);

  const int n_oov = static_cast<int>(src.oov_tokens.size());
  Vec<S> oov_mass = Vec<S>::Zero(n_oov);
  for (std::size_t i = 0; i < src.ext_ids.size(); ++i) {
    int ei = src.ext_ids[i];
    if (ei >= src.vocab_size)
      oov_mass[ei - src.vocab_size] += att.weights[static_cast<Eigen::Index>(i)];
  }
  S z = S(1) + oov_mass.sum();

  OutputDistribution<S> dist;
  dist.probs.resize(src.ext_vocab_size());
  dist.probs.head(cfg.vocab_size) = p_gen / z;
  if (n_oov > 0) dist.probs.tail(n_oov) = oov_mass / z;
  guard_finite(dist.probs, "output distribution");

  if (trace) {
    trace->feature = std::move(feature);
    trace->p_gen = std::move(p_gen);
    trace->oov_mass = std::move(oov_mass);
    trace->z_norm = z;
  }
  return dist;
}

// Backward of one decode step for the NLL of `target_ext`, scaled by
// `scale`. d_state_h/d_state_c carry the upstream gradients on this
// step's output states and are replaced by the gradients on the previous
// step's states; the attention contribution to s_{t-1} is returned
// separately so the caller can add it to the right layer.
template <class S>
Vec<S> decode_step_backward(ModelParams<S>& params, const SourceEncoding& src,
                            const EncoderStates<S>& enc, const StepTrace<S>& tr,
                            int target_ext, S scale, std::vector<Vec<S>>& d_state_h,
                            std::vector<Vec<S>>& d_state_c, Mat<S>& d_enc_outputs) {
  const ModelConfig& cfg = params.cfg;
  const int L = cfg.num_layers;
  const int V = cfg.vocab_size;

  // Output + copy rule. For an in-vocabulary target the renormalizer
  // contributes [i is OOV]/Z to each alpha_i; for a copied target the
  // copy branch adds -[ext_ids[i]=y]/mass_y on top.
  Vec<S> d_logits;
  Vec<S> d_alpha_copy = Vec<S>::Zero(enc.len());
  const S z = tr.z_norm;
  if (target_ext < V) {
    d_logits = tr.p_gen;
    d_logits[target_ext] -= S(1);
    d_logits *= scale;
    for (std::size_t i = 0; i < src.ext_ids.size(); ++i)
      if (src.ext_ids[i] >= V)
        d_alpha_copy[static_cast<Eigen::Index>(i)] += scale / z;
  } else {
    const int k = target_ext - V;
    const S mass = tr.oov_mass[k];
    d_logits = Vec<S>::Zero(V);
    for (std::size_t i = 0; i < src.ext_ids.size(); ++i) {
      if (src.ext_ids[i] >= V) d_alpha_copy[static_cast<Eigen::Index>(i)] += scale / z;
      if (src.ext_ids[i] == target_ext)
        d_alpha_copy[static_cast<Eigen::Index>(i)] -= scale / mass;
    }
  }

  params.out_W.grad.noalias() += d_logits * tr.feature.transpose();
  params.out_b.grad.col(0) += d_logits;
  Vec<S> d_feature = params.out_W.value.transpose() * d_logits;
  if (tr.feat_drop_mask.size() > 0) d_feature = d_feature.cwiseProduct(tr.feat_drop_mask);

  Vec<S> d_emb = d_feature.head(cfg.embed_dim);
  Vec<S> d_context = d_feature.tail(cfg.enc_out_dim());
  d_state_h.back() += d_feature.segment(cfg.embed_dim, cfg.hidden_dim);

  // Decoder stack, top to bottom. dx of layer l feeds layer l-1's output
  // gradient at this same step.
  Vec<S> dx;
  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    Vec<S> dh = d_state_h[li];
    Vec<S> dhp, dcp;
    lstm_cell_backward(params.dec[li], tr.cells[li], dh, d_state_c[li], dx, dhp, dcp);
    if (tr.layer_drop_masks[li].size() > 0) dx = dx.cwiseProduct(tr.layer_drop_masks[li]);
    d_state_h[li] = std::move(dhp);
    d_state_c[li] = std::move(dcp);
    if (l > 0) d_state_h[li - 1] += dx;
  }
  d_emb += dx.head(cfg.embed_dim);
  d_context += dx.tail(cfg.enc_out_dim());

  params.embedding.grad.col(tr.y_prev_embed) += d_emb;

  return attend_backward(params, enc, tr.attn, d_context, d_alpha_copy, d_enc_outputs);
}

// ---- sequence scoring ----

// Teacher-forced log P(Y|X), summed over the per-step conditionals.
// `target_ext` must begin with BOS and end with EOS. Dropout is never
// applied here. A zero-probability step yields -inf and sets *underflow.
template <class S>
double sequence_logprob(const ModelParams<S>& params, const SourceEncoding& src,
                        const std::vector<int>& target_ext, bool* underflow = nullptr) {
  if (target_ext.size() < 2 || target_ext.front() != Vocabulary::kBos ||
      target_ext.back() != Vocabulary::kEos)
    throw DataError("sequence_logprob: target must be BOS ... EOS");
  EncoderStates<S> enc = encode(params, src.embed_ids);
  DecoderState<S> state = bridge(params, enc);
  double total = 0;
  if (underflow) *underflow = false;
  for (std::size_t t = 0; t + 1 < target_ext.size(); ++t) {
    DecoderState<S> next;
    OutputDistribution<S> dist =
        decode_step(params, src, enc, target_ext[t], state, next);
    const double p = static_cast<double>(dist.probs[target_ext[t + 1]]);
    if (p <= 0.0) {
      if (underflow) *underflow = true;
      return -std::numeric_limits<double>::infinity();
    }
    total += std::log(p);
    state = std::move(next);
  }
  return total;
}

// Full forward+backward over one pair under teacher forcing. Returns the
// summed NLL over target positions; gradients are accumulated scaled by
// `scale`. `drop_rng` null disables dropout.
template <class S>
double pair_nll_backward(ModelParams<S>& params, const SourceEncoding& src,
                         const std::vector<int>& target_ext, S scale,
                         Rng* drop_rng = nullptr) {
  const ModelConfig& cfg = params.cfg;
  if (target_ext.size() < 2 || target_ext.front() != Vocabulary::kBos ||
      target_ext.back() != Vocabulary::kEos)
    throw DataError("pair_nll_backward: target must be BOS ... EOS");

  DropoutCtx<S> drop{drop_rng != nullptr, cfg.dropout, drop_rng};

  EncTrace<S> etrace;
  EncoderStates<S> enc = encode(params, src.embed_ids, &etrace, &drop);
  BridgeCache<S> bcache;
  DecoderState<S> state = bridge(params, enc, &bcache);

  const std::size_t T = target_ext.size() - 1;  // predicted positions
  std::vector<StepTrace<S>> steps(T);
  std::vector<DecoderState<S>> states(T + 1);
  states[0] = state;
  double nll = 0;
  for (std::size_t t = 0; t < T; ++t) {
    OutputDistribution<S> dist = decode_step(params, src, enc, target_ext[t], states[t],
                                             states[t + 1], &steps[t], &drop);
    const double p = static_cast<double>(dist.probs[target_ext[t + 1]]);
    nll -= std::log(std::max(p, std::numeric_limits<double>::min()));
  }

  // BPTT over decoder steps.
  const int L = cfg.num_layers;
  std::vector<Vec<S>> dh(static_cast<std::size_t>(L)), dc(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    dh[static_cast<std::size_t>(l)] = Vec<S>::Zero(cfg.hidden_dim);
    dc[static_cast<std::size_t>(l)] = Vec<S>::Zero(cfg.hidden_dim);
  }
  Mat<S> d_enc_outputs = Mat<S>::Zero(enc.outputs.rows(), enc.outputs.cols());
  for (std::size_t t = T; t-- > 0;) {
    Vec<S> d_s_prev = decode_step_backward(params, src, enc, steps[t],
                                           target_ext[t + 1], scale, dh, dc,
                                           d_enc_outputs);
    // attention at step t reads the previous step's top-layer state
    dh.back() += d_s_prev;
  }

  Vec<S> d_final_h, d_final_c;
  bridge_backward(params, enc, bcache, dh, dc, d_final_h, d_final_c);
  encode_backward(params, etrace, d_enc_outputs, d_final_h, d_final_c);
  return nll;
}

}  // namespace noie
