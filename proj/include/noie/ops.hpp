#pragma once

#include <cmath>

#include "noie/types.hpp"

// Forward/backward primitives for the model. Each forward retains exactly
// the values its hand-written backward needs in a small cache struct;
// backward accumulates (+=) into ParamTensor::grad.

namespace noie {

template <class D>
Vec<typename D::Scalar> softmax(const Eigen::MatrixBase<D>& v) {
  using S = typename D::Scalar;
  if (v.size() == 0) throw DimError("softmax: empty input");
  Vec<S> y = (v.array() - v.maxCoeff()).exp();
  y /= y.sum();
  guard_finite(y, "softmax");
  return y;
}

// dL/dz from y = softmax(z) and dL/dy.
template <class S>
Vec<S> softmax_backward(const Vec<S>& y, const Vec<S>& dy) {
  S dot = y.dot(dy);
  return (y.array() * (dy.array() - dot)).matrix();
}

template <class S>
Vec<S> sigmoid(const Vec<S>& z) {
  return (S(1) / (S(1) + (-z.array()).exp())).matrix();
}

// ---- affine map y = W x + b ----

template <class S>
struct LinearCache {
  Vec<S> x;
  bool ran = false;
};

template <class S, class D>
Vec<S> linear(const ParamTensor<S>& W, const ParamTensor<S>& b,
              const Eigen::MatrixBase<D>& x, LinearCache<S>* cache = nullptr) {
  if (W.value.cols() != x.size())
    throw DimError("linear: W is " + shape_str(W.value.rows(), W.value.cols()) +
                   " but x is " + shape_str(x.size(), 1));
  if (b.value.rows() != W.value.rows())
    throw DimError("linear: b is " + shape_str(b.value.rows(), 1) + " but W is " +
                   shape_str(W.value.rows(), W.value.cols()));
  Vec<S> y = W.value * x + b.value.col(0);
  guard_finite(y, "linear");
  if (cache) {
    cache->x = x;
    cache->ran = true;
  }
  return y;
}

// Returns dx; accumulates into W.grad and b.grad.
template <class S, class D>
Vec<S> linear_backward(ParamTensor<S>& W, ParamTensor<S>& b,
                       const LinearCache<S>& cache, const Eigen::MatrixBase<D>& dy) {
  if (!cache.ran) throw StateError("linear_backward: no recorded forward");
  const Vec<S> dyv = dy;
  if (dyv.size() != W.value.rows())
    throw DimError("linear_backward: dy is " + shape_str(dyv.size(), 1) + " but W is " +
                   shape_str(W.value.rows(), W.value.cols()));
  W.grad.noalias() += dyv * cache.x.transpose();
  b.grad.col(0) += dyv;
  return W.value.transpose() * dyv;
}

// ---- LSTM cell ----

// Gate blocks are stacked in the fixed order [input i, forget f,
// candidate g, output o]; the checkpoint format relies on this.
template <class S>
struct LstmCellWeights {
  ParamTensor<S> W_input;   // 4h x input_dim
  ParamTensor<S> W_hidden;  // 4h x h
  ParamTensor<S> bias;      // 4h x 1

  LstmCellWeights() = default;
  LstmCellWeights(const std::string& prefix, int input_dim, int hidden)
      : W_input(prefix + ".W_input", 4 * hidden, input_dim),
        W_hidden(prefix + ".W_hidden", 4 * hidden, hidden),
        bias(prefix + ".bias", 4 * hidden, 1) {}

  int hidden_dim() const { return static_cast<int>(W_hidden.value.cols()); }
  int input_dim() const { return static_cast<int>(W_input.value.cols()); }

  void init_uniform(Rng& rng, double range) {
    W_input.init_uniform(rng, range);
    W_hidden.init_uniform(rng, range);
    bias.init_uniform(rng, range);
  }
};

template <class S>
struct LstmCache {
  Vec<S> x, h_prev, c_prev;
  Vec<S> gi, gf, gg, go;  // post-activation gates
  Vec<S> c, tanh_c;
  bool ran = false;
};

// c = f*c_prev + i*g, h = o*tanh(c).
template <class S>
void lstm_cell(const LstmCellWeights<S>& w, const Vec<S>& x, const Vec<S>& h_prev,
               const Vec<S>& c_prev, Vec<S>& h_out, Vec<S>& c_out,
               LstmCache<S>* cache = nullptr) {
  const int hd = w.hidden_dim();
  if (x.size() != w.input_dim())
    throw DimError("lstm_cell: x is " + shape_str(x.size(), 1) + " but W_input is " +
                   shape_str(w.W_input.value.rows(), w.W_input.value.cols()));
  if (h_prev.size() != hd || c_prev.size() != hd)
    throw DimError("lstm_cell: state is " + shape_str(h_prev.size(), 1) +
                   " but hidden dim is " + std::to_string(hd));

  Vec<S> pre = w.W_input.value * x + w.W_hidden.value * h_prev + w.bias.value.col(0);
  Vec<S> gi = sigmoid<S>(pre.segment(0, hd));
  Vec<S> gf = sigmoid<S>(pre.segment(hd, hd));
  Vec<S> gg = pre.segment(2 * hd, hd).array().tanh().matrix();
  Vec<S> go = sigmoid<S>(pre.segment(3 * hd, hd));

  c_out = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
  Vec<S> tc = c_out.array().tanh().matrix();
  h_out = go.cwiseProduct(tc);
  guard_finite(h_out, "lstm_cell h");
  guard_finite(c_out, "lstm_cell c");

  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gi = std::move(gi);
    cache->gf = std::move(gf);
    cache->gg = std::move(gg);
    cache->go = std::move(go);
    cache->c = c_out;
    cache->tanh_c = std::move(tc);
    cache->ran = true;
  }
}

// dh/dc_in are the upstream gradients on this step's h and c outputs.
// Emits dx, dh_prev, dc_prev; accumulates into the weights' grads.
template <class S>
void lstm_cell_backward(LstmCellWeights<S>& w, const LstmCache<S>& cc, const Vec<S>& dh,
                        const Vec<S>& dc_in, Vec<S>& dx, Vec<S>& dh_prev,
                        Vec<S>& dc_prev) {
  if (!cc.ran) throw StateError("lstm_cell_backward: no recorded forward");
  const int hd = w.hidden_dim();

  Vec<S> dgo = dh.cwiseProduct(cc.tanh_c);
  Vec<S> dc = dc_in + dh.cwiseProduct(cc.go).cwiseProduct(
                          (S(1) - cc.tanh_c.array().square()).matrix());
  Vec<S> dgi = dc.cwiseProduct(cc.gg);
  Vec<S> dgg = dc.cwiseProduct(cc.gi);
  Vec<S> dgf = dc.cwiseProduct(cc.c_prev);
  dc_prev = dc.cwiseProduct(cc.gf);

  Vec<S> dpre(4 * hd);
  dpre.segment(0, hd) = dgi.array() * cc.gi.array() * (S(1) - cc.gi.array());
  dpre.segment(hd, hd) = dgf.array() * cc.gf.array() * (S(1) - cc.gf.array());
  dpre.segment(2 * hd, hd) = dgg.array() * (S(1) - cc.gg.array().square());
  dpre.segment(3 * hd, hd) = dgo.array() * cc.go.array() * (S(1) - cc.go.array());

  w.W_input.grad.noalias() += dpre * cc.x.transpose();
  w.W_hidden.grad.noalias() += dpre * cc.h_prev.transpose();
  w.bias.grad.col(0) += dpre;

  dx.noalias() = w.W_input.value.transpose() * dpre;
  dh_prev.noalias() = w.W_hidden.value.transpose() * dpre;
}

}  // namespace noie
