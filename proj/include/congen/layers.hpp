#ifndef CONGEN_LAYERS_HPP
#define CONGEN_LAYERS_HPP

#include <cmath>
#include <string>
#include <vector>

#include "congen/autograd.hpp"
#include "congen/params.hpp"

namespace congen {

// sinusoidal position table, n x d
template <class S>
Mat<S> sinusoidal_positions(int n, int d) {
  Mat<S> pe(n, d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double angle =
          pos / std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(d));
      pe(pos, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

// additive attention masks: 0 = visible, large negative = blocked
template <class S>
Mat<S> causal_mask(int n) {
  Mat<S> m = Mat<S>::Zero(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = r + 1; c < n; ++c) m(r, c) = S(-1e9);
  return m;
}

template <class S>
Mat<S> key_padding_mask(int n_q, const std::vector<bool>& key_valid) {
  Mat<S> m = Mat<S>::Zero(n_q, static_cast<int>(key_valid.size()));
  for (int c = 0; c < static_cast<int>(key_valid.size()); ++c) {
    if (!key_valid[c])
      for (int r = 0; r < n_q; ++r) m(r, c) = S(-1e9);
  }
  return m;
}

template <class S>
struct Linear {
  Param<S>* W = nullptr;
  Param<S>* b = nullptr;

  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, int in, int out, bool bias = true) {
    W = &ps.add(name + ".W", in, out, Init::Glorot);
    if (bias) b = &ps.add(name + ".b", 1, out, Init::Zero);
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    Var<S> y = matmul(x, t.param(*W));
    if (b) y = add_rowvec(y, t.param(*b));
    return y;
  }
};

template <class S>
struct LayerNorm {
  Param<S>* gain = nullptr;
  Param<S>* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& name, int d) {
    gain = &ps.add(name + ".g", 1, d, Init::One);
    bias = &ps.add(name + ".b", 1, d, Init::Zero);
  }

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return layer_norm_rows(x, t.param(*gain), t.param(*bias));
  }
};

// Per-head attention matrices recorded during a forward pass, for tests and
// the normalization invariants.
template <class S>
using AttnTrace = std::vector<Mat<S>>;

template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;
  int head_dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& ps, const std::string& name, int hidden, int n_heads)
      : wq(ps, name + ".q", hidden, hidden),
        wk(ps, name + ".k", hidden, hidden),
        wv(ps, name + ".v", hidden, hidden),
        wo(ps, name + ".o", hidden, hidden),
        heads(n_heads),
        head_dim(hidden / n_heads) {}

  Var<S> operator()(Tape<S>& t, Var<S> query_in, Var<S> kv_in, const Mat<S>* add_mask,
                    AttnTrace<S>* trace = nullptr) const {
    Var<S> q = wq(t, query_in);
    Var<S> k = wk(t, kv_in);
    Var<S> v = wv(t, kv_in);
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_dim));
    std::vector<Var<S>> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Var<S> qh = slice_cols(q, h * head_dim, head_dim);
      Var<S> kh = slice_cols(k, h * head_dim, head_dim);
      Var<S> vh = slice_cols(v, h * head_dim, head_dim);
      Var<S> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
      Var<S> attn = softmax_rows(scores, add_mask);
      if (trace) trace->push_back(attn.value());
      outs.push_back(matmul(attn, vh));
    }
    return wo(t, concat_cols(outs));
  }
};

template <class S>
struct EncoderBlock {
  MultiHeadAttention<S> attn;
  LayerNorm<S> ln1, ln2;
  Linear<S> ff1, ff2;

  EncoderBlock() = default;
  EncoderBlock(ParamStore<S>& ps, const std::string& name, int hidden, int heads, int ffn)
      : attn(ps, name + ".attn", hidden, heads),
        ln1(ps, name + ".ln1", hidden),
        ln2(ps, name + ".ln2", hidden),
        ff1(ps, name + ".ff1", hidden, ffn),
        ff2(ps, name + ".ff2", ffn, hidden) {}

  Var<S> operator()(Tape<S>& t, Var<S> x, const Mat<S>* mask, AttnTrace<S>* trace) const {
    Var<S> a = dropout(attn(t, x, x, mask, trace));
    Var<S> x1 = ln1(t, add(x, a));
    Var<S> f = dropout(ff2(t, relu(ff1(t, x1))));
    return ln2(t, add(x1, f));
  }
};

template <class S>
struct DecoderBlock {
  MultiHeadAttention<S> self_attn, cross_attn;
  LayerNorm<S> ln1, ln2, ln3;
  Linear<S> ff1, ff2;

  DecoderBlock() = default;
  DecoderBlock(ParamStore<S>& ps, const std::string& name, int hidden, int heads, int ffn)
      : self_attn(ps, name + ".self", hidden, heads),
        cross_attn(ps, name + ".cross", hidden, heads),
        ln1(ps, name + ".ln1", hidden),
        ln2(ps, name + ".ln2", hidden),
        ln3(ps, name + ".ln3", hidden),
        ff1(ps, name + ".ff1", hidden, ffn),
        ff2(ps, name + ".ff2", ffn, hidden) {}

  Var<S> operator()(Tape<S>& t, Var<S> x, Var<S> memory, const Mat<S>* self_mask,
                    AttnTrace<S>* self_trace, AttnTrace<S>* cross_trace) const {
    Var<S> a = dropout(self_attn(t, x, x, self_mask, self_trace));
    Var<S> x1 = ln1(t, add(x, a));
    Var<S> c = dropout(cross_attn(t, x1, memory, nullptr, cross_trace));
    Var<S> x2 = ln2(t, add(x1, c));
    Var<S> f = dropout(ff2(t, relu(ff1(t, x2))));
    return ln3(t, add(x2, f));
  }
};

// Encoder stack: input projection, sinusoidal positions, then blocks.
// Masked (padded) key positions do not influence unmasked outputs.
template <class S>
struct TransformerEncoder {
  Linear<S> in_proj;
  std::vector<EncoderBlock<S>> blocks;

  TransformerEncoder() = default;
  TransformerEncoder(ParamStore<S>& ps, const std::string& name, int in_width, int hidden,
                     int heads, int ffn, int layers) {
    in_proj = Linear<S>(ps, name + ".in", in_width, hidden);
    for (int l = 0; l < layers; ++l) {
      blocks.emplace_back(ps, name + ".l" + std::to_string(l), hidden, heads, ffn);
    }
  }

  Var<S> operator()(Tape<S>& t, Var<S> x, const std::vector<bool>* valid = nullptr,
                    AttnTrace<S>* trace = nullptr) const {
    const int n = x.rows();
    Var<S> h = in_proj(t, x);
    h = add(h, t.constant(sinusoidal_positions<S>(n, h.cols())));
    Mat<S> mask;
    const Mat<S>* mask_ptr = nullptr;
    if (valid) {
      mask = key_padding_mask<S>(n, *valid);
      mask_ptr = &mask;
    }
    for (const auto& blk : blocks) h = blk(t, h, mask_ptr, trace);
    require_finite(h.value(), "transformer encoder output");
    return h;
  }
};

// Decoder stack with cross-attention over an encoded memory. `causal`
// selects masked (left-to-right) or full bidirectional self-attention.
template <class S>
struct TransformerDecoder {
  Linear<S> in_proj;
  std::vector<DecoderBlock<S>> blocks;
  bool causal = true;

  TransformerDecoder() = default;
  TransformerDecoder(ParamStore<S>& ps, const std::string& name, int in_width, int hidden,
                     int heads, int ffn, int layers, bool causal_attn)
      : causal(causal_attn) {
    in_proj = Linear<S>(ps, name + ".in", in_width, hidden);
    for (int l = 0; l < layers; ++l) {
      blocks.emplace_back(ps, name + ".l" + std::to_string(l), hidden, heads, ffn);
    }
  }

  Var<S> operator()(Tape<S>& t, Var<S> x, Var<S> memory, AttnTrace<S>* self_trace = nullptr,
                    AttnTrace<S>* cross_trace = nullptr) const {
    const int n = x.rows();
    Var<S> h = in_proj(t, x);
    h = add(h, t.constant(sinusoidal_positions<S>(n, h.cols())));
    Mat<S> mask;
    const Mat<S>* mask_ptr = nullptr;
    if (causal) {
      mask = causal_mask<S>(n);
      mask_ptr = &mask;
    }
    for (const auto& blk : blocks) h = blk(t, h, memory, mask_ptr, self_trace, cross_trace);
    require_finite(h.value(), "transformer decoder output");
    return h;
  }
};

// Gated recurrent cell, update-gate form:
//   z = sigmoid(x Wz + s Uz + bz)
//   r = sigmoid(x Wr + s Ur + br)
//   c = tanh(x Wc + (r .* s) Uc + bc)
//   s' = (1 - z) .* s + z .* c
template <class S>
struct GruCell {
  Param<S>*Wz, *Uz, *bz, *Wr, *Ur, *br, *Wc, *Uc, *bc;
  int hidden = 0;

  GruCell() = default;
  GruCell(ParamStore<S>& ps, const std::string& name, int in, int h) : hidden(h) {
    Wz = &ps.add(name + ".Wz", in, h, Init::Glorot);
    Uz = &ps.add(name + ".Uz", h, h, Init::Glorot);
    bz = &ps.add(name + ".bz", 1, h, Init::Zero);
    Wr = &ps.add(name + ".Wr", in, h, Init::Glorot);
    Ur = &ps.add(name + ".Ur", h, h, Init::Glorot);
    br = &ps.add(name + ".br", 1, h, Init::Zero);
    Wc = &ps.add(name + ".Wc", in, h, Init::Glorot);
    Uc = &ps.add(name + ".Uc", h, h, Init::Glorot);
    bc = &ps.add(name + ".bc", 1, h, Init::Zero);
  }

  Var<S> step(Tape<S>& t, Var<S> s_prev, Var<S> x) const {
    Var<S> z = sigmoid(add_rowvec(add(matmul(x, t.param(*Wz)), matmul(s_prev, t.param(*Uz))),
                                  t.param(*bz)));
    Var<S> r = sigmoid(add_rowvec(add(matmul(x, t.param(*Wr)), matmul(s_prev, t.param(*Ur))),
                                  t.param(*br)));
    Var<S> c = tanh_fn(add_rowvec(
        add(matmul(x, t.param(*Wc)), matmul(mul(r, s_prev), t.param(*Uc))), t.param(*bc)));
    return add(mul(affine(z, S(-1), S(1)), s_prev), mul(z, c));
  }

  Var<S> zero_state(Tape<S>& t) const { return t.constant(Mat<S>::Zero(1, hidden)); }
};

}  // namespace congen

#endif  // CONGEN_LAYERS_HPP
