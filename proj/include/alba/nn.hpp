#pragma once

#include <cmath>
#include <string>

#include "alba/ops.hpp"
#include "alba/param_store.hpp"

// Layer structs. Each holds tensor handles that are simultaneously registered
// in a ParamStore under a dotted prefix, so serialization, freezing and
// optimization all see the same storage.
namespace alba {

template <class T>
T glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

template <class T>
struct LinearT {
  Ten<T> w;  // [in, out]
  Ten<T> b;  // [out]
  Ten<T> forward(const Ten<T>& x) const { return add_rowvec(matmul(x, w), b); }
};

template <class T>
LinearT<T> make_linear(ParamStoreT<T>& ps, const std::string& prefix, std::size_t in,
                       std::size_t out, Rng& rng) {
  T bound = glorot_bound<T>(in, out);
  LinearT<T> l;
  l.w = ps.add(prefix + ".w", Ten<T>::uniform({in, out}, rng, -bound, bound));
  l.b = ps.add(prefix + ".b", Ten<T>::zeros({out}));
  return l;
}

template <class T>
struct LayerNormT {
  Ten<T> gain;
  Ten<T> bias;
  T eps = static_cast<T>(1e-5);
  Ten<T> forward(const Ten<T>& x) const { return layer_norm(x, gain, bias, eps); }
};

template <class T>
LayerNormT<T> make_layer_norm(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d) {
  LayerNormT<T> l;
  l.gain = ps.add(prefix + ".gain", Ten<T>::full({d}, T(1)));
  l.bias = ps.add(prefix + ".bias", Ten<T>::zeros({d}));
  return l;
}

// Batch norm over the leading axis with running statistics held as
// non-trainable store entries. frozen_stats pins the running buffers while
// still normalizing with batch statistics in train mode.
template <class T>
struct BatchNorm1dT {
  Ten<T> gain, bias;
  Ten<T> running_mean, running_var;
  T eps = static_cast<T>(1e-5);
  T momentum = static_cast<T>(0.1);
  bool frozen_stats = false;
};

template <class T>
BatchNorm1dT<T> make_batch_norm(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d) {
  BatchNorm1dT<T> bn;
  bn.gain = ps.add(prefix + ".gain", Ten<T>::full({d}, T(1)));
  bn.bias = ps.add(prefix + ".bias", Ten<T>::zeros({d}));
  bn.running_mean = ps.add(prefix + ".running_mean", Ten<T>::zeros({d}), /*trainable=*/false);
  bn.running_var = ps.add(prefix + ".running_var", Ten<T>::full({d}, T(1)), /*trainable=*/false);
  return bn;
}

template <class T>
Ten<T> batch_norm_1d(const Ten<T>& x, BatchNorm1dT<T>& state, Mode mode) {
  opdetail::require_rank2("batch_norm_1d", x);
  std::size_t n = x.dim(0), d = x.dim(1);
  if (state.gain.numel() != d)
    throw DimensionError("batch_norm_1d: feature width " + std::to_string(d) + " vs state " +
                         std::to_string(state.gain.numel()));
  auto xd = x.data();
  auto gd = state.gain.data();
  auto bd = state.bias.data();

  if (mode == Mode::infer) {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    std::vector<T> y(n * d);
    std::vector<T> inv(d);
    for (std::size_t j = 0; j < d; ++j) inv[j] = T(1) / std::sqrt(rv[j] + state.eps);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        y[i * d + j] = gd[j] * (xd[i * d + j] - rm[j]) * inv[j] + bd[j];
    Ten<T> rm_t = state.running_mean, rv_t = state.running_var;
    Ten<T> gain = state.gain, bias = state.bias;
    T eps = state.eps;
    return Ten<T>::make_node(
        {n, d}, std::move(y), {x, gain, bias}, [x, gain, bias, rm_t, rv_t, eps, n, d](NodeT<T>& out) {
          T* gx = grad_dst(x);
          T* gg = grad_dst(gain);
          T* gb = grad_dst(bias);
          auto gd = gain.data();
          auto rm = rm_t.data();
          auto rv = rv_t.data();
          auto xd = x.data();
          for (std::size_t j = 0; j < d; ++j) {
            T inv = T(1) / std::sqrt(rv[j] + eps);
            for (std::size_t i = 0; i < n; ++i) {
              T u = out.grad[i * d + j];
              if (gx) gx[i * d + j] += u * gd[j] * inv;
              if (gg) gg[j] += u * (xd[i * d + j] - rm[j]) * inv;
              if (gb) gb[j] += u;
            }
          }
        });
  }

  // train mode: batch statistics (biased variance)
  std::vector<T> mean(d, T(0)), var(d, T(0)), inv(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += xd[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      T c = xd[i * d + j] - mean[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    var[j] /= static_cast<T>(n);
    inv[j] = T(1) / std::sqrt(var[j] + state.eps);
  }

  if (!state.frozen_stats) {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    T m = state.momentum;
    for (std::size_t j = 0; j < d; ++j) {
      rm[j] = (T(1) - m) * rm[j] + m * mean[j];
      rv[j] = (T(1) - m) * rv[j] + m * var[j];
    }
  }

  std::vector<T> xhat(n * d), y(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xd[i * d + j] - mean[j]) * inv[j];
      y[i * d + j] = gd[j] * xhat[i * d + j] + bd[j];
    }
  Ten<T> gain = state.gain, bias = state.bias;
  return Ten<T>::make_node(
      {n, d}, std::move(y), {x, gain, bias},
      [x, gain, bias, n, d, xhat = std::move(xhat), inv = std::move(inv)](NodeT<T>& out) {
        T* gx = grad_dst(x);
        T* gg = grad_dst(gain);
        T* gb = grad_dst(bias);
        auto gd = gain.data();
        for (std::size_t j = 0; j < d; ++j) {
          T c1 = T(0), c2 = T(0);
          for (std::size_t i = 0; i < n; ++i) {
            T h = out.grad[i * d + j] * gd[j];
            c1 += h;
            c2 += h * xhat[i * d + j];
          }
          if (gg) {
            for (std::size_t i = 0; i < n; ++i) gg[j] += out.grad[i * d + j] * xhat[i * d + j];
          }
          if (gb) {
            for (std::size_t i = 0; i < n; ++i) gb[j] += out.grad[i * d + j];
          }
          if (gx) {
            c1 /= static_cast<T>(n);
            c2 /= static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i) {
              T h = out.grad[i * d + j] * gd[j];
              gx[i * d + j] += inv[j] * (h - c1 - xhat[i * d + j] * c2);
            }
          }
        }
      });
}

// Full (non-causal) multi-head self-attention, scale 1/sqrt(d/n_heads).
template <class T>
struct MhaT {
  LinearT<T> wq, wk, wv, wo;
  std::size_t n_heads = 1;

  Ten<T> forward(const Ten<T>& x) const {
    std::size_t d = x.dim(1);
    if (d % n_heads != 0)
      throw ConfigError("multi_head_attention: width " + std::to_string(d) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    std::size_t dh = d / n_heads;
    Ten<T> q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    Ten<T> out;
    for (std::size_t h = 0; h < n_heads; ++h) {
      Ten<T> qh = slice_last(q, h * dh, dh);
      Ten<T> kh = slice_last(k, h * dh, dh);
      Ten<T> vh = slice_last(v, h * dh, dh);
      Ten<T> attn = softmax_last(scale(matmul_nt(qh, kh), inv_sqrt));
      Ten<T> oh = matmul(attn, vh);
      out = out.defined() ? concat_last(out, oh) : oh;
    }
    return wo.forward(out);
  }
};

template <class T>
MhaT<T> make_mha(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d, std::size_t n_heads,
                 Rng& rng) {
  if (n_heads == 0 || d % n_heads != 0)
    throw ConfigError("multi_head_attention: width " + std::to_string(d) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  MhaT<T> m;
  m.n_heads = n_heads;
  m.wq = make_linear(ps, prefix + ".wq", d, d, rng);
  m.wk = make_linear(ps, prefix + ".wk", d, d, rng);
  m.wv = make_linear(ps, prefix + ".wv", d, d, rng);
  m.wo = make_linear(ps, prefix + ".wo", d, d, rng);
  return m;
}

// Classic post-norm transformer encoder layer (attention, then ReLU FF).
template <class T>
struct EncoderLayerT {
  MhaT<T> attn;
  LayerNormT<T> ln1, ln2;
  LinearT<T> ff1, ff2;

  Ten<T> forward(const Ten<T>& x) const {
    Ten<T> a = ln1.forward(add(x, attn.forward(x)));
    Ten<T> f = ff2.forward(relu(ff1.forward(a)));
    return ln2.forward(add(a, f));
  }
};

template <class T>
EncoderLayerT<T> make_encoder_layer(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d,
                                    std::size_t n_heads, std::size_t ff_mult, Rng& rng) {
  EncoderLayerT<T> l;
  l.attn = make_mha(ps, prefix + ".attn", d, n_heads, rng);
  l.ln1 = make_layer_norm(ps, prefix + ".ln1", d);
  l.ln2 = make_layer_norm(ps, prefix + ".ln2", d);
  l.ff1 = make_linear(ps, prefix + ".ff1", d, d * ff_mult, rng);
  l.ff2 = make_linear(ps, prefix + ".ff2", d * ff_mult, d, rng);
  return l;
}

// Pre-norm feed-forward with swish; the macaron halves of a Conformer block.
template <class T>
struct ConformerFFT {
  LayerNormT<T> ln;
  LinearT<T> w1, w2;
  Ten<T> forward(const Ten<T>& x) const { return w2.forward(swish(w1.forward(ln.forward(x)))); }
};

template <class T>
ConformerFFT<T> make_conformer_ff(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d,
                                  std::size_t ff_mult, Rng& rng) {
  ConformerFFT<T> f;
  f.ln = make_layer_norm(ps, prefix + ".ln", d);
  f.w1 = make_linear(ps, prefix + ".w1", d, d * ff_mult, rng);
  f.w2 = make_linear(ps, prefix + ".w2", d * ff_mult, d, rng);
  return f;
}

// Conformer convolution module: pointwise to 2d, GLU, depthwise, batch norm,
// swish, pointwise back to d. The batch norm here is the only one in the
// whole model.
template <class T>
struct ConvModuleT {
  LayerNormT<T> ln;
  LinearT<T> pw1;  // d -> 2d
  Ten<T> dw_w;     // [k, d]
  Ten<T> dw_b;     // [d]
  BatchNorm1dT<T> bn;
  LinearT<T> pw2;  // d -> d

  Ten<T> forward(const Ten<T>& x, Mode mode) {
    std::size_t d = x.dim(1);
    Ten<T> y = pw1.forward(ln.forward(x));
    Ten<T> a = slice_last(y, 0, d);
    Ten<T> g = slice_last(y, d, d);
    y = mul(a, sigmoid(g));  // GLU
    y = depthwise_conv1d(y, dw_w, dw_b);
    y = batch_norm_1d(y, bn, mode);
    y = swish(y);
    return pw2.forward(y);
  }
};

template <class T>
ConvModuleT<T> make_conv_module(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d,
                                std::size_t k, Rng& rng) {
  ConvModuleT<T> c;
  c.ln = make_layer_norm(ps, prefix + ".ln", d);
  c.pw1 = make_linear(ps, prefix + ".pw1", d, 2 * d, rng);
  T bound = glorot_bound<T>(k * d, d);
  c.dw_w = ps.add(prefix + ".dw_w", Ten<T>::uniform({k, d}, rng, -bound, bound));
  c.dw_b = ps.add(prefix + ".dw_b", Ten<T>::zeros({d}));
  c.bn = make_batch_norm(ps, prefix + ".bn", d);
  c.pw2 = make_linear(ps, prefix + ".pw2", d, d, rng);
  return c;
}

// Conformer-lite block: half-scaled FF, attention, conv module, half-scaled
// FF, final layer norm, all residual.
template <class T>
struct ConformerBlockT {
  ConformerFFT<T> ff1, ff2;
  LayerNormT<T> attn_ln;
  MhaT<T> attn;
  ConvModuleT<T> conv;
  LayerNormT<T> ln_final;

  Ten<T> forward(const Ten<T>& x0, Mode mode) {
    Ten<T> x = add(x0, scale(ff1.forward(x0), T(0.5)));
    x = add(x, attn.forward(attn_ln.forward(x)));
    x = add(x, conv.forward(x, mode));
    x = add(x, scale(ff2.forward(x), T(0.5)));
    return ln_final.forward(x);
  }
};

template <class T>
ConformerBlockT<T> make_conformer_block(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d,
                                        std::size_t n_heads, std::size_t k, std::size_t ff_mult,
                                        Rng& rng) {
  ConformerBlockT<T> b;
  b.ff1 = make_conformer_ff(ps, prefix + ".ff1", d, ff_mult, rng);
  b.ff2 = make_conformer_ff(ps, prefix + ".ff2", d, ff_mult, rng);
  b.attn_ln = make_layer_norm(ps, prefix + ".attn_ln", d);
  b.attn = make_mha(ps, prefix + ".attn", d, n_heads, rng);
  b.conv = make_conv_module(ps, prefix + ".conv", d, k, rng);
  b.ln_final = make_layer_norm(ps, prefix + ".ln_final", d);
  return b;
}

// Fixed sinusoidal positions, added to embeddings; not a parameter.
template <class T>
Ten<T> sinusoidal_positions(std::size_t n, std::size_t d) {
  std::vector<T> p(n * d);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t j = 0; j < d; ++j) {
      double angle = static_cast<double>(pos) /
                     std::pow(10000.0, 2.0 * static_cast<double>(j / 2) / static_cast<double>(d));
      p[pos * d + j] = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Ten<T>::from({n, d}, std::move(p));
}

}  // namespace alba
