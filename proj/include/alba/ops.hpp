#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "alba/kernels.hpp"
#include "alba/tensor.hpp"

// Differentiable tensor operations. Forward math goes through the kernel
// table; backward closures accumulate into whichever parents require grad.
namespace alba {

enum class Mode { train, infer };

namespace opdetail {

template <class T>
void require_same_shape(const char* op, const Ten<T>& a, const Ten<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class T>
void require_rank2(const char* op, const Ten<T>& x) {
  if (x.rank() != 2)
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(x.shape()));
}

}  // namespace opdetail

// ---------------------------------------------------------------------------
// elementwise

template <class T>
Ten<T> add(const Ten<T>& a, const Ten<T>& b) {
  opdetail::require_same_shape("add", a, b);
  using K = kern::Ops<T>;
  std::vector<T> y(a.numel());
  K::add(a.data().data(), b.data().data(), y.data(), y.size());
  return Ten<T>::make_node(a.shape(), std::move(y), {a, b}, [a, b](NodeT<T>& out) {
    using KK = kern::Ops<T>;
    if (T* ga = grad_dst(a)) KK::axpy(T(1), out.grad.data(), ga, out.grad.size());
    if (T* gb = grad_dst(b)) KK::axpy(T(1), out.grad.data(), gb, out.grad.size());
  });
}

template <class T>
Ten<T> sub(const Ten<T>& a, const Ten<T>& b) {
  opdetail::require_same_shape("sub", a, b);
  using K = kern::Ops<T>;
  std::vector<T> y(a.numel());
  K::sub(a.data().data(), b.data().data(), y.data(), y.size());
  return Ten<T>::make_node(a.shape(), std::move(y), {a, b}, [a, b](NodeT<T>& out) {
    using KK = kern::Ops<T>;
    if (T* ga = grad_dst(a)) KK::axpy(T(1), out.grad.data(), ga, out.grad.size());
    if (T* gb = grad_dst(b)) KK::axpy(T(-1), out.grad.data(), gb, out.grad.size());
  });
}

template <class T>
Ten<T> mul(const Ten<T>& a, const Ten<T>& b) {
  opdetail::require_same_shape("elementwise-mul", a, b);
  using K = kern::Ops<T>;
  std::vector<T> y(a.numel());
  K::mul(a.data().data(), b.data().data(), y.data(), y.size());
  return Ten<T>::make_node(a.shape(), std::move(y), {a, b}, [a, b](NodeT<T>& out) {
    using KK = kern::Ops<T>;
    if (T* ga = grad_dst(a)) KK::mul_acc(out.grad.data(), b.data().data(), ga, out.grad.size());
    if (T* gb = grad_dst(b)) KK::mul_acc(out.grad.data(), a.data().data(), gb, out.grad.size());
  });
}

template <class T>
Ten<T> scale(const Ten<T>& x, T c) {
  using K = kern::Ops<T>;
  std::vector<T> y(x.numel());
  K::scale(x.data().data(), c, y.data(), y.size());
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x, c](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) kern::Ops<T>::axpy(c, out.grad.data(), gx, out.grad.size());
  });
}

template <class T>
Ten<T> relu(const Ten<T>& x) {
  using K = kern::Ops<T>;
  std::vector<T> y(x.numel());
  K::relu(x.data().data(), y.data(), y.size());
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) kern::Ops<T>::relu_bwd(x.data().data(), out.grad.data(), gx, out.grad.size());
  });
}

// |x|; subgradient at 0 is 0, consistent with the ReLU convention.
template <class T>
Ten<T> abs_val(const Ten<T>& x) {
  std::vector<T> y(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] < T(0) ? -xd[i] : xd[i];
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      auto xd = x.data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        if (xd[i] > T(0)) gx[i] += out.grad[i];
        else if (xd[i] < T(0)) gx[i] -= out.grad[i];
      }
    }
  });
}

template <class T>
Ten<T> sigmoid(const Ten<T>& x) {
  std::vector<T> y(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-xd[i]));
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        gx[i] += out.grad[i] * out.data[i] * (T(1) - out.data[i]);
    }
  });
}

template <class T>
Ten<T> swish(const Ten<T>& x) {
  return mul(x, sigmoid(x));
}

template <class T>
Ten<T> log_op(const Ten<T>& x) {
  std::vector<T> y(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(xd[i]);
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      auto xd = x.data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) gx[i] += out.grad[i] / xd[i];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Ten<T> sum_all(const Ten<T>& x) {
  T s = kern::Ops<T>::sum(x.data().data(), x.numel());
  return Ten<T>::make_node({1}, {s}, {x}, [x](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      T u = out.grad[0];
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += u;
    }
  });
}

template <class T>
Ten<T> mean_all(const Ten<T>& x) {
  std::size_t n = x.numel();
  T s = kern::Ops<T>::sum(x.data().data(), n) / static_cast<T>(n);
  return Ten<T>::make_node({1}, {s}, {x}, [x, n](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      T u = out.grad[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) gx[i] += u;
    }
  });
}

// Column means of a [n, d] matrix -> [d].
template <class T>
Ten<T> mean_rows(const Ten<T>& x) {
  opdetail::require_rank2("mean_rows", x);
  std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<T> y(d, T(0));
  using K = kern::Ops<T>;
  for (std::size_t i = 0; i < n; ++i) K::axpy(T(1), x.data().data() + i * d, y.data(), d);
  K::scale(y.data(), T(1) / static_cast<T>(n), y.data(), d);
  return Ten<T>::make_node({d}, std::move(y), {x}, [x, n, d](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      T inv = T(1) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i)
        kern::Ops<T>::axpy(inv, out.grad.data(), gx + i * d, d);
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops

template <class T>
Ten<T> reshape(const Ten<T>& x, const Shape& s) {
  if (shape_numel(s) != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(s) +
                         " changes element count");
  std::vector<T> y(x.data().begin(), x.data().end());
  return Ten<T>::make_node(s, std::move(y), {x}, [x](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) kern::Ops<T>::axpy(T(1), out.grad.data(), gx, out.grad.size());
  });
}

template <class T>
Ten<T> transpose2d(const Ten<T>& x) {
  opdetail::require_rank2("transpose", x);
  std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> y(m * n);
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = xd[i * n + j];
  return Ten<T>::make_node({n, m}, std::move(y), {x}, [x, m, n](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += out.grad[j * m + i];
    }
  });
}

template <class T>
Ten<T> concat_last(const Ten<T>& a, const Ten<T>& b) {
  opdetail::require_rank2("concat-last-axis", a);
  opdetail::require_rank2("concat-last-axis", b);
  if (a.dim(0) != b.dim(0))
    throw DimensionError("concat-last-axis: row counts differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  std::vector<T> y(n * (da + db));
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(y.data() + i * (da + db), ad.data() + i * da, da * sizeof(T));
    std::memcpy(y.data() + i * (da + db) + da, bd.data() + i * db, db * sizeof(T));
  }
  return Ten<T>::make_node({n, da + db}, std::move(y), {a, b}, [a, b, n, da, db](NodeT<T>& out) {
    std::size_t w = da + db;
    if (T* ga = grad_dst(a)) {
      for (std::size_t i = 0; i < n; ++i)
        kern::Ops<T>::axpy(T(1), out.grad.data() + i * w, ga + i * da, da);
    }
    if (T* gb = grad_dst(b)) {
      for (std::size_t i = 0; i < n; ++i)
        kern::Ops<T>::axpy(T(1), out.grad.data() + i * w + da, gb + i * db, db);
    }
  });
}

template <class T>
Ten<T> slice_last(const Ten<T>& x, std::size_t start, std::size_t len) {
  opdetail::require_rank2("slice", x);
  std::size_t n = x.dim(0), d = x.dim(1);
  if (start + len > d || len == 0)
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of width " + std::to_string(d));
  std::vector<T> y(n * len);
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(y.data() + i * len, xd.data() + i * d + start, len * sizeof(T));
  return Ten<T>::make_node({n, len}, std::move(y), {x}, [x, n, d, start, len](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      for (std::size_t i = 0; i < n; ++i)
        kern::Ops<T>::axpy(T(1), out.grad.data() + i * len, gx + i * d + start, len);
    }
  });
}

// Broadcast a vector to n identical rows.
template <class T>
Ten<T> tile_rows(const Ten<T>& v, std::size_t n) {
  if (v.rank() != 1) throw DimensionError("tile_rows: expected rank-1 tensor, got " + shape_str(v.shape()));
  std::size_t d = v.dim(0);
  std::vector<T> y(n * d);
  for (std::size_t i = 0; i < n; ++i) std::memcpy(y.data() + i * d, v.data().data(), d * sizeof(T));
  return Ten<T>::make_node({n, d}, std::move(y), {v}, [v, n, d](NodeT<T>& out) {
    if (T* gv = grad_dst(v)) {
      for (std::size_t i = 0; i < n; ++i) kern::Ops<T>::axpy(T(1), out.grad.data() + i * d, gv, d);
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra

template <class T>
Ten<T> matmul(const Ten<T>& a, const Ten<T>& b) {
  opdetail::require_rank2("matmul", a);
  opdetail::require_rank2("matmul", b);
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> y(m * n);
  kern::Ops<T>::matmul_nn(a.data().data(), b.data().data(), y.data(), m, k, n);
  return Ten<T>::make_node({m, n}, std::move(y), {a, b}, [a, b, m, k, n](NodeT<T>& out) {
    using K = kern::Ops<T>;
    if (T* ga = grad_dst(a)) K::matmul_nt_acc(out.grad.data(), b.data().data(), ga, m, n, k);
    if (T* gb = grad_dst(b)) K::matmul_tn_acc(a.data().data(), out.grad.data(), gb, k, m, n);
  });
}

// a @ b^T with b given row-major [n, k]; the attention-score shape.
template <class T>
Ten<T> matmul_nt(const Ten<T>& a, const Ten<T>& b) {
  opdetail::require_rank2("matmul_nt", a);
  opdetail::require_rank2("matmul_nt", b);
  if (a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<T> y(m * n, T(0));
  kern::Ops<T>::matmul_nt_acc(a.data().data(), b.data().data(), y.data(), m, k, n);
  return Ten<T>::make_node({m, n}, std::move(y), {a, b}, [a, b, m, k, n](NodeT<T>& out) {
    using K = kern::Ops<T>;
    if (T* ga = grad_dst(a)) K::matmul_nn_acc(out.grad.data(), b.data().data(), ga, m, n, k);
    if (T* gb = grad_dst(b)) K::matmul_tn_acc(out.grad.data(), a.data().data(), gb, n, m, k);
  });
}

// x[n,d] + row vector v[d]; the bias pattern.
template <class T>
Ten<T> add_rowvec(const Ten<T>& x, const Ten<T>& v) {
  opdetail::require_rank2("add_rowvec", x);
  if (v.rank() != 1 || v.dim(0) != x.dim(1))
    throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<T> y(n * d);
  using K = kern::Ops<T>;
  for (std::size_t i = 0; i < n; ++i)
    K::add(x.data().data() + i * d, v.data().data(), y.data() + i * d, d);
  return Ten<T>::make_node({n, d}, std::move(y), {x, v}, [x, v, n, d](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) kern::Ops<T>::axpy(T(1), out.grad.data(), gx, n * d);
    if (T* gv = grad_dst(v)) {
      for (std::size_t i = 0; i < n; ++i) kern::Ops<T>::axpy(T(1), out.grad.data() + i * d, gv, d);
    }
  });
}

// x + t * dir with a single-element t; the scalar-blend form used by
// directional derivative checks and parameter interpolation.
template <class T>
Ten<T> add_scaled(const Ten<T>& x, const Ten<T>& dir, const Ten<T>& t) {
  opdetail::require_same_shape("add_scaled", x, dir);
  if (t.numel() != 1) throw DimensionError("add_scaled: scale must be a single-element tensor");
  using K = kern::Ops<T>;
  std::vector<T> y(x.data().begin(), x.data().end());
  K::axpy(t.data()[0], dir.data().data(), y.data(), y.size());
  return Ten<T>::make_node(x.shape(), std::move(y), {x, dir, t}, [x, dir, t](NodeT<T>& out) {
    using KK = kern::Ops<T>;
    if (T* gx = grad_dst(x)) KK::axpy(T(1), out.grad.data(), gx, out.grad.size());
    if (T* gd = grad_dst(dir)) KK::axpy(t.data()[0], out.grad.data(), gd, out.grad.size());
    if (T* gt = grad_dst(t)) gt[0] += KK::dot(dir.data().data(), out.grad.data(), out.grad.size());
  });
}

// ---------------------------------------------------------------------------
// softmax & losses

template <class T>
Ten<T> softmax_last(const Ten<T>& x) {
  if (x.rank() < 1) throw DimensionError("softmax-last-axis: rank-0 input");
  std::size_t d = x.shape().back();
  std::size_t rows = x.numel() / d;
  std::vector<T> y(x.numel());
  auto xd = x.data();
  using K = kern::Ops<T>;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* px = xd.data() + r * d;
    T* py = y.data() + r * d;
    T m = K::max_val(px, d);
    for (std::size_t j = 0; j < d; ++j) py[j] = std::exp(px[j] - m);
    T s = K::sum(py, d);
    K::scale(py, T(1) / s, py, d);
  }
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x, rows, d](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      using KK = kern::Ops<T>;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* py = out.data.data() + r * d;
        const T* pu = out.grad.data() + r * d;
        T t = KK::dot(pu, py, d);
        T* pg = gx + r * d;
        for (std::size_t j = 0; j < d; ++j) pg[j] += py[j] * (pu[j] - t);
      }
    }
  });
}

// Mean negative log-likelihood over rows; numerically stable log-sum-exp.
template <class T>
Ten<T> cross_entropy(const Ten<T>& logits, const std::vector<std::uint32_t>& targets) {
  opdetail::require_rank2("cross_entropy", logits);
  std::size_t n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != n)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  for (std::uint32_t t : targets)
    if (t >= c) throw DataError("cross_entropy: target " + std::to_string(t) + " out of range " + std::to_string(c));
  using K = kern::Ops<T>;
  auto xd = logits.data();
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = xd.data() + i * c;
    T m = K::max_val(row, c);
    T s = T(0);
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    loss += m + std::log(s) - row[targets[i]];
  }
  loss /= static_cast<T>(n);
  return Ten<T>::make_node({1}, {loss}, {logits}, [logits, targets, n, c](NodeT<T>& out) {
    if (T* gx = grad_dst(logits)) {
      using KK = kern::Ops<T>;
      T u = out.grad[0] / static_cast<T>(n);
      auto xd = logits.data();
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = xd.data() + i * c;
        T m = KK::max_val(row, c);
        T s = T(0);
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        T* g = gx + i * c;
        for (std::size_t j = 0; j < c; ++j) g[j] += u * (std::exp(row[j] - m) / s);
        g[targets[i]] -= u;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// lookup / gather

template <class T>
Ten<T> embedding_lookup(const Ten<T>& table, const std::vector<std::uint32_t>& ids) {
  opdetail::require_rank2("embedding-lookup", table);
  std::size_t v = table.dim(0), d = table.dim(1), n = ids.size();
  if (n == 0) throw DimensionError("embedding-lookup: empty id sequence");
  for (std::uint32_t id : ids)
    if (id >= v)
      throw VocabError("embedding-lookup: id " + std::to_string(id) + " out of vocabulary size " +
                       std::to_string(v));
  std::vector<T> y(n * d);
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(y.data() + i * d, table.data().data() + ids[i] * d, d * sizeof(T));
  return Ten<T>::make_node({n, d}, std::move(y), {table}, [table, ids, n, d](NodeT<T>& out) {
    if (T* gt = grad_dst(table)) {
      for (std::size_t i = 0; i < n; ++i)
        kern::Ops<T>::axpy(T(1), out.grad.data() + i * d, gt + ids[i] * d, d);
    }
  });
}

template <class T>
Ten<T> take_per_row(const Ten<T>& x, const std::vector<std::uint32_t>& cols) {
  opdetail::require_rank2("take_per_row", x);
  std::size_t n = x.dim(0), d = x.dim(1);
  if (cols.size() != n) throw DimensionError("take_per_row: index count mismatch");
  std::vector<T> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= d) throw DataError("take_per_row: column " + std::to_string(cols[i]) + " out of range");
    y[i] = x.data()[i * d + cols[i]];
  }
  return Ten<T>::make_node({n}, std::move(y), {x}, [x, cols, n, d](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) {
      for (std::size_t i = 0; i < n; ++i) gx[i * d + cols[i]] += out.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// dropout

// Inverted dropout: train mode zeroes with probability rate and scales
// survivors by 1/(1-rate); infer mode is the exact identity (same node).
template <class T>
Ten<T> dropout(const Ten<T>& x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::infer || rate == 0.0) return x;
  std::vector<T> mask(x.numel());
  T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = rng.next_double() < rate ? T(0) : keep_scale;
  std::vector<T> y(x.numel());
  kern::Ops<T>::mul(x.data().data(), mask.data(), y.data(), y.size());
  return Ten<T>::make_node(x.shape(), std::move(y), {x}, [x, mask = std::move(mask)](NodeT<T>& out) {
    if (T* gx = grad_dst(x)) kern::Ops<T>::mul_acc(out.grad.data(), mask.data(), gx, out.grad.size());
  });
}

// ---------------------------------------------------------------------------
// normalization

// Layer norm across the last axis; biased variance, affine parameters.
template <class T>
Ten<T> layer_norm(const Ten<T>& x, const Ten<T>& gain, const Ten<T>& bias, T eps) {
  std::size_t d = x.shape().back();
  if (d < 2)
    throw DimensionError("layer_norm: last axis must have d >= 2 (normalizing a single value is degenerate)");
  if (eps <= T(0)) throw ConfigError("layer_norm: eps must be positive");
  if (gain.numel() != d || bias.numel() != d)
    throw DimensionError("layer_norm: gain/bias length must equal last axis " + std::to_string(d));
  std::size_t rows = x.numel() / d;
  std::vector<T> y(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  using K = kern::Ops<T>;
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* px = xd.data() + r * d;
    T mean = K::sum(px, d) / static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      T c = px[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    T* ph = xhat.data() + r * d;
    T* py = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      ph[j] = (px[j] - mean) * inv;
      py[j] = gd[j] * ph[j] + bd[j];
    }
  }
  return Ten<T>::make_node(
      x.shape(), std::move(y), {x, gain, bias},
      [x, gain, bias, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](NodeT<T>& out) {
        T* gx = grad_dst(x);
        T* gg = grad_dst(gain);
        T* gb = grad_dst(bias);
        auto gd = gain.data();
        std::vector<T> h(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* pu = out.grad.data() + r * d;
          const T* ph = xhat.data() + r * d;
          if (gg)
            for (std::size_t j = 0; j < d; ++j) gg[j] += pu[j] * ph[j];
          if (gb)
            for (std::size_t j = 0; j < d; ++j) gb[j] += pu[j];
          if (gx) {
            T c1 = T(0), c2 = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              h[j] = pu[j] * gd[j];
              c1 += h[j];
              c2 += h[j] * ph[j];
            }
            c1 /= static_cast<T>(d);
            c2 /= static_cast<T>(d);
            T inv = inv_std[r];
            T* pg = gx + r * d;
            for (std::size_t j = 0; j < d; ++j) pg[j] += inv * (h[j] - c1 - ph[j] * c2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// convolution

// Same-padded cross-correlation along time. x[t, c_in], kernel [k, c_in, c_out].
template <class T>
Ten<T> conv1d(const Ten<T>& x, const Ten<T>& kernel, const Ten<T>& bias) {
  opdetail::require_rank2("conv1d", x);
  if (kernel.rank() != 3)
    throw DimensionError("conv1d: kernel must be rank-3 [k, c_in, c_out], got " + shape_str(kernel.shape()));
  std::size_t k = kernel.dim(0), ci = kernel.dim(1), co = kernel.dim(2);
  if (k % 2 == 0) throw ConfigError("conv1d: unsupported even kernel size " + std::to_string(k));
  if (x.dim(1) != ci)
    throw DimensionError("conv1d: input channels " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
  if (bias.numel() != co) throw DimensionError("conv1d: bias length must equal c_out");
  std::size_t t = x.dim(0);
  std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  std::vector<T> y(t * co);
  for (std::size_t f = 0; f < t; ++f)
    std::memcpy(y.data() + f * co, bias.data().data(), co * sizeof(T));
  using K = kern::Ops<T>;
  auto xd = x.data();
  auto wd = kernel.data();
  for (std::size_t j = 0; j < k; ++j) {
    std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
    std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
    std::size_t hi = off > 0 ? t - static_cast<std::size_t>(off) : t;
    if (lo >= hi) continue;
    // rows [lo, hi) of output see rows [lo+off, hi+off) of input
    K::matmul_nn_acc(xd.data() + (lo + off) * ci, wd.data() + j * ci * co, y.data() + lo * co,
                     hi - lo, ci, co);
  }
  return Ten<T>::make_node(
      {t, co}, std::move(y), {x, kernel, bias}, [x, kernel, bias, t, k, ci, co](NodeT<T>& out) {
        using KK = kern::Ops<T>;
        std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
        T* gx = grad_dst(x);
        T* gw = grad_dst(kernel);
        T* gb = grad_dst(bias);
        if (gb) {
          for (std::size_t f = 0; f < t; ++f) KK::axpy(T(1), out.grad.data() + f * co, gb, co);
        }
        for (std::size_t j = 0; j < k; ++j) {
          std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
          std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
          std::size_t hi = off > 0 ? t - static_cast<std::size_t>(off) : t;
          if (lo >= hi) continue;
          std::size_t rows = hi - lo;
          const T* xs = x.data().data() + (lo + off) * ci;
          const T* us = out.grad.data() + lo * co;
          if (gw) KK::matmul_tn_acc(xs, us, gw + j * ci * co, ci, rows, co);
          if (gx) KK::matmul_nt_acc(us, kernel.data().data() + j * ci * co, gx + (lo + off) * ci, rows, co, ci);
        }
      });
}

// Per-channel convolution along time. x[t, c], kernel [k, c].
template <class T>
Ten<T> depthwise_conv1d(const Ten<T>& x, const Ten<T>& kernel, const Ten<T>& bias) {
  opdetail::require_rank2("depthwise_conv1d", x);
  opdetail::require_rank2("depthwise_conv1d", kernel);
  std::size_t k = kernel.dim(0), c = kernel.dim(1);
  if (k % 2 == 0) throw ConfigError("depthwise_conv1d: unsupported even kernel size " + std::to_string(k));
  if (x.dim(1) != c || bias.numel() != c)
    throw DimensionError("depthwise_conv1d: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(kernel.shape()));
  std::size_t t = x.dim(0);
  std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  std::vector<T> y(t * c);
  for (std::size_t f = 0; f < t; ++f) std::memcpy(y.data() + f * c, bias.data().data(), c * sizeof(T));
  using K = kern::Ops<T>;
  for (std::size_t j = 0; j < k; ++j) {
    std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
    std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
    std::size_t hi = off > 0 ? t - static_cast<std::size_t>(off) : t;
    const T* wrow = kernel.data().data() + j * c;
    for (std::size_t f = lo; f < hi; ++f)
      K::mul_acc(x.data().data() + (f + off) * c, wrow, y.data() + f * c, c);
  }
  return Ten<T>::make_node(
      {t, c}, std::move(y), {x, kernel, bias}, [x, kernel, bias, t, k, c](NodeT<T>& out) {
        using KK = kern::Ops<T>;
        std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
        T* gx = grad_dst(x);
        T* gw = grad_dst(kernel);
        T* gb = grad_dst(bias);
        if (gb)
          for (std::size_t f = 0; f < t; ++f) KK::axpy(T(1), out.grad.data() + f * c, gb, c);
        for (std::size_t j = 0; j < k; ++j) {
          std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
          std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
          std::size_t hi = off > 0 ? t - static_cast<std::size_t>(off) : t;
          const T* wrow = kernel.data().data() + j * c;
          for (std::size_t f = lo; f < hi; ++f) {
            const T* xrow = x.data().data() + (f + off) * c;
            const T* urow = out.grad.data() + f * c;
            if (gw) KK::mul_acc(xrow, urow, gw + j * c, c);
            if (gx) KK::mul_acc(urow, wrow, gx + (f + off) * c, c);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// primitive dispatcher

enum class OpKind {
  matmul,
  add,
  elementwise_mul,
  concat_last_axis,
  relu,
  softmax_last_axis,
  mean,
  sum,
  transpose,
  embedding_lookup,
  slice,
};

struct PrimitiveArgs {
  std::vector<std::uint32_t> ids;  // embedding-lookup
  std::size_t start = 0;           // slice
  std::size_t len = 0;             // slice
};

// Uniform entry point over the primitive op set; handy for op-coverage loops.
template <class T>
Ten<T> primitive(OpKind kind, const std::vector<Ten<T>>& in, const PrimitiveArgs& args = {}) {
  auto need = [&](std::size_t n) {
    if (in.size() != n)
      throw ContractError("primitive: expected " + std::to_string(n) + " inputs, got " +
                          std::to_string(in.size()));
  };
  switch (kind) {
    case OpKind::matmul: need(2); return matmul(in[0], in[1]);
    case OpKind::add: need(2); return add(in[0], in[1]);
    case OpKind::elementwise_mul: need(2); return mul(in[0], in[1]);
    case OpKind::concat_last_axis: need(2); return concat_last(in[0], in[1]);
    case OpKind::relu: need(1); return relu(in[0]);
    case OpKind::softmax_last_axis: need(1); return softmax_last(in[0]);
    case OpKind::mean: need(1); return mean_all(in[0]);
    case OpKind::sum: need(1); return sum_all(in[0]);
    case OpKind::transpose: need(1); return transpose2d(in[0]);
    case OpKind::embedding_lookup: need(1); return embedding_lookup(in[0], args.ids);
    case OpKind::slice: need(1); return slice_last(in[0], args.start, args.len);
  }
  throw ContractError("primitive: unknown op kind");
}

}  // namespace alba
