#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "alba/errors.hpp"
#include "alba/rng.hpp"

namespace alba {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() { return detail::grad_enabled; }

// RAII guard: disables graph construction on this thread (inference mode).
struct NoGrad {
  bool prev;
  NoGrad() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGrad() { detail::grad_enabled = prev; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

template <class T>
struct NodeT {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily; only ever for requires_grad nodes
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backprop;  // reads this->grad, accumulates into parents
};

// Value-semantic handle on a graph node. Copies share the node.
template <class T>
class Ten {
 public:
  Ten() = default;

  static Ten zeros(const Shape& s) { return from(s, std::vector<T>(shape_numel(s), T(0))); }

  static Ten full(const Shape& s, T v) { return from(s, std::vector<T>(shape_numel(s), v)); }

  static Ten scalar(T v) { return from({1}, std::vector<T>{v}); }

  static Ten from(const Shape& s, std::vector<T> values) {
    if (s.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (std::size_t d : s)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(s));
    if (shape_numel(s) != values.size())
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(s));
    auto n = std::make_shared<NodeT<T>>();
    n->shape = s;
    n->data = std::move(values);
    return Ten(std::move(n));
  }

  static Ten uniform(const Shape& s, Rng& rng, T lo, T hi) {
    std::vector<T> v(shape_numel(s));
    for (auto& x : v) x = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return from(s, std::move(v));
  }

  static Ten randn(const Shape& s, Rng& rng, T stddev) {
    std::vector<T> v(shape_numel(s));
    for (auto& x : v) x = static_cast<T>(rng.normal() * static_cast<double>(stddev));
    return from(s, std::move(v));
  }

  bool defined() const { return n_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape[i]; }
  std::size_t numel() const { return n_->data.size(); }

  std::span<T> data() { return {n_->data.data(), n_->data.size()}; }
  std::span<const T> data() const { return {n_->data.data(), n_->data.size()}; }

  T item() const {
    if (numel() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  Ten& set_requires_grad(bool v) {
    n_->requires_grad = v;
    if (!v) n_->grad.clear();
    return *this;
  }

  bool has_grad() const { return !n_->grad.empty(); }
  std::span<const T> grad() const { return {n_->grad.data(), n_->grad.size()}; }

  // Zeroed gradient buffer, allocating on first use. Only legal on
  // requires_grad tensors.
  std::span<T> ensure_grad() {
    if (!n_->requires_grad) throw ContractError("gradient requested on a tensor without requires_grad");
    if (n_->grad.empty()) n_->grad.assign(n_->data.size(), T(0));
    return {n_->grad.data(), n_->grad.size()};
  }

  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
  }
  void drop_grad() { n_->grad.clear(); }

  // Deep copy of the value; detached from any graph.
  Ten clone() const { return from(shape(), n_->data); }

  NodeT<T>* node() const { return n_.get(); }
  const std::shared_ptr<NodeT<T>>& node_ptr() const { return n_; }

  // Graph-building constructor used by every op. Parents and the backprop
  // closure are retained only when gradients are both enabled and needed.
  static Ten make_node(Shape s, std::vector<T> values, std::vector<Ten> parents,
                       std::function<void(NodeT<T>&)> backprop) {
    Ten out = from(std::move(s), std::move(values));
    bool need = false;
    if (grad_enabled())
      for (const auto& p : parents)
        if (p.requires_grad()) need = true;
    if (need) {
      out.n_->requires_grad = true;
      out.n_->parents.reserve(parents.size());
      for (auto& p : parents) out.n_->parents.push_back(p.n_);
      out.n_->backprop = std::move(backprop);
    }
    return out;
  }

 private:
  explicit Ten(std::shared_ptr<NodeT<T>> n) : n_(std::move(n)) {}
  std::shared_ptr<NodeT<T>> n_;
};

// Adds g into t's gradient when t participates in differentiation.
template <class T>
inline T* grad_dst(const std::shared_ptr<NodeT<T>>& n) {
  if (!n->requires_grad) return nullptr;
  if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
  return n->grad.data();
}

template <class T>
inline T* grad_dst(const Ten<T>& t) {
  return t.requires_grad() ? grad_dst(t.node_ptr()) : nullptr;
}

// Reverse-mode sweep from root. upstream seeds the root gradient; when empty
// the root must be scalar and is seeded with 1.
template <class T>
void backward(const Ten<T>& root, const std::vector<T>& upstream = {}) {
  if (!root.defined()) throw ContractError("backward on undefined tensor");
  if (!root.requires_grad()) return;
  NodeT<T>* rn = root.node();
  if (upstream.empty()) {
    if (root.numel() != 1)
      throw ContractError("backward without upstream requires a scalar root, got " + shape_str(root.shape()));
  } else if (upstream.size() != root.numel()) {
    throw DimensionError("backward upstream length " + std::to_string(upstream.size()) +
                         " does not match root shape " + shape_str(root.shape()));
  }

  // Iterative post-order over the requires_grad subgraph.
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> visited;
  struct Frame {
    NodeT<T>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({rn, 0});
  visited.insert(rn);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      NodeT<T>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  if (rn->grad.empty()) rn->grad.assign(rn->data.size(), T(0));
  if (upstream.empty()) {
    rn->grad[0] += T(1);
  } else {
    for (std::size_t i = 0; i < upstream.size(); ++i) rn->grad[i] += upstream[i];
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* n = *it;
    if (n->backprop) {
      if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
      n->backprop(*n);
    }
  }
}

using Tensor = Ten<float>;

}  // namespace alba
