#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "alba/rng.hpp"
#include "alba/tensor.hpp"

namespace alba {

// Named parameter registry. Iteration is lexicographic by construction
// (std::map), which fixes checkpoint entry order and makes hashes stable.
// The trainable flag and the tensor's requires_grad are kept in lockstep.
template <class T>
class ParamStoreT {
 public:
  struct Entry {
    Ten<T> tensor;
    bool trainable = true;
  };

  Ten<T>& add(const std::string& name, Ten<T> t, bool trainable = true) {
    if (entries_.count(name)) throw ContractError("param store: duplicate name '" + name + "'");
    t.set_requires_grad(trainable);
    auto [it, inserted] = entries_.emplace(name, Entry{std::move(t), trainable});
    (void)inserted;
    ++version_;
    return it->second.tensor;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Ten<T>& get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("param store: unknown name '" + name + "'");
    return it->second.tensor;
  }
  const Ten<T>& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("param store: unknown name '" + name + "'");
    return it->second.tensor;
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("param store: unknown name '" + name + "'");
    return it->second.trainable;
  }

  void set_trainable(const std::string& name, bool v) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("param store: unknown name '" + name + "'");
    if (it->second.trainable != v) {
      it->second.trainable = v;
      it->second.tensor.set_requires_grad(v);
      ++version_;
    }
  }

  void set_all_trainable(bool v) {
    for (auto& [name, e] : entries_) {
      if (e.trainable != v) {
        e.trainable = v;
        e.tensor.set_requires_grad(v);
      }
    }
    ++version_;
  }

  void set_trainable_prefix(const std::string& prefix, bool v) {
    for (auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) == 0 && e.trainable != v) {
        e.trainable = v;
        e.tensor.set_requires_grad(v);
      }
    }
    ++version_;
  }

  std::size_t size() const { return entries_.size(); }
  std::uint64_t version() const { return version_; }
  void bump() { ++version_; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  std::size_t total_params(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_)
      if (!trainable_only || e.trainable) n += e.tensor.numel();
    return n;
  }

  std::size_t trainable_count() const { return total_params(true); }

  // Allocates zeroed gradient buffers for every trainable entry so a later
  // optimizer step always sees populated gradients.
  void ensure_zero_grads() {
    for (auto& [name, e] : entries_)
      if (e.trainable) {
        e.tensor.ensure_grad();
        e.tensor.zero_grad();
      }
  }

  void drop_grads() {
    for (auto& [name, e] : entries_) e.tensor.drop_grad();
  }

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t version_ = 0;
};

using ParamStore = ParamStoreT<float>;

template <class T>
std::uint64_t tensor_bytes_hash(const Ten<T>& t) {
  return fnv1a64(t.data().data(), t.numel() * sizeof(T));
}

// Order-sensitive hash over (name, shape, bytes) of entries whose name passes
// the filter. The backbone-freeze contracts are checked with this.
template <class T, class Pred>
std::uint64_t store_hash_filtered(const ParamStoreT<T>& store, Pred&& keep) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [name, e] : store) {
    if (!keep(name)) continue;
    mix(fnv1a64(name));
    mix(e.tensor.numel());
    mix(tensor_bytes_hash(e.tensor));
  }
  return h;
}

template <class T>
std::uint64_t store_hash(const ParamStoreT<T>& store) {
  return store_hash_filtered(store, [](const std::string&) { return true; });
}

}  // namespace alba
