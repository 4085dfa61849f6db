#pragma once

#include <map>
#include <string>
#include <vector>

#include "alba/nn.hpp"
#include "alba/ops.hpp"
#include "alba/param_store.hpp"

namespace alba {

// Bottleneck residual adapter:
//   h' = h + dropout(relu(layer_norm(h) @ W_down + b_down) @ W_up + b_up)
// Zero-initialized up projection makes a fresh adapter an exact identity.
template <class T>
struct ResidualAdapterT {
  std::size_t d = 0;
  std::size_t r = 0;
  Ten<T> ln_gain, ln_bias;
  Ten<T> w_down, b_down;  // [d, r], [r]
  Ten<T> w_up, b_up;      // [r, d], [d]
  T ln_eps = static_cast<T>(1e-5);
  double dropout_rate = 0.1;

  Ten<T> forward(const Ten<T>& h, Mode mode, Rng& rng) const {
    if (h.shape().back() != d)
      throw DimensionError("adapter_forward: input width " + shape_str(h.shape()) +
                           " does not match adapter d=" + std::to_string(d));
    Ten<T> z = layer_norm(h, ln_gain, ln_bias, ln_eps);
    z = relu(add_rowvec(matmul(z, w_down), b_down));
    z = add_rowvec(matmul(z, w_up), b_up);
    z = dropout(z, dropout_rate, mode, rng);
    return add(h, z);
  }

  // 2d layer norm + (dr + r) down + (rd + d) up
  std::size_t param_count() const { return 3 * d + 2 * d * r + r; }
};

namespace adapterdetail {
template <class T>
void validate_rank(std::size_t d, std::size_t r) {
  if (r < 1 || r > d)
    throw ConfigError("adapter: bottleneck r=" + std::to_string(r) + " must satisfy 1 <= r <= d=" +
                      std::to_string(d));
}
}  // namespace adapterdetail

// Registers the adapter's parameters in `ps` under `prefix.`; identity at
// init (w_up = b_up = 0, Glorot down projection).
template <class T>
ResidualAdapterT<T> make_adapter(ParamStoreT<T>& ps, const std::string& prefix, std::size_t d,
                                 std::size_t r, Rng& rng, double dropout_rate) {
  adapterdetail::validate_rank<T>(d, r);
  ResidualAdapterT<T> a;
  a.d = d;
  a.r = r;
  a.dropout_rate = dropout_rate;
  a.ln_gain = ps.add(prefix + ".ln_gain", Ten<T>::full({d}, T(1)));
  a.ln_bias = ps.add(prefix + ".ln_bias", Ten<T>::zeros({d}));
  T bound = glorot_bound<T>(d, r);
  a.w_down = ps.add(prefix + ".w_down", Ten<T>::uniform({d, r}, rng, -bound, bound));
  a.b_down = ps.add(prefix + ".b_down", Ten<T>::zeros({r}));
  a.w_up = ps.add(prefix + ".w_up", Ten<T>::zeros({r, d}));
  a.b_up = ps.add(prefix + ".b_up", Ten<T>::zeros({d}));
  return a;
}

// Standalone adapter (own throwaway store); the tests use this.
template <class T>
ResidualAdapterT<T> init_adapter(std::size_t d, std::size_t r, Rng& rng, double dropout_rate = 0.1) {
  ParamStoreT<T> scratch;
  return make_adapter(scratch, "adapter", d, r, rng, dropout_rate);
}

// site name -> adapter, e.g. "decoder_block0", "variance_f0_sub1"
template <class T>
using AdapterSetT = std::map<std::string, ResidualAdapterT<T>>;

using AdapterSet = AdapterSetT<float>;

// count = n_sites * (3d + 2dr + r); percent relative to the backbone total.
struct AdapterParamCount {
  std::size_t count = 0;
  double percent = 0.0;
};

AdapterParamCount count_adapter_params(std::size_t d, std::size_t r, std::size_t n_sites,
                                       double backbone_total);

// Per-speaker deployment artifact: one adapter per insertion site plus the
// learned speaker embedding row, tied to a backbone config fingerprint.
struct AdapterPack {
  std::string speaker_label;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> sites;  // insertion order
  AdapterSet adapters;
  Tensor speaker_vec;
  ParamStore params;  // owns every tensor above: "adapter.<site>.*" + "speaker_vec"

  std::size_t adapter_param_count() const {
    std::size_t n = 0;
    for (const auto& [site, a] : adapters) n += a.param_count();
    return n;
  }
  std::size_t total_param_count() const { return params.total_params(); }
};

// Fresh pack: identity adapters on the named sites, speaker_vec as given.
AdapterPack make_adapter_pack(const std::string& speaker_label, std::uint64_t fingerprint,
                              const std::vector<std::string>& sites,
                              const std::map<std::string, std::size_t>& site_widths,
                              std::size_t r_decoder, std::size_t r_variance,
                              std::vector<float> speaker_vec_init, Rng& rng, double dropout_rate);

// "APK1" container: ALB1 entry block plus speaker label, fingerprint and the
// ordered site list in the header.
void save_pack(const AdapterPack& pack, const std::string& path);
AdapterPack load_pack(const std::string& path);

}  // namespace alba
