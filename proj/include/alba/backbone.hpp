#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "alba/adapters.hpp"
#include "alba/data.hpp"
#include "alba/nn.hpp"

namespace alba {

// ---------------------------------------------------------------------------
// config

struct BackboneConfig {
  std::size_t vocab_size = 40;
  std::size_t d_model = 32;
  std::size_t n_encoder_layers = 2;
  std::size_t n_decoder_layers = 3;
  std::size_t n_heads = 4;
  std::size_t conv_kernel = 3;
  std::size_t n_mel_bins = 16;
  std::size_t n_speakers = 8;
  std::size_t variance_hidden = 32;
  std::size_t ff_mult = 4;
  std::size_t frozen_encoder_layers = 0;
  double upsampler_sigma = 1.0;
  double ln_eps = 1e-5;
  // auxiliary per-token embedding hook (stress stand-in); 0 disables
  std::size_t aux_vocab = 0;
  std::size_t d_aux = 8;

  std::size_t d_spk() const { return d_model / 4; }
  bool aux_enabled() const { return aux_vocab > 0; }
  // conditioned width: encoder output + broadcast speaker vector (+ aux)
  std::size_t cond_width() const { return d_model + d_spk() + (aux_enabled() ? d_aux : 0); }

  void validate() const;
  std::string canonical_string() const;
  std::uint64_t fingerprint() const;
};

// Insertion sites in attachment order: one per decoder block, then (when
// enabled) one after each hidden sublayer of the three variance heads.
std::vector<std::string> adapter_sites(const BackboneConfig& cfg, bool variance_sites);
std::map<std::string, std::size_t> adapter_site_widths(const BackboneConfig& cfg, bool variance_sites);

// ---------------------------------------------------------------------------
// gaussian upsampler

std::size_t upsample_frame_count(const std::vector<double>& durations);

// Row-stochastic weight matrix [t_out, n]; row f holds softmax over tokens of
// -(t_f - c_i)^2 / (2 sigma^2) with frame centers t_f = f + 0.5 and token
// centers c_i = cumsum(d)_i - d_i / 2.
template <class T>
std::vector<T> upsample_weight_matrix(const std::vector<double>& durations, double sigma,
                                      std::size_t t_out) {
  if (sigma <= 0.0) throw ConfigError("gaussian_upsample: sigma must be positive");
  std::size_t n = durations.size();
  std::vector<double> centers(n);
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += durations[i];
    centers[i] = cum - durations[i] / 2.0;
  }
  std::vector<T> w(t_out * n);
  std::vector<double> row(n);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t f = 0; f < t_out; ++f) {
    double tf = static_cast<double>(f) + 0.5;
    double m = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      double c = tf - centers[i];
      row[i] = -c * c * inv2s2;
      m = std::max(m, row[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = std::exp(row[i] - m);
      s += row[i];
    }
    for (std::size_t i = 0; i < n; ++i) w[f * n + i] = static_cast<T>(row[i] / s);
  }
  return w;
}

// Expands token-level features to frame level. Durations are plain numbers:
// gradients flow into x only (durations are teacher-forced during training).
template <class T>
Ten<T> gaussian_upsample(const Ten<T>& x, const std::vector<double>& durations, double sigma) {
  opdetail::require_rank2("gaussian_upsample", x);
  if (durations.size() != x.dim(0))
    throw DimensionError("gaussian_upsample: " + std::to_string(durations.size()) +
                         " durations for " + std::to_string(x.dim(0)) + " tokens");
  for (double d : durations)
    if (!(d > 0.0)) throw DataError("gaussian_upsample: non-positive duration");
  std::size_t n = x.dim(0), dim = x.dim(1);
  std::size_t t_out = upsample_frame_count(durations);
  auto w = std::make_shared<std::vector<T>>(upsample_weight_matrix<T>(durations, sigma, t_out));
  std::vector<T> y(t_out * dim);
  kern::Ops<T>::matmul_nn(w->data(), x.data().data(), y.data(), t_out, n, dim);
  return Ten<T>::make_node({t_out, dim}, std::move(y), {x}, [x, w, t_out, n, dim](NodeT<T>& out) {
    if (T* gx = grad_dst(x))
      kern::Ops<T>::matmul_tn_acc(w->data(), out.grad.data(), gx, n, t_out, dim);
  });
}

// ---------------------------------------------------------------------------
// variance heads

template <class T>
struct VarianceHeadT {
  Ten<T> conv1_w, conv1_b;
  LayerNormT<T> ln1;
  Ten<T> conv2_w, conv2_b;
  LayerNormT<T> ln2;
  LinearT<T> out;
  std::string site_prefix;  // adapter site name prefix, e.g. "variance_dur"

  // conv -> relu -> layer norm, twice, then a linear scalar head per token.
  Ten<T> forward(const Ten<T>& x, const AdapterSetT<T>* adapters, Mode mode, Rng& rng) const {
    Ten<T> h = ln1.forward(relu(conv1d(x, conv1_w, conv1_b)));
    if (adapters) {
      auto it = adapters->find(site_prefix + "_sub0");
      if (it != adapters->end()) h = it->second.forward(h, mode, rng);
    }
    h = ln2.forward(relu(conv1d(h, conv2_w, conv2_b)));
    if (adapters) {
      auto it = adapters->find(site_prefix + "_sub1");
      if (it != adapters->end()) h = it->second.forward(h, mode, rng);
    }
    return reshape(out.forward(h), {x.dim(0)});
  }
};

template <class T>
VarianceHeadT<T> make_variance_head(ParamStoreT<T>& ps, const std::string& prefix,
                                    const std::string& site_prefix, std::size_t c_in,
                                    std::size_t hidden, std::size_t k, Rng& rng) {
  VarianceHeadT<T> h;
  h.site_prefix = site_prefix;
  T b1 = glorot_bound<T>(k * c_in, hidden);
  h.conv1_w = ps.add(prefix + ".conv1.w", Ten<T>::uniform({k, c_in, hidden}, rng, -b1, b1));
  h.conv1_b = ps.add(prefix + ".conv1.b", Ten<T>::zeros({hidden}));
  h.ln1 = make_layer_norm(ps, prefix + ".ln1", hidden);
  T b2 = glorot_bound<T>(k * hidden, hidden);
  h.conv2_w = ps.add(prefix + ".conv2.w", Ten<T>::uniform({k, hidden, hidden}, rng, -b2, b2));
  h.conv2_b = ps.add(prefix + ".conv2.b", Ten<T>::zeros({hidden}));
  h.ln2 = make_layer_norm(ps, prefix + ".ln2", hidden);
  h.out = make_linear(ps, prefix + ".out", hidden, 1, rng);
  return h;
}

template <class T>
struct VariancePredictions {
  Ten<T> log_duration, log_f0, energy;  // each [n_tokens]
};

// ---------------------------------------------------------------------------
// losses

template <class T>
Ten<T> l2_loss(const Ten<T>& pred, const Ten<T>& target) {
  Ten<T> d = sub(pred, target);
  return mean_all(mul(d, d));
}

template <class T>
Ten<T> l1_l2_loss(const Ten<T>& pred, const Ten<T>& target) {
  Ten<T> d = sub(pred, target);
  return add(mean_all(abs_val(d)), mean_all(mul(d, d)));
}

template <class T>
struct LossParts {
  Ten<T> mel, dur, f0, energy, total;
};

// ---------------------------------------------------------------------------
// backbone

template <class T>
struct BackboneT {
  BackboneConfig cfg;
  std::vector<std::string> speaker_labels;  // row i of the speaker table
  ParamStoreT<T> params;

  Ten<T> token_emb;  // encoder.token_embedding
  std::vector<EncoderLayerT<T>> encoder_layers;
  Ten<T> speaker_table;  // [n_speakers, d_spk]
  Ten<T> aux_table;      // optional
  VarianceHeadT<T> dur_head, f0_head, energy_head;
  LinearT<T> dec_in;
  std::vector<ConformerBlockT<T>> decoder_blocks;
  LinearT<T> mel_proj;

  static BackboneT build(const BackboneConfig& cfg, Rng& rng,
                         std::vector<std::string> speaker_labels = {}) {
    cfg.validate();
    BackboneT bb;
    bb.cfg = cfg;
    bb.speaker_labels = std::move(speaker_labels);
    auto& ps = bb.params;
    std::size_t d = cfg.d_model;
    T eb = glorot_bound<T>(cfg.vocab_size, d);
    bb.token_emb = ps.add("encoder.token_embedding", Ten<T>::uniform({cfg.vocab_size, d}, rng, -eb, eb));
    for (std::size_t i = 0; i < cfg.n_encoder_layers; ++i)
      bb.encoder_layers.push_back(
          make_encoder_layer(ps, "encoder.layer" + std::to_string(i), d, cfg.n_heads, cfg.ff_mult, rng));
    T sb = static_cast<T>(0.5);
    bb.speaker_table = ps.add("speaker_table.rows",
                              Ten<T>::uniform({cfg.n_speakers, cfg.d_spk()}, rng, -sb, sb));
    if (cfg.aux_enabled()) {
      T ab = glorot_bound<T>(cfg.aux_vocab, cfg.d_aux);
      bb.aux_table = ps.add("aux_table.rows", Ten<T>::uniform({cfg.aux_vocab, cfg.d_aux}, rng, -ab, ab));
    }
    std::size_t c = cfg.cond_width();
    bb.dur_head = make_variance_head(ps, "variance.dur", "variance_dur", c, cfg.variance_hidden,
                                     cfg.conv_kernel, rng);
    bb.f0_head = make_variance_head(ps, "variance.f0", "variance_f0", c, cfg.variance_hidden,
                                    cfg.conv_kernel, rng);
    bb.energy_head = make_variance_head(ps, "variance.energy", "variance_energy", c,
                                        cfg.variance_hidden, cfg.conv_kernel, rng);
    bb.dec_in = make_linear(ps, "decoder.in_proj", c + 2, d, rng);
    for (std::size_t i = 0; i < cfg.n_decoder_layers; ++i)
      bb.decoder_blocks.push_back(make_conformer_block(ps, "decoder.block" + std::to_string(i), d,
                                                       cfg.n_heads, cfg.conv_kernel, cfg.ff_mult, rng));
    bb.mel_proj = make_linear(ps, "mel_proj", d, cfg.n_mel_bins, rng);
    return bb;
  }

  // token embedding + sinusoidal positions + encoder stack
  Ten<T> encode(const std::vector<std::uint32_t>& tokens) const {
    if (tokens.empty()) throw DataError("encode: empty token sequence");
    Ten<T> h = embedding_lookup(token_emb, tokens);
    h = add(h, sinusoidal_positions<T>(tokens.size(), cfg.d_model));
    for (const auto& layer : encoder_layers) h = layer.forward(h);
    return h;
  }

  // Speaker vector broadcast to every position and concatenated; auxiliary
  // embeddings likewise when the hook is enabled. Absent aux ids fall back to
  // the neutral row 0 so the conditioned width stays fixed.
  Ten<T> condition(const Ten<T>& enc, const Ten<T>& speaker_vec,
                   const std::vector<std::uint32_t>* aux_ids = nullptr) const {
    if (speaker_vec.numel() != cfg.d_spk())
      throw DimensionError("condition: speaker vector length " + std::to_string(speaker_vec.numel()) +
                           ", expected " + std::to_string(cfg.d_spk()));
    Ten<T> out = concat_last(enc, tile_rows(speaker_vec, enc.dim(0)));
    if (cfg.aux_enabled()) {
      std::vector<std::uint32_t> neutral;
      if (!aux_ids) {
        neutral.assign(enc.dim(0), 0);
        aux_ids = &neutral;
      }
      if (aux_ids->size() != enc.dim(0))
        throw DimensionError("condition: " + std::to_string(aux_ids->size()) + " aux ids for " +
                             std::to_string(enc.dim(0)) + " tokens");
      out = concat_last(out, embedding_lookup(aux_table, *aux_ids));
    }
    return out;
  }

  Ten<T> speaker_vec_for(std::size_t speaker_id) const {
    if (speaker_id >= cfg.n_speakers)
      throw DataError("speaker id " + std::to_string(speaker_id) + " out of table size " +
                      std::to_string(cfg.n_speakers));
    return reshape(embedding_lookup(speaker_table, {static_cast<std::uint32_t>(speaker_id)}),
                   {cfg.d_spk()});
  }

  std::size_t speaker_index(const std::string& label) const {
    for (std::size_t i = 0; i < speaker_labels.size(); ++i)
      if (speaker_labels[i] == label) return i;
    throw DataError("unknown backbone speaker '" + label + "'");
  }

  VariancePredictions<T> variance_predict(const Ten<T>& cond, const AdapterSetT<T>* adapters,
                                          Mode adapter_mode, Rng& rng) const {
    VariancePredictions<T> v;
    v.log_duration = dur_head.forward(cond, adapters, adapter_mode, rng);
    v.log_f0 = f0_head.forward(cond, adapters, adapter_mode, rng);
    v.energy = energy_head.forward(cond, adapters, adapter_mode, rng);
    return v;
  }

  // Input projection, Conformer-lite blocks with adapter hooks at each block
  // output, final mel projection. block_mode drives batch norm (train during
  // backbone training, infer when the backbone is frozen); adapter_mode
  // drives adapter dropout.
  Ten<T> decode(const Ten<T>& frames, const AdapterSetT<T>* adapters, Mode block_mode,
                Mode adapter_mode, Rng& rng) {
    Ten<T> h = dec_in.forward(frames);
    for (std::size_t i = 0; i < decoder_blocks.size(); ++i) {
      h = decoder_blocks[i].forward(h, block_mode);
      if (adapters) {
        auto it = adapters->find("decoder_block" + std::to_string(i));
        if (it != adapters->end()) h = it->second.forward(h, adapter_mode, rng);
      }
    }
    return mel_proj.forward(h);
  }

  // Teacher-forced pipeline: ground-truth log-F0/energy are concatenated
  // before the upsampler and ground-truth durations drive it; each predictor
  // is penalized against its target. All reductions are means; total is the
  // unweighted sum.
  LossParts<T> forward_teacher_forced(const Utterance& utt, const Ten<T>& speaker_vec,
                                      const AdapterSetT<T>* adapters, Mode block_mode,
                                      Mode adapter_mode, Rng& rng) {
    std::size_t n = utt.n_tokens();
    if (n == 0) throw DataError("utterance with no tokens");
    std::vector<double> durs(n);
    double total_frames = 0;
    for (std::size_t i = 0; i < n; ++i) {
      durs[i] = static_cast<double>(utt.durations[i]);
      total_frames += durs[i];
    }
    if (static_cast<std::size_t>(std::llround(total_frames)) != utt.n_frames ||
        utt.mel.size() != utt.n_frames * cfg.n_mel_bins)
      throw DataError("utterance mel length does not match round(sum durations)");

    Ten<T> enc = encode(utt.tokens);
    Ten<T> cond = condition(enc, speaker_vec);
    VariancePredictions<T> pred = variance_predict(cond, adapters, adapter_mode, rng);

    std::vector<T> gt_logdur(n), gt_logf0(n), gt_energy(n);
    for (std::size_t i = 0; i < n; ++i) {
      gt_logdur[i] = static_cast<T>(std::log(static_cast<double>(utt.durations[i])));
      gt_logf0[i] = static_cast<T>(utt.log_f0[i]);
      gt_energy[i] = static_cast<T>(utt.energy[i]);
    }
    Ten<T> t_logdur = Ten<T>::from({n}, gt_logdur);
    Ten<T> t_logf0 = Ten<T>::from({n}, gt_logf0);
    Ten<T> t_energy = Ten<T>::from({n}, gt_energy);

    Ten<T> up_in = concat_last(cond, concat_last(reshape(t_logf0, {n, 1}), reshape(t_energy, {n, 1})));
    Ten<T> frames = gaussian_upsample(up_in, durs, cfg.upsampler_sigma);
    Ten<T> mel_pred = decode(frames, adapters, block_mode, adapter_mode, rng);

    std::vector<T> mel_target(utt.mel.begin(), utt.mel.end());
    Ten<T> t_mel = Ten<T>::from({utt.n_frames, cfg.n_mel_bins}, std::move(mel_target));

    LossParts<T> out;
    out.mel = l1_l2_loss(mel_pred, t_mel);
    out.dur = l2_loss(pred.log_duration, t_logdur);
    out.f0 = l1_l2_loss(pred.log_f0, t_logf0);
    out.energy = l1_l2_loss(pred.energy, t_energy);
    out.total = add(add(out.mel, out.dur), add(out.f0, out.energy));
    return out;
  }

  // Free-running inference: predicted durations (>= 1 frame after exp),
  // predicted log-F0/energy in place of targets, everything deterministic.
  Ten<T> synthesize(const std::vector<std::uint32_t>& tokens, const Ten<T>& speaker_vec,
                    const AdapterSetT<T>* adapters = nullptr) {
    NoGrad ng;
    Rng rng(0);  // dropout is inert in infer mode
    Ten<T> enc = encode(tokens);
    Ten<T> cond = condition(enc, speaker_vec);
    VariancePredictions<T> pred = variance_predict(cond, adapters, Mode::infer, rng);
    std::size_t n = tokens.size();
    std::vector<double> durs(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = std::exp(static_cast<double>(pred.log_duration.data()[i]));
      durs[i] = d < 1.0 ? 1.0 : d;
    }
    Ten<T> up_in = concat_last(
        cond, concat_last(reshape(pred.log_f0, {n, 1}), reshape(pred.energy, {n, 1})));
    Ten<T> frames = gaussian_upsample(up_in, durs, cfg.upsampler_sigma);
    return decode(frames, adapters, Mode::infer, Mode::infer, rng);
  }

  void set_bn_frozen(bool frozen) {
    for (auto& b : decoder_blocks) b.conv.bn.frozen_stats = frozen;
  }

  // Freeze flags for adaptation: every parameter non-trainable and batch-norm
  // statistics pinned.
  void freeze_all() {
    params.set_all_trainable(false);
    set_bn_frozen(true);
  }
};

using Backbone = BackboneT<float>;

// Builds a fresh identity AdapterPack for this backbone. Precondition per the
// adaptation flow: the backbone is already frozen.
AdapterPack insert_adapters(const Backbone& bb, const std::string& speaker_label,
                            bool variance_sites, std::size_t r_decoder, std::size_t r_variance,
                            std::vector<float> speaker_vec_init, Rng& rng, double dropout_rate);

// Checkpoint = ALB1 parameter container + `<path>.cfg` sidecar holding the
// architecture (canonical key=value form) and the speaker label order.
void save_backbone(const Backbone& bb, const std::string& path);
Backbone load_backbone(const std::string& path);

}  // namespace alba
