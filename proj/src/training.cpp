#include "alba/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "alba/checkpoint.hpp"

namespace alba {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::adapters: return "adapters";
    case Variant::finetune_full: return "finetune_full";
    case Variant::finetune_embed_only: return "finetune_embed_only";
    case Variant::zero_shot_dvector: return "zero_shot_dvector";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "adapters") return Variant::adapters;
  if (s == "finetune_full") return Variant::finetune_full;
  if (s == "finetune_embed_only") return Variant::finetune_embed_only;
  if (s == "zero_shot_dvector") return Variant::zero_shot_dvector;
  throw ConfigError("unknown training variant '" + s + "'");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train config: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (lr.cosine && lr.decay_steps > steps)
    throw ConfigError("train config: decay_steps must not exceed steps");
  if (grad_clip <= 0) throw ConfigError("train config: grad_clip must be positive");
}

void TrainLog::log(std::uint64_t step, double lr, double total, double mel, double dur, double f0,
                   double energy) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "step=%llu lr=%.6g loss_total=%.6g loss_mel=%.6g loss_dur=%.6g loss_f0=%.6g loss_energy=%.6g",
                static_cast<unsigned long long>(step), lr, total, mel, dur, f0, energy);
  lines.emplace_back(buf);
  if (sink) sink(lines.back());
}

std::string TrainLog::text() const {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

namespace {

double lr_at(const TrainConfig& cfg, std::uint64_t step) {
  if (cfg.lr.cosine) return cosine_lr(step, cfg.effective_decay_steps(), cfg.lr.lr_init, cfg.lr.lr_final);
  return cfg.lr.constant;
}

struct BatchLoss {
  double total = 0, mel = 0, dur = 0, f0 = 0, energy = 0;
};

void abort_on_nan(const BatchLoss& l, std::uint64_t step) {
  if (std::isfinite(l.total)) return;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "NaN/Inf loss at step %llu (mel=%g dur=%g f0=%g energy=%g)",
                static_cast<unsigned long long>(step), l.mel, l.dur, l.f0, l.energy);
  throw TrainingError(buf);
}

// Accumulates the mean-over-batch gradient and returns mean loss components.
// block_mode: train while the backbone itself is training (batch-norm batch
// statistics + EMA updates); infer when it is frozen, so the adapters learn
// against exactly the normalization served at inference.
template <class SpeakerVecFn>
BatchLoss run_batch(Backbone& bb, const std::vector<const Utterance*>& batch,
                    const AdapterSet* adapters, Mode block_mode, SpeakerVecFn&& vec_for, Rng& rng) {
  BatchLoss out;
  float inv = 1.0f / static_cast<float>(batch.size());
  for (const Utterance* utt : batch) {
    Tensor spk = vec_for(*utt);
    LossParts<float> loss =
        bb.forward_teacher_forced(*utt, spk, adapters, block_mode, Mode::train, rng);
    backward(loss.total, {inv});
    out.total += loss.total.item() * inv;
    out.mel += loss.mel.item() * inv;
    out.dur += loss.dur.item() * inv;
    out.f0 += loss.f0.item() * inv;
    out.energy += loss.energy.item() * inv;
  }
  return out;
}

std::vector<float> mean_speaker_row(const Backbone& bb) {
  std::size_t rows = bb.cfg.n_speakers, d = bb.cfg.d_spk();
  std::vector<float> mean(d, 0.0f);
  auto data = bb.speaker_table.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data[i * d + j];
  for (auto& v : mean) v /= static_cast<float>(rows);
  return mean;
}

Dataset target_subset(const Corpus& corpus, const std::string& label, std::size_t n_utts) {
  Dataset out;
  for (const auto& u : corpus.target_train) {
    if (u.speaker == label) out.push_back(u);
    if (out.size() == n_utts) break;
  }
  if (out.empty()) throw DataError("no target utterances for speaker '" + label + "'");
  return out;
}

void require_held_out(const Backbone& bb, const std::string& label) {
  for (const auto& s : bb.speaker_labels)
    if (s == label)
      throw DataError("target speaker '" + label + "' is already in the backbone speaker table");
}

}  // namespace

PretrainResult pretrain_backbone(Backbone& backbone, const Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.backbone_speakers.size() < 2)
    throw DataError("pretraining needs at least 2 backbone speakers");
  if (backbone.speaker_labels != corpus.backbone_speakers)
    throw DataError("backbone speaker labels do not match the corpus");

  backbone.params.set_all_trainable(true);
  for (auto& [name, e] : backbone.params)
    if (name.find(".running_") != std::string::npos) backbone.params.set_trainable(name, false);
  for (std::size_t i = 0; i < backbone.cfg.frozen_encoder_layers; ++i)
    backbone.params.set_trainable_prefix("encoder.layer" + std::to_string(i) + ".", false);
  backbone.set_bn_frozen(false);

  Rng rng(cfg.seed);
  Adam opt;
  PretrainResult result;
  Backbone& bb = backbone;

  const Dataset& train = corpus.backbone_train;
  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    std::vector<const Utterance*> batch;
    for (std::size_t i = 0; i < cfg.batch_size; ++i)
      batch.push_back(&train[rng.below(train.size())]);
    bb.params.ensure_zero_grads();
    BatchLoss loss = run_batch(bb, batch, nullptr, Mode::train,
                               [&bb](const Utterance& u) { return bb.speaker_vec_for(bb.speaker_index(u.speaker)); },
                               rng);
    abort_on_nan(loss, step);
    if (step == 0) result.initial_loss = loss.total;
    result.final_loss = loss.total;
    clip_global_norm(bb.params, cfg.grad_clip);
    double lr = lr_at(cfg, step);
    opt.step(bb.params, static_cast<float>(lr));
    if (step % cfg.eval_every == 0 || step + 1 == cfg.steps)
      result.log.log(step, lr, loss.total, loss.mel, loss.dur, loss.f0, loss.energy);
  }
  return result;
}

namespace {

// Shared loop for the pack-training variants (adapters / embedding-only).
AdaptResult train_pack(Backbone& bb, const Corpus& corpus, const std::string& label,
                       std::size_t n_target_utts, const TrainConfig& cfg, AdapterPack pack,
                       Rng rng) {
  AdaptResult result{std::move(pack), {}};
  Dataset target = target_subset(corpus, label, n_target_utts);

  std::optional<MixStream> mix;
  if (cfg.mix_enabled)
    mix.emplace(&corpus.backbone_train, &target, cfg.mix_backbone, cfg.mix_target,
                Rng(rng.next_u64()));

  Adam opt;
  auto vec_for = [&](const Utterance& u) -> Tensor {
    if (u.speaker == label) return result.pack.speaker_vec;
    return bb.speaker_vec_for(bb.speaker_index(u.speaker));  // frozen backbone row
  };

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    std::vector<const Utterance*> batch;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      if (mix) batch.push_back(&mix->next());
      else batch.push_back(&target[rng.below(target.size())]);
    }
    result.pack.params.ensure_zero_grads();
    BatchLoss loss = run_batch(bb, batch, &result.pack.adapters, Mode::infer, vec_for, rng);
    abort_on_nan(loss, step);
    clip_global_norm(result.pack.params, cfg.grad_clip);
    double lr = lr_at(cfg, step);
    opt.step(result.pack.params, static_cast<float>(lr));
    if (step % cfg.eval_every == 0 || step + 1 == cfg.steps)
      result.log.log(step, lr, loss.total, loss.mel, loss.dur, loss.f0, loss.energy);
  }
  return result;
}

}  // namespace

AdaptResult adapt_speaker(Backbone& backbone, const Corpus& corpus, const std::string& target_label,
                          std::size_t n_target_utts, std::size_t r_decoder, bool variance_sites,
                          std::size_t r_variance, double adapter_dropout, const TrainConfig& cfg) {
  if (cfg.steps > 0) cfg.validate();
  require_held_out(backbone, target_label);
  backbone.freeze_all();  // every parameter and every batch-norm statistic

  Rng rng(cfg.seed);
  AdapterPack pack = insert_adapters(backbone, target_label, variance_sites, r_decoder, r_variance,
                                     mean_speaker_row(backbone), rng, adapter_dropout);
  if (cfg.steps == 0) return AdaptResult{std::move(pack), {}};
  return train_pack(backbone, corpus, target_label, n_target_utts, cfg, std::move(pack), std::move(rng));
}

AdaptResult finetune_embedding_only(Backbone& backbone, const Corpus& corpus,
                                    const std::string& target_label, std::size_t n_target_utts,
                                    const TrainConfig& cfg) {
  cfg.validate();
  require_held_out(backbone, target_label);
  backbone.freeze_all();
  Rng rng(cfg.seed);
  AdapterPack pack = make_adapter_pack(target_label, backbone.cfg.fingerprint(), {}, {}, 1, 1,
                                       mean_speaker_row(backbone), rng, 0.0);
  return train_pack(backbone, corpus, target_label, n_target_utts, cfg, std::move(pack), std::move(rng));
}

FinetuneResult finetune_full(Backbone& backbone, const Corpus& corpus,
                             const std::string& target_label, std::size_t n_target_utts,
                             const TrainConfig& cfg) {
  cfg.validate();
  require_held_out(backbone, target_label);

  // everything trains except the encoder; batch-norm statistics keep updating
  backbone.params.set_all_trainable(true);
  backbone.params.set_trainable_prefix("encoder.", false);
  for (auto& [name, e] : backbone.params)
    if (name.find(".running_") != std::string::npos) backbone.params.set_trainable(name, false);
  backbone.set_bn_frozen(false);

  Rng rng(cfg.seed);
  AdapterPack pack = make_adapter_pack(target_label, backbone.cfg.fingerprint(), {}, {}, 1, 1,
                                       mean_speaker_row(backbone), rng, 0.0);
  Dataset target = target_subset(corpus, target_label, n_target_utts);

  std::optional<MixStream> mix;
  if (cfg.mix_enabled)
    mix.emplace(&corpus.backbone_train, &target, cfg.mix_backbone, cfg.mix_target,
                Rng(rng.next_u64()));

  Adam opt_model;   // constant lr over the backbone trainables
  Adam opt_speaker; // cosine schedule over the new speaker row
  FinetuneResult result{std::move(pack), {}};

  auto vec_for = [&](const Utterance& u) -> Tensor {
    if (u.speaker == target_label) return result.speaker_pack.speaker_vec;
    return backbone.speaker_vec_for(backbone.speaker_index(u.speaker));
  };

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    std::vector<const Utterance*> batch;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      if (mix) batch.push_back(&mix->next());
      else batch.push_back(&target[rng.below(target.size())]);
    }
    backbone.params.ensure_zero_grads();
    result.speaker_pack.params.ensure_zero_grads();
    BatchLoss loss = run_batch(backbone, batch, nullptr, Mode::train, vec_for, rng);
    abort_on_nan(loss, step);
    // one global norm across both parameter groups
    double n1 = global_grad_norm(backbone.params);
    double n2 = global_grad_norm(result.speaker_pack.params);
    double norm = std::sqrt(n1 * n1 + n2 * n2);
    if (norm > cfg.grad_clip && norm > 0) {
      float s = static_cast<float>(cfg.grad_clip / norm);
      for (auto* store : {&backbone.params, &result.speaker_pack.params})
        for (auto& [name, e] : *store)
          if (e.trainable && e.tensor.has_grad()) {
            auto g = e.tensor.ensure_grad();
            kern::Ops<float>::scale(g.data(), s, g.data(), g.size());
          }
    }
    double lr_cos = cosine_lr(step, cfg.effective_decay_steps(), cfg.lr.lr_init, cfg.lr.lr_final);
    opt_model.step(backbone.params, static_cast<float>(cfg.lr.constant));
    opt_speaker.step(result.speaker_pack.params, static_cast<float>(lr_cos));
    if (step % cfg.eval_every == 0 || step + 1 == cfg.steps)
      result.log.log(step, lr_cos, loss.total, loss.mel, loss.dur, loss.f0, loss.energy);
  }
  return result;
}

// ---------------------------------------------------------------------------
// speaker encoder

SpeakerEncoder SpeakerEncoder::build(std::size_t n_mel_bins, std::size_t hidden,
                                     std::size_t d_embed, std::size_t n_speakers, Rng& rng) {
  SpeakerEncoder enc;
  enc.n_mel_bins = n_mel_bins;
  enc.hidden = hidden;
  enc.d_embed = d_embed;
  enc.l1 = make_linear(enc.params, "spkenc.l1", n_mel_bins, hidden, rng);
  enc.l2 = make_linear(enc.params, "spkenc.l2", hidden, d_embed, rng);
  enc.head = make_linear(enc.params, "spkenc.head", d_embed, n_speakers, rng);
  return enc;
}

Tensor mel_mean_pool(std::span<const float> mel, std::size_t n_frames, std::size_t n_mel_bins) {
  if (n_frames == 0 || mel.size() != n_frames * n_mel_bins)
    throw DataError("mel_mean_pool: bad spectrogram dimensions");
  std::vector<float> pooled(n_mel_bins, 0.0f);
  for (std::size_t f = 0; f < n_frames; ++f)
    for (std::size_t b = 0; b < n_mel_bins; ++b) pooled[b] += mel[f * n_mel_bins + b];
  for (auto& v : pooled) v /= static_cast<float>(n_frames);
  return Tensor::from({1, n_mel_bins}, std::move(pooled));
}

Tensor SpeakerEncoder::embed_pooled(const Tensor& pooled) const {
  return l2.forward(relu(l1.forward(pooled)));
}

Tensor SpeakerEncoder::embed(std::span<const float> mel, std::size_t n_frames) const {
  NoGrad ng;
  return reshape(embed_pooled(mel_mean_pool(mel, n_frames, n_mel_bins)), {d_embed});
}

Tensor SpeakerEncoder::logits(const Tensor& emb) const { return head.forward(emb); }

SpeakerEncoderResult train_speaker_encoder(const Corpus& corpus, std::size_t d_embed,
                                           std::uint64_t steps, std::size_t batch_size, double lr,
                                           std::uint64_t seed) {
  std::size_t n_speakers = corpus.backbone_speakers.size();
  std::size_t b = corpus.cfg.n_mel_bins;
  Rng rng(seed);
  SpeakerEncoderResult out{SpeakerEncoder::build(b, 64, d_embed, n_speakers, rng), 0, 0};
  SpeakerEncoder& enc = out.encoder;

  auto speaker_id = [&](const std::string& label) -> std::uint32_t {
    for (std::size_t i = 0; i < corpus.backbone_speakers.size(); ++i)
      if (corpus.backbone_speakers[i] == label) return static_cast<std::uint32_t>(i);
    throw DataError("speaker encoder: unknown label " + label);
  };

  const Dataset& train = corpus.backbone_train;
  Adam opt;
  for (std::uint64_t step = 0; step < steps; ++step) {
    std::vector<float> rows(batch_size * b);
    std::vector<std::uint32_t> ids(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      const Utterance& u = train[rng.below(train.size())];
      Tensor pooled = mel_mean_pool(u.mel, u.n_frames, b);
      std::copy(pooled.data().begin(), pooled.data().end(), rows.begin() + i * b);
      ids[i] = speaker_id(u.speaker);
    }
    Tensor x = Tensor::from({batch_size, b}, std::move(rows));
    enc.params.ensure_zero_grads();
    Tensor loss = cross_entropy(enc.logits(enc.embed_pooled(x)), ids);
    if (!std::isfinite(loss.item()))
      throw TrainingError("speaker encoder: NaN loss at step " + std::to_string(step));
    backward(loss);
    opt.step(enc.params, static_cast<float>(lr));
  }

  auto accuracy = [&](const Dataset& ds) {
    NoGrad ng;
    std::size_t correct = 0;
    for (const auto& u : ds) {
      Tensor logits = enc.logits(enc.embed_pooled(mel_mean_pool(u.mel, u.n_frames, b)));
      std::size_t best = 0;
      for (std::size_t c = 1; c < n_speakers; ++c)
        if (logits.data()[c] > logits.data()[best]) best = c;
      if (corpus.backbone_speakers[best] == u.speaker) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
  };
  out.train_accuracy = accuracy(corpus.backbone_train);
  out.val_accuracy = accuracy(corpus.backbone_val);
  return out;
}

Tensor zero_shot_condition(const SpeakerEncoder& encoder, const Dataset& refs,
                           const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ContractError("zero_shot_condition: need at least one reference utterance");
  NoGrad ng;
  std::vector<double> mean(encoder.d_embed, 0.0);
  for (std::size_t idx : indices) {
    if (idx >= refs.size()) throw DataError("zero_shot_condition: reference index out of range");
    Tensor e = encoder.embed(refs[idx].mel, refs[idx].n_frames);
    for (std::size_t j = 0; j < encoder.d_embed; ++j) mean[j] += e.data()[j];
  }
  double norm = 0;
  for (auto& v : mean) {
    v /= static_cast<double>(indices.size());
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) throw MetricError("zero_shot_condition: zero-norm embedding");
  std::vector<float> out(encoder.d_embed);
  for (std::size_t j = 0; j < encoder.d_embed; ++j)
    out[j] = static_cast<float>(mean[j] / norm);
  return Tensor::from({encoder.d_embed}, std::move(out));
}

// ---------------------------------------------------------------------------
// evaluation helpers shared by training and the report pipeline

double eval_mel_loss(Backbone& backbone, const Dataset& ds, const Tensor& speaker_vec,
                     const AdapterSet* adapters) {
  if (ds.empty()) throw DataError("eval_mel_loss: empty dataset");
  NoGrad ng;
  Rng rng(0);
  double total = 0;
  for (const auto& u : ds) {
    LossParts<float> loss =
        backbone.forward_teacher_forced(u, speaker_vec, adapters, Mode::infer, Mode::infer, rng);
    total += loss.mel.item();
  }
  return total / static_cast<double>(ds.size());
}

NearestRowBaseline nearest_backbone_row(Backbone& backbone, const Dataset& ds) {
  NearestRowBaseline best{0, 1e300};
  for (std::size_t row = 0; row < backbone.cfg.n_speakers; ++row) {
    double loss = eval_mel_loss(backbone, ds, backbone.speaker_vec_for(row), nullptr);
    if (loss < best.mel_loss) {
      best.mel_loss = loss;
      best.row = row;
    }
  }
  return best;
}

void save_speaker_encoder(const SpeakerEncoder& enc, const std::string& path) {
  save_checkpoint(enc.params, path);
}

SpeakerEncoder load_speaker_encoder(const std::string& path) {
  ParamStore loaded = load_checkpoint(path);
  SpeakerEncoder enc;
  enc.params = std::move(loaded);
  enc.l1 = {enc.params.get("spkenc.l1.w"), enc.params.get("spkenc.l1.b")};
  enc.l2 = {enc.params.get("spkenc.l2.w"), enc.params.get("spkenc.l2.b")};
  enc.head = {enc.params.get("spkenc.head.w"), enc.params.get("spkenc.head.b")};
  enc.n_mel_bins = enc.l1.w.dim(0);
  enc.hidden = enc.l1.w.dim(1);
  enc.d_embed = enc.l2.w.dim(1);
  return enc;
}

}  // namespace alba
