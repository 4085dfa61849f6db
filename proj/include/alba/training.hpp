#pragma once

#include <functional>
#include <optional>
#include <string>

#include "alba/backbone.hpp"
#include "alba/optim.hpp"
#include "alba/synthdata.hpp"

namespace alba {

enum class Variant { adapters, finetune_full, finetune_embed_only, zero_shot_dvector };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct LrSpec {
  bool cosine = true;
  double lr_init = 1e-3;
  double lr_final = 1e-5;
  std::uint64_t decay_steps = 0;  // 0: derive as 80% of steps
  double constant = 1e-4;         // used when cosine=false
};

struct TrainConfig {
  std::uint64_t steps = 1500;
  std::size_t batch_size = 8;
  LrSpec lr;
  std::uint64_t seed = 42;
  std::uint64_t eval_every = 100;
  double grad_clip = 1.0;
  // optional backbone-data mixing (a:b); disabled unless mix_enabled
  bool mix_enabled = false;
  std::uint32_t mix_backbone = 99;
  std::uint32_t mix_target = 1;
  Variant variant = Variant::adapters;

  void validate() const;
  std::uint64_t effective_decay_steps() const {
    return lr.decay_steps ? lr.decay_steps : std::max<std::uint64_t>(1, steps * 8 / 10);
  }
};

// Append-only `step=... lr=... loss_*=...` lines, fixed key order, 6
// significant digits. Sink defaults to stderr pass-through collection.
struct TrainLog {
  std::vector<std::string> lines;
  std::function<void(const std::string&)> sink;
  void log(std::uint64_t step, double lr, double total, double mel, double dur, double f0,
           double energy);
  std::string text() const;
};

struct PretrainResult {
  double initial_loss = 0;
  double final_loss = 0;
  TrainLog log;
};

// Teacher-forced backbone pretraining over the corpus's backbone speakers;
// the lowest frozen_encoder_layers encoder layers stay frozen. NaN loss
// aborts with step and loss components in the message.
PretrainResult pretrain_backbone(Backbone& backbone, const Corpus& corpus, const TrainConfig& cfg);

struct AdaptResult {
  AdapterPack pack;
  TrainLog log;
};

// The proposed method: freeze everything (including batch-norm statistics),
// train adapters + a fresh speaker vector initialized to the mean backbone
// row. Optional 99:1 mixing trains on backbone utterances through their
// frozen table rows, so those steps update adapters only.
AdaptResult adapt_speaker(Backbone& backbone, const Corpus& corpus, const std::string& target_label,
                          std::size_t n_target_utts, std::size_t r_decoder, bool variance_sites,
                          std::size_t r_variance, double adapter_dropout, const TrainConfig& cfg);

// Embedding-only baseline: a degenerate pack with an empty site list.
AdaptResult finetune_embedding_only(Backbone& backbone, const Corpus& corpus,
                                    const std::string& target_label, std::size_t n_target_utts,
                                    const TrainConfig& cfg);

struct FinetuneResult {
  AdapterPack speaker_pack;  // empty site list; carries the tuned speaker vector
  TrainLog log;
};

// Full fine-tuning baseline: everything but encoder.* updates. The new
// speaker row follows the cosine schedule, the rest a constant rate.
// Mutates the backbone (that is the point of the baseline).
FinetuneResult finetune_full(Backbone& backbone, const Corpus& corpus,
                             const std::string& target_label, std::size_t n_target_utts,
                             const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// speaker encoder (d-vector stand-in)

struct SpeakerEncoder {
  std::size_t n_mel_bins = 0;
  std::size_t hidden = 64;
  std::size_t d_embed = 0;
  ParamStore params;
  LinearT<float> l1, l2, head;

  static SpeakerEncoder build(std::size_t n_mel_bins, std::size_t hidden, std::size_t d_embed,
                              std::size_t n_speakers, Rng& rng);

  // mean-pooled mel -> two feed-forward layers -> embedding
  Tensor embed_pooled(const Tensor& pooled) const;                  // [B] -> [d_embed]
  Tensor embed(std::span<const float> mel, std::size_t n_frames) const;
  Tensor logits(const Tensor& emb) const;
};

Tensor mel_mean_pool(std::span<const float> mel, std::size_t n_frames, std::size_t n_mel_bins);

struct SpeakerEncoderResult {
  SpeakerEncoder encoder;
  double train_accuracy = 0;
  double val_accuracy = 0;
};

// d_embed must equal the backbone's speaker-vector width so the embedding
// can condition the zero-shot variant.
SpeakerEncoderResult train_speaker_encoder(const Corpus& corpus, std::size_t d_embed,
                                           std::uint64_t steps, std::size_t batch_size, double lr,
                                           std::uint64_t seed);

// Mean embedding over m reference utterances, normalized to unit norm.
Tensor zero_shot_condition(const SpeakerEncoder& encoder, const Dataset& refs,
                           const std::vector<std::size_t>& indices);

// Mean teacher-forced mel loss (L1+L2) over a dataset in infer mode.
double eval_mel_loss(Backbone& backbone, const Dataset& ds, const Tensor& speaker_vec,
                     const AdapterSet* adapters);

// Lowest eval_mel_loss over all backbone speaker rows; the frozen-row
// baseline for the adaptation efficacy check.
struct NearestRowBaseline {
  std::size_t row = 0;
  double mel_loss = 0;
};
NearestRowBaseline nearest_backbone_row(Backbone& backbone, const Dataset& ds);

// speaker-encoder checkpoint io (ALB1 container + hidden sizes recoverable
// from shapes)
void save_speaker_encoder(const SpeakerEncoder& enc, const std::string& path);
SpeakerEncoder load_speaker_encoder(const std::string& path);

}  // namespace alba
