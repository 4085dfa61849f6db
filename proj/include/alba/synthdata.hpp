#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "alba/data.hpp"
#include "alba/rng.hpp"

namespace alba {

// Deterministic synthetic multi-speaker corpus. Every quantity is a pure
// function of (corpus_seed, label/token id), so regeneration is byte-stable.

struct SpeakerSpec {
  std::string label;
  float pitch_offset = 0;  // semitone-like offset; sign acts as a binary voice attribute
  float rate = 1;          // multiplicative duration factor in [0.7, 1.3]
  float energy_scale = 1;  // [0.6, 1.4]
  std::vector<float> timbre;  // per-bin additive offset in [-0.3, 0.3]
  float phase = 0;         // [0, 2pi)
};

struct TokenSpec {
  float base_duration = 0;  // frames, [2, 8]
  float base_pitch = 0;     // [-1, 1]
  float base_energy = 0;    // [0.5, 1.5]
  std::vector<float> spectral;  // non-negative bump over mel bins
};

struct CorpusConfig {
  std::uint64_t corpus_seed = 42;
  std::size_t vocab_size = 40;
  std::size_t n_mel_bins = 16;
  std::size_t n_speakers = 8;          // backbone speakers
  std::size_t n_target_speakers = 2;   // held out, never in the backbone corpus
  std::size_t utts_per_speaker = 100;
  std::size_t len_min = 5;
  std::size_t len_max = 20;

  void validate() const;
};

SpeakerSpec gen_speaker(std::uint64_t corpus_seed, const std::string& label, std::size_t n_mel_bins);
TokenSpec gen_token(std::uint64_t corpus_seed, std::uint32_t token_id, std::size_t n_mel_bins);

// durations_i = max(1, round(d_k * rate)); log_f0 = base_pitch + p;
// energy = e * base_energy;
// mel[f,b] = e * psi[b] * (1 + 0.3 sin(2 pi b / B + 0.2 p + phase)) + timbre[b], clipped at 0.
Utterance render_utterance(std::uint64_t corpus_seed, const SpeakerSpec& spec,
                           const std::vector<std::uint32_t>& tokens, std::size_t vocab_size,
                           std::size_t n_mel_bins);

struct Corpus {
  CorpusConfig cfg;
  std::vector<std::string> backbone_speakers;
  std::vector<std::string> target_speakers;
  Dataset backbone_train, backbone_val, backbone_test;
  Dataset target_train, target_val, target_test;

  const Dataset& split(const std::string& name) const;
};

// 80/10/10 per speaker, deterministic in the corpus seed.
Corpus generate_corpus(const CorpusConfig& cfg);

// Directory layout: <split>.sds files ("SDS1" containers), manifest.tsv
// (`<split>\t<speaker>\t<record_index>` lines) and corpus.cfg (key=value).
void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

void save_dataset(const std::string& path, const Dataset& records, std::size_t n_mel_bins);
Dataset load_dataset(const std::string& path, std::size_t n_mel_bins);

// Probabilistic a:b source mixer; each draw picks the backbone source with
// probability a/(a+b), uniform with replacement inside the chosen source.
class MixStream {
 public:
  MixStream(const Dataset* backbone, const Dataset* target, std::uint32_t a, std::uint32_t b,
            Rng rng);
  const Utterance& next();

 private:
  const Dataset* backbone_;
  const Dataset* target_;
  double p_backbone_;
  Rng rng_;
};

}  // namespace alba
