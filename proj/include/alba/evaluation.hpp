#pragma once

#include <span>
#include <string>
#include <vector>

#include "alba/backbone.hpp"
#include "alba/melspec.hpp"
#include "alba/training.hpp"

namespace alba {

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Mean pairwise cosine similarity of speaker-encoder embeddings between the
// synthesized set and the reference set.
double speaker_similarity(const SpeakerEncoder& encoder, const std::vector<MelFile>& synth,
                          const std::vector<MelFile>& references);

struct ImmutabilityReport {
  bool ok = false;
  std::vector<std::string> diffs;  // per-tensor names that changed, plus probe notes
};

// True iff every backbone tensor is byte-identical to the reference store and
// synthesis for the probe token sequences (over up to 5 backbone rows) is
// bit-identical with and without a fresh identity pack attached.
ImmutabilityReport verify_backbone_immutability(Backbone& backbone, const ParamStore& reference,
                                                const std::vector<std::vector<std::uint32_t>>& probes);

struct EvalRun {
  std::string variant;
  std::string speaker;
  std::size_t knob = 0;  // target-utterance budget
  double mel_loss = 0;
  double cos_sim = 0;
  std::size_t params = 0;  // per-speaker trainable parameters
  double params_pct = 0;
  bool backbone_intact = false;
  std::uint64_t corpus_seed = 0;
};

// Deterministic CSV: header
// variant,speaker,knob,mel_loss,cos_sim,params,params_pct,backbone_intact
// rows ordered by (variant, speaker, knob), 4 significant digits.
std::string make_report_csv(std::vector<EvalRun> runs);
// Companion aligned table for humans; same ordering.
std::string make_report_table(std::vector<EvalRun> runs);

// single-row serialization used by the `eval` subcommand output files
std::string eval_run_to_line(const EvalRun& run);
EvalRun eval_run_from_line(const std::string& line);

}  // namespace alba
