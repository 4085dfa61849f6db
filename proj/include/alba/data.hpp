#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace alba {

// One corpus record: token ids with ground-truth durations, log-F0, energy
// and the target mel. T always equals the duration sum.
struct Utterance {
  std::string speaker;
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> durations;  // integer frames, >= 1
  std::vector<float> log_f0;             // per token
  std::vector<float> energy;             // per token
  std::size_t n_frames = 0;
  std::vector<float> mel;  // [n_frames * n_mel_bins] row-major

  std::size_t n_tokens() const { return tokens.size(); }
};

using Dataset = std::vector<Utterance>;

}  // namespace alba
