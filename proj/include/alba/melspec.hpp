#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace alba {

// "MELS" container: magic, u32 version, u32 T, u32 n_mel_bins, row-major f32
// frames, trailing CRC32.
struct MelFile {
  std::size_t n_frames = 0;
  std::size_t n_mel_bins = 0;
  std::vector<float> data;  // [n_frames * n_mel_bins]
};

void save_mels(const std::string& path, std::size_t n_frames, std::size_t n_mel_bins,
               std::span<const float> data);
MelFile load_mels(const std::string& path);

// Min-max normalized binary PGM (P5) rendering for eyeballing; rows are mel
// bins (highest bin on top), columns are frames.
void save_pgm(const std::string& path, const MelFile& mel);

}  // namespace alba
