#include "alba/melspec.hpp"

#include <algorithm>
#include <cstring>

#include "alba/errors.hpp"
#include "alba/hashio.hpp"

namespace alba {

namespace {
constexpr char kMelMagic[4] = {'M', 'E', 'L', 'S'};
constexpr std::uint32_t kMelVersion = 1;
}  // namespace

void save_mels(const std::string& path, std::size_t n_frames, std::size_t n_mel_bins,
               std::span<const float> data) {
  if (data.size() != n_frames * n_mel_bins)
    throw DimensionError("save_mels: data length does not match T x n_mel_bins");
  ByteWriter w;
  w.raw(kMelMagic, 4);
  w.u32(kMelVersion);
  w.u32(static_cast<std::uint32_t>(n_frames));
  w.u32(static_cast<std::uint32_t>(n_mel_bins));
  w.f32s(data.data(), data.size());
  write_container(path, w);
}

MelFile load_mels(const std::string& path) {
  auto raw = read_file_bytes(path);
  if (raw.size() < 4 || std::memcmp(raw.data(), kMelMagic, 4) != 0)
    throw BadMagicError(path + ": not a MELS spectrogram file");
  auto payload = read_container(path);
  ByteReader r(payload.data(), payload.size(), path);
  r.u32();  // magic
  std::uint32_t version = r.u32();
  if (version != kMelVersion)
    throw VersionError(path + ": spectrogram version " + std::to_string(version) + ", expected " +
                       std::to_string(kMelVersion));
  MelFile mel;
  mel.n_frames = r.u32();
  mel.n_mel_bins = r.u32();
  mel.data.resize(mel.n_frames * mel.n_mel_bins);
  r.f32s(mel.data.data(), mel.data.size());
  return mel;
}

void save_pgm(const std::string& path, const MelFile& mel) {
  if (mel.data.empty()) throw DataError("save_pgm: empty spectrogram");
  float lo = *std::min_element(mel.data.begin(), mel.data.end());
  float hi = *std::max_element(mel.data.begin(), mel.data.end());
  float range = hi - lo;
  if (range <= 0.0f) range = 1.0f;
  std::string header = "P5\n" + std::to_string(mel.n_frames) + " " + std::to_string(mel.n_mel_bins) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (std::size_t b = 0; b < mel.n_mel_bins; ++b) {
    std::size_t bin = mel.n_mel_bins - 1 - b;  // high bins on top
    for (std::size_t f = 0; f < mel.n_frames; ++f) {
      float v = (mel.data[f * mel.n_mel_bins + bin] - lo) / range;
      bytes.push_back(static_cast<unsigned char>(v * 255.0f + 0.5f));
    }
  }
  write_file_bytes(path, bytes);
}

}  // namespace alba
