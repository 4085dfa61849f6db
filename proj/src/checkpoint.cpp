#include "alba/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <set>

namespace alba {

namespace {
constexpr char kMagic[4] = {'A', 'L', 'B', '1'};
}

void serialize_entries(ByteWriter& w, const ParamStore& store) {
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, e] : store) {
    w.str16(name);
    w.u8(e.trainable ? 1 : 0);
    const Shape& s = e.tensor.shape();
    if (s.size() > 255) throw IoError("checkpoint: rank too large for '" + name + "'");
    w.u8(static_cast<std::uint8_t>(s.size()));
    for (std::size_t d : s) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(e.tensor.data().data(), e.tensor.numel());
  }
}

ParamStore parse_entries(ByteReader& r) {
  ParamStore store;
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str16();
    bool trainable = r.u8() != 0;
    std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<float> data(shape_numel(shape));
    r.f32s(data.data(), data.size());
    store.add(name, Tensor::from(shape, std::move(data)), trainable);
  }
  return store;
}

void save_checkpoint(const ParamStore& store, const std::string& path) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  serialize_entries(w, store);
  write_container(path, w);
}

ParamStore load_checkpoint(const std::string& path) {
  auto raw = read_file_bytes(path);
  if (raw.size() < 4 || std::memcmp(raw.data(), kMagic, 4) != 0)
    throw BadMagicError(path + ": not an ALB1 checkpoint");
  auto payload = read_container(path);  // verifies trailing CRC
  ByteReader r(payload.data(), payload.size(), path);
  r.u32();  // magic, already checked
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw VersionError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  return parse_entries(r);
}

void copy_into_store(ParamStore& dst, const ParamStore& src, const std::string& context) {
  std::set<std::string> dst_names, src_names;
  for (const auto& [name, e] : dst) dst_names.insert(name);
  for (const auto& [name, e] : src) src_names.insert(name);
  if (dst_names != src_names) {
    std::string missing, extra;
    for (const auto& n : dst_names)
      if (!src_names.count(n)) missing += " " + n;
    for (const auto& n : src_names)
      if (!dst_names.count(n)) extra += " " + n;
    throw NameSetError(context + ": parameter name sets differ; missing:{" + missing + " } extra:{" +
                       extra + " }");
  }
  for (auto& [name, e] : dst) {
    const auto& s = src.get(name);
    if (s.shape() != e.tensor.shape())
      throw NameSetError(context + ": shape mismatch for '" + name + "': " +
                         shape_str(e.tensor.shape()) + " vs " + shape_str(s.shape()));
    std::copy(s.data().begin(), s.data().end(), e.tensor.data().begin());
  }
  for (const auto& [name, e] : src) dst.set_trainable(name, e.trainable);
  dst.bump();
}

void load_checkpoint_into(ParamStore& dst, const std::string& path) {
  ParamStore loaded = load_checkpoint(path);
  copy_into_store(dst, loaded, path);
}

}  // namespace alba
