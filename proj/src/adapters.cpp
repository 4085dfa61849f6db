#include "alba/adapters.hpp"

#include <cstring>

#include "alba/checkpoint.hpp"

namespace alba {

AdapterParamCount count_adapter_params(std::size_t d, std::size_t r, std::size_t n_sites,
                                       double backbone_total) {
  if (d == 0 || r == 0 || n_sites == 0 || backbone_total <= 0)
    throw ConfigError("count_adapter_params: all arguments must be positive");
  AdapterParamCount out;
  out.count = n_sites * (3 * d + 2 * d * r + r);
  out.percent = 100.0 * static_cast<double>(out.count) / backbone_total;
  return out;
}

AdapterPack make_adapter_pack(const std::string& speaker_label, std::uint64_t fingerprint,
                              const std::vector<std::string>& sites,
                              const std::map<std::string, std::size_t>& site_widths,
                              std::size_t r_decoder, std::size_t r_variance,
                              std::vector<float> speaker_vec_init, Rng& rng, double dropout_rate) {
  AdapterPack pack;
  pack.speaker_label = speaker_label;
  pack.fingerprint = fingerprint;
  pack.sites = sites;
  for (const auto& site : sites) {
    auto it = site_widths.find(site);
    if (it == site_widths.end()) throw ConfigError("unknown adapter site '" + site + "'");
    std::size_t r = site.rfind("variance_", 0) == 0 ? r_variance : r_decoder;
    pack.adapters.emplace(site, make_adapter(pack.params, "adapter." + site, it->second, r, rng,
                                             dropout_rate));
  }
  std::size_t d_spk = speaker_vec_init.size();
  pack.speaker_vec =
      pack.params.add("speaker_vec", Tensor::from({d_spk}, std::move(speaker_vec_init)));
  return pack;
}

namespace {
constexpr char kPackMagic[4] = {'A', 'P', 'K', '1'};
constexpr std::uint32_t kPackVersion = 1;

// Rebuilds the typed adapter structs over the loaded store's tensors.
void wire_pack(AdapterPack& pack) {
  for (const auto& site : pack.sites) {
    std::string p = "adapter." + site;
    ResidualAdapterT<float> a;
    a.ln_gain = pack.params.get(p + ".ln_gain");
    a.ln_bias = pack.params.get(p + ".ln_bias");
    a.w_down = pack.params.get(p + ".w_down");
    a.b_down = pack.params.get(p + ".b_down");
    a.w_up = pack.params.get(p + ".w_up");
    a.b_up = pack.params.get(p + ".b_up");
    a.d = a.ln_gain.numel();
    a.r = a.b_down.numel();
    pack.adapters.emplace(site, std::move(a));
  }
  pack.speaker_vec = pack.params.get("speaker_vec");
}
}  // namespace

void save_pack(const AdapterPack& pack, const std::string& path) {
  ByteWriter w;
  w.raw(kPackMagic, 4);
  w.u32(kPackVersion);
  w.str16(pack.speaker_label);
  w.u64(pack.fingerprint);
  w.u32(static_cast<std::uint32_t>(pack.sites.size()));
  for (const auto& s : pack.sites) w.str16(s);
  serialize_entries(w, pack.params);
  write_container(path, w);
}

AdapterPack load_pack(const std::string& path) {
  auto raw = read_file_bytes(path);
  if (raw.size() < 4 || std::memcmp(raw.data(), kPackMagic, 4) != 0)
    throw BadMagicError(path + ": not an APK1 adapter pack");
  auto payload = read_container(path);
  ByteReader r(payload.data(), payload.size(), path);
  r.u32();  // magic
  std::uint32_t version = r.u32();
  if (version != kPackVersion)
    throw VersionError(path + ": pack version " + std::to_string(version) + ", expected " +
                       std::to_string(kPackVersion));
  AdapterPack pack;
  pack.speaker_label = r.str16();
  pack.fingerprint = r.u64();
  if (pack.fingerprint == 0) throw IoError(path + ": pack carries no config fingerprint");
  std::uint32_t n_sites = r.u32();
  for (std::uint32_t i = 0; i < n_sites; ++i) pack.sites.push_back(r.str16());
  pack.params = parse_entries(r);
  if (!pack.params.contains("speaker_vec"))
    throw IoError(path + ": pack has no speaker_vec entry");
  wire_pack(pack);
  return pack;
}

}  // namespace alba
