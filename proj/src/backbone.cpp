#include "alba/backbone.hpp"

#include <cmath>
#include <sstream>

#include "alba/checkpoint.hpp"
#include "alba/hashio.hpp"

namespace alba {

void BackboneConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("backbone config: ") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(d_model, "d_model");
  positive(n_encoder_layers, "n_encoder_layers");
  positive(n_decoder_layers, "n_decoder_layers");
  positive(n_heads, "n_heads");
  positive(conv_kernel, "conv_kernel");
  positive(n_mel_bins, "n_mel_bins");
  positive(n_speakers, "n_speakers");
  positive(variance_hidden, "variance_hidden");
  positive(ff_mult, "ff_mult");
  if (d_model % n_heads != 0)
    throw ConfigError("backbone config: d_model must be divisible by n_heads");
  if (d_spk() == 0)
    throw ConfigError("backbone config: d_model too small, speaker conditioning is mandatory (d_spk = d_model/4)");
  if (conv_kernel % 2 == 0) throw ConfigError("backbone config: conv_kernel must be odd");
  if (frozen_encoder_layers > n_encoder_layers)
    throw ConfigError("backbone config: frozen_encoder_layers exceeds n_encoder_layers");
  if (upsampler_sigma <= 0) throw ConfigError("backbone config: upsampler_sigma must be positive");
  if (ln_eps <= 0) throw ConfigError("backbone config: ln_eps must be positive");
  if (aux_enabled() && d_aux == 0)
    throw ConfigError("backbone config: d_aux must be positive when the aux table is enabled");
}

std::string BackboneConfig::canonical_string() const {
  std::ostringstream os;
  os << "aux_vocab=" << aux_vocab << "\n"
     << "conv_kernel=" << conv_kernel << "\n"
     << "d_aux=" << d_aux << "\n"
     << "d_model=" << d_model << "\n"
     << "ff_mult=" << ff_mult << "\n"
     << "frozen_encoder_layers=" << frozen_encoder_layers << "\n"
     << "ln_eps=" << ln_eps << "\n"
     << "n_decoder_layers=" << n_decoder_layers << "\n"
     << "n_encoder_layers=" << n_encoder_layers << "\n"
     << "n_heads=" << n_heads << "\n"
     << "n_mel_bins=" << n_mel_bins << "\n"
     << "n_speakers=" << n_speakers << "\n"
     << "upsampler_sigma=" << upsampler_sigma << "\n"
     << "variance_hidden=" << variance_hidden << "\n"
     << "vocab_size=" << vocab_size << "\n";
  return os.str();
}

std::uint64_t BackboneConfig::fingerprint() const {
  std::uint64_t h = fnv1a64(canonical_string());
  return h == 0 ? 1 : h;  // 0 is reserved for "no fingerprint"
}

std::vector<std::string> adapter_sites(const BackboneConfig& cfg, bool variance_sites) {
  std::vector<std::string> sites;
  for (std::size_t i = 0; i < cfg.n_decoder_layers; ++i)
    sites.push_back("decoder_block" + std::to_string(i));
  if (variance_sites) {
    for (const char* head : {"variance_dur", "variance_f0", "variance_energy"}) {
      sites.push_back(std::string(head) + "_sub0");
      sites.push_back(std::string(head) + "_sub1");
    }
  }
  return sites;
}

std::map<std::string, std::size_t> adapter_site_widths(const BackboneConfig& cfg, bool variance_sites) {
  std::map<std::string, std::size_t> widths;
  for (const auto& s : adapter_sites(cfg, variance_sites))
    widths[s] = s.rfind("variance_", 0) == 0 ? cfg.variance_hidden : cfg.d_model;
  return widths;
}

std::size_t upsample_frame_count(const std::vector<double>& durations) {
  if (durations.empty()) throw DataError("gaussian_upsample: empty durations");
  double s = 0.0;
  for (double d : durations) {
    if (!(d > 0.0)) throw DataError("gaussian_upsample: non-positive duration");
    s += d;
  }
  long long t = std::llround(s);
  return t < 1 ? 1 : static_cast<std::size_t>(t);
}

void save_backbone(const Backbone& bb, const std::string& path) {
  save_checkpoint(bb.params, path);
  std::string labels;
  for (std::size_t i = 0; i < bb.speaker_labels.size(); ++i) {
    if (i) labels += ",";
    labels += bb.speaker_labels[i];
  }
  write_file_text(path + ".cfg", bb.cfg.canonical_string() + "speaker_labels=" + labels + "\n");
}

Backbone load_backbone(const std::string& path) {
  std::string text;
  try {
    text = read_file_text(path + ".cfg");
  } catch (const IoError&) {
    throw IoError("backbone checkpoint sidecar missing: " + path + ".cfg");
  }
  BackboneConfig cfg;
  std::vector<std::string> labels;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "vocab_size") cfg.vocab_size = std::stoul(val);
    else if (key == "d_model") cfg.d_model = std::stoul(val);
    else if (key == "n_encoder_layers") cfg.n_encoder_layers = std::stoul(val);
    else if (key == "n_decoder_layers") cfg.n_decoder_layers = std::stoul(val);
    else if (key == "n_heads") cfg.n_heads = std::stoul(val);
    else if (key == "conv_kernel") cfg.conv_kernel = std::stoul(val);
    else if (key == "n_mel_bins") cfg.n_mel_bins = std::stoul(val);
    else if (key == "n_speakers") cfg.n_speakers = std::stoul(val);
    else if (key == "variance_hidden") cfg.variance_hidden = std::stoul(val);
    else if (key == "ff_mult") cfg.ff_mult = std::stoul(val);
    else if (key == "frozen_encoder_layers") cfg.frozen_encoder_layers = std::stoul(val);
    else if (key == "upsampler_sigma") cfg.upsampler_sigma = std::stod(val);
    else if (key == "ln_eps") cfg.ln_eps = std::stod(val);
    else if (key == "aux_vocab") cfg.aux_vocab = std::stoul(val);
    else if (key == "d_aux") cfg.d_aux = std::stoul(val);
    else if (key == "speaker_labels") {
      std::string cur;
      for (char c : val + ",") {
        if (c == ',') {
          if (!cur.empty()) labels.push_back(cur);
          cur.clear();
        } else if (c != '\r') cur += c;
      }
    }
  }
  Rng rng(0);
  Backbone bb = Backbone::build(cfg, rng, std::move(labels));
  load_checkpoint_into(bb.params, path);
  return bb;
}

AdapterPack insert_adapters(const Backbone& bb, const std::string& speaker_label,
                            bool variance_sites, std::size_t r_decoder, std::size_t r_variance,
                            std::vector<float> speaker_vec_init, Rng& rng, double dropout_rate) {
  if (speaker_vec_init.size() != bb.cfg.d_spk())
    throw DimensionError("insert_adapters: speaker vector length " +
                         std::to_string(speaker_vec_init.size()) + ", expected " +
                         std::to_string(bb.cfg.d_spk()));
  return make_adapter_pack(speaker_label, bb.cfg.fingerprint(), adapter_sites(bb.cfg, variance_sites),
                           adapter_site_widths(bb.cfg, variance_sites), r_decoder, r_variance,
                           std::move(speaker_vec_init), rng, dropout_rate);
}

}  // namespace alba
