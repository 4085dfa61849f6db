#include "alba/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "alba/errors.hpp"
#include "alba/hashio.hpp"

namespace alba {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr char kDatasetMagic[4] = {'S', 'D', 'S', '1'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void CorpusConfig::validate() const {
  if (n_speakers < 2) throw ConfigError("corpus: need at least 2 backbone speakers");
  if (vocab_size == 0 || n_mel_bins == 0 || utts_per_speaker == 0)
    throw ConfigError("corpus: vocab_size, n_mel_bins, utts_per_speaker must be positive");
  if (len_min == 0 || len_max < len_min)
    throw ConfigError("corpus: utterance length range invalid");
}

SpeakerSpec gen_speaker(std::uint64_t corpus_seed, const std::string& label, std::size_t n_mel_bins) {
  Rng rng = keyed_rng(corpus_seed, "speaker/" + label);
  SpeakerSpec s;
  s.label = label;
  // sign of the pitch offset is the binary voice attribute
  float sign = (rng.next_u64() & 1) ? 1.0f : -1.0f;
  s.pitch_offset = sign * rng.uniform_f(1.0f, 3.0f);
  s.rate = rng.uniform_f(0.7f, 1.3f);
  s.energy_scale = rng.uniform_f(0.6f, 1.4f);
  s.timbre.resize(n_mel_bins);
  for (auto& t : s.timbre) t = rng.uniform_f(-0.3f, 0.3f);
  s.phase = static_cast<float>(rng.uniform(0.0, kTwoPi));
  return s;
}

TokenSpec gen_token(std::uint64_t corpus_seed, std::uint32_t token_id, std::size_t n_mel_bins) {
  Rng rng = keyed_rng(corpus_seed, "token/" + std::to_string(token_id));
  TokenSpec t;
  t.base_duration = rng.uniform_f(2.0f, 8.0f);
  t.base_pitch = rng.uniform_f(-1.0f, 1.0f);
  t.base_energy = rng.uniform_f(0.5f, 1.5f);
  // spectral template = shared unit floor + token-specific bump; the floor
  // keeps pooled frames carrying the speaker's tilt/scale rather than the
  // token mix
  double center = rng.uniform(0.0, static_cast<double>(n_mel_bins - 1));
  double width = rng.uniform(1.0, 2.5);
  double amp = rng.uniform(0.4, 1.0);
  t.spectral.resize(n_mel_bins);
  for (std::size_t b = 0; b < n_mel_bins; ++b) {
    double c = (static_cast<double>(b) - center) / width;
    t.spectral[b] = static_cast<float>(1.0 + amp * std::exp(-0.5 * c * c));
  }
  return t;
}

Utterance render_utterance(std::uint64_t corpus_seed, const SpeakerSpec& spec,
                           const std::vector<std::uint32_t>& tokens, std::size_t vocab_size,
                           std::size_t n_mel_bins) {
  if (tokens.empty()) throw DataError("render_utterance: empty token sequence");
  Utterance u;
  u.speaker = spec.label;
  u.tokens = tokens;
  std::size_t n = tokens.size();
  u.durations.resize(n);
  u.log_f0.resize(n);
  u.energy.resize(n);
  std::size_t big_t = 0;
  std::vector<TokenSpec> specs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] >= vocab_size)
      throw VocabError("render_utterance: token " + std::to_string(tokens[i]) +
                       " out of vocabulary size " + std::to_string(vocab_size));
    specs[i] = gen_token(corpus_seed, tokens[i], n_mel_bins);
    long frames = std::lround(static_cast<double>(specs[i].base_duration) * spec.rate);
    u.durations[i] = frames < 1 ? 1u : static_cast<std::uint32_t>(frames);
    u.log_f0[i] = specs[i].base_pitch + spec.pitch_offset;
    u.energy[i] = spec.energy_scale * specs[i].base_energy;
    big_t += u.durations[i];
  }
  u.n_frames = big_t;
  u.mel.resize(big_t * n_mel_bins);
  std::size_t f = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t rep = 0; rep < u.durations[i]; ++rep, ++f) {
      for (std::size_t b = 0; b < n_mel_bins; ++b) {
        double wave = 1.0 + 0.3 * std::sin(kTwoPi * static_cast<double>(b) / static_cast<double>(n_mel_bins) +
                                           0.2 * static_cast<double>(spec.pitch_offset) +
                                           static_cast<double>(spec.phase));
        double v = static_cast<double>(spec.energy_scale) * specs[i].spectral[b] * wave +
                   static_cast<double>(spec.timbre[b]);
        u.mel[f * n_mel_bins + b] = v < 0.0 ? 0.0f : static_cast<float>(v);
      }
    }
  }
  return u;
}

namespace {

std::vector<std::uint32_t> draw_tokens(Rng& rng, const CorpusConfig& cfg) {
  std::size_t len = cfg.len_min + rng.below(cfg.len_max - cfg.len_min + 1);
  std::vector<std::uint32_t> t(len);
  for (auto& id : t) id = static_cast<std::uint32_t>(rng.below(cfg.vocab_size));
  return t;
}

void split_dataset(const Dataset& all, Dataset& train, Dataset& val, Dataset& test) {
  std::size_t n = all.size();
  std::size_t n_train = n * 8 / 10;
  std::size_t n_val = n / 10;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) train.push_back(all[i]);
    else if (i < n_train + n_val) val.push_back(all[i]);
    else test.push_back(all[i]);
  }
}

std::string two_digits(std::size_t i) {
  std::string s = std::to_string(i);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

const Dataset& Corpus::split(const std::string& name) const {
  if (name == "backbone_train") return backbone_train;
  if (name == "backbone_val") return backbone_val;
  if (name == "backbone_test") return backbone_test;
  if (name == "target_train") return target_train;
  if (name == "target_val") return target_val;
  if (name == "target_test") return target_test;
  throw DataError("unknown corpus split '" + name + "'");
}

Corpus generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.cfg = cfg;
  for (std::size_t i = 0; i < cfg.n_speakers; ++i)
    corpus.backbone_speakers.push_back("spk" + two_digits(i));
  for (std::size_t i = 0; i < cfg.n_target_speakers; ++i)
    corpus.target_speakers.push_back("tgt" + two_digits(i));

  auto render_speaker = [&](const std::string& label, Dataset& train, Dataset& val, Dataset& test) {
    SpeakerSpec spec = gen_speaker(cfg.corpus_seed, label, cfg.n_mel_bins);
    Rng rng = keyed_rng(cfg.corpus_seed, "utts/" + label);
    Dataset all;
    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u)
      all.push_back(render_utterance(cfg.corpus_seed, spec, draw_tokens(rng, cfg), cfg.vocab_size,
                                     cfg.n_mel_bins));
    split_dataset(all, train, val, test);
  };

  for (const auto& label : corpus.backbone_speakers)
    render_speaker(label, corpus.backbone_train, corpus.backbone_val, corpus.backbone_test);
  for (const auto& label : corpus.target_speakers)
    render_speaker(label, corpus.target_train, corpus.target_val, corpus.target_test);
  return corpus;
}

void save_dataset(const std::string& path, const Dataset& records, std::size_t n_mel_bins) {
  ByteWriter w;
  w.raw(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& u : records) {
    w.str16(u.speaker);
    std::uint32_t n = static_cast<std::uint32_t>(u.n_tokens());
    w.u32(n);
    for (std::uint32_t id : u.tokens) w.u32(id);
    for (std::uint32_t d : u.durations) w.u32(d);
    w.f32s(u.log_f0.data(), n);
    w.f32s(u.energy.data(), n);
    w.u32(static_cast<std::uint32_t>(u.n_frames));
    if (u.mel.size() != u.n_frames * n_mel_bins)
      throw DataError("save_dataset: mel size mismatch for speaker " + u.speaker);
    w.f32s(u.mel.data(), u.mel.size());
  }
  write_container(path, w);
}

Dataset load_dataset(const std::string& path, std::size_t n_mel_bins) {
  auto raw = read_file_bytes(path);
  if (raw.size() < 4 || std::memcmp(raw.data(), kDatasetMagic, 4) != 0)
    throw BadMagicError(path + ": not an SDS1 dataset");
  auto payload = read_container(path);
  ByteReader r(payload.data(), payload.size(), path);
  r.u32();  // magic
  std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw VersionError(path + ": dataset version " + std::to_string(version) + ", expected " +
                       std::to_string(kDatasetVersion));
  Dataset out;
  std::uint32_t count = r.u32();
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Utterance u;
    u.speaker = r.str16();
    std::uint32_t n = r.u32();
    u.tokens.resize(n);
    for (auto& id : u.tokens) id = r.u32();
    u.durations.resize(n);
    std::size_t dur_sum = 0;
    for (auto& d : u.durations) {
      d = r.u32();
      dur_sum += d;
    }
    u.log_f0.resize(n);
    r.f32s(u.log_f0.data(), n);
    u.energy.resize(n);
    r.f32s(u.energy.data(), n);
    u.n_frames = r.u32();
    if (u.n_frames != dur_sum)
      throw DataError(path + ": record " + std::to_string(i) + " frame count " +
                      std::to_string(u.n_frames) + " != duration sum " + std::to_string(dur_sum));
    u.mel.resize(u.n_frames * n_mel_bins);
    r.f32s(u.mel.data(), u.mel.size());
    out.push_back(std::move(u));
  }
  return out;
}

namespace {
const char* kSplitNames[] = {"backbone_train", "backbone_val", "backbone_test",
                             "target_train", "target_val", "target_test"};

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else cur += c;
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}
}  // namespace

void write_corpus(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const char* name : kSplitNames) {
    const Dataset& ds = corpus.split(name);
    save_dataset(dir + "/" + name + ".sds", ds, corpus.cfg.n_mel_bins);
    for (std::size_t i = 0; i < ds.size(); ++i)
      manifest << name << "\t" << ds[i].speaker << "\t" << i << "\n";
  }
  write_file_text(dir + "/manifest.tsv", manifest.str());

  const CorpusConfig& c = corpus.cfg;
  std::ostringstream cfg;
  cfg << "corpus_seed=" << c.corpus_seed << "\n"
      << "vocab_size=" << c.vocab_size << "\n"
      << "n_mel_bins=" << c.n_mel_bins << "\n"
      << "n_speakers=" << c.n_speakers << "\n"
      << "n_target_speakers=" << c.n_target_speakers << "\n"
      << "utts_per_speaker=" << c.utts_per_speaker << "\n"
      << "len_min=" << c.len_min << "\n"
      << "len_max=" << c.len_max << "\n"
      << "backbone_speakers=" << join(corpus.backbone_speakers) << "\n"
      << "target_speakers=" << join(corpus.target_speakers) << "\n";
  write_file_text(dir + "/corpus.cfg", cfg.str());
}

Corpus load_corpus(const std::string& dir) {
  std::string text;
  try {
    text = read_file_text(dir + "/corpus.cfg");
  } catch (const IoError&) {
    throw DataError("not a corpus directory (missing corpus.cfg): " + dir);
  }
  Corpus corpus;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "corpus_seed") corpus.cfg.corpus_seed = std::stoull(val);
    else if (key == "vocab_size") corpus.cfg.vocab_size = std::stoul(val);
    else if (key == "n_mel_bins") corpus.cfg.n_mel_bins = std::stoul(val);
    else if (key == "n_speakers") corpus.cfg.n_speakers = std::stoul(val);
    else if (key == "n_target_speakers") corpus.cfg.n_target_speakers = std::stoul(val);
    else if (key == "utts_per_speaker") corpus.cfg.utts_per_speaker = std::stoul(val);
    else if (key == "len_min") corpus.cfg.len_min = std::stoul(val);
    else if (key == "len_max") corpus.cfg.len_max = std::stoul(val);
    else if (key == "backbone_speakers") corpus.backbone_speakers = split_csv(val);
    else if (key == "target_speakers") corpus.target_speakers = split_csv(val);
  }
  corpus.backbone_train = load_dataset(dir + "/backbone_train.sds", corpus.cfg.n_mel_bins);
  corpus.backbone_val = load_dataset(dir + "/backbone_val.sds", corpus.cfg.n_mel_bins);
  corpus.backbone_test = load_dataset(dir + "/backbone_test.sds", corpus.cfg.n_mel_bins);
  corpus.target_train = load_dataset(dir + "/target_train.sds", corpus.cfg.n_mel_bins);
  corpus.target_val = load_dataset(dir + "/target_val.sds", corpus.cfg.n_mel_bins);
  corpus.target_test = load_dataset(dir + "/target_test.sds", corpus.cfg.n_mel_bins);
  return corpus;
}

MixStream::MixStream(const Dataset* backbone, const Dataset* target, std::uint32_t a,
                     std::uint32_t b, Rng rng)
    : backbone_(backbone), target_(target), rng_(rng) {
  if (a == 0 && b == 0) throw ConfigError("mix_stream: ratio 0:0 is meaningless");
  p_backbone_ = static_cast<double>(a) / (static_cast<double>(a) + static_cast<double>(b));
}

const Utterance& MixStream::next() {
  bool pick_backbone = rng_.next_double() < p_backbone_;
  const Dataset* src = pick_backbone ? backbone_ : target_;
  const char* name = pick_backbone ? "backbone" : "target";
  if (!src || src->empty())
    throw DataError(std::string("mix_stream: selected ") + name + " source is empty");
  return (*src)[rng_.below(src->size())];
}

}  // namespace alba
