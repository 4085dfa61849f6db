#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "alba/errors.hpp"
#include "alba/hashio.hpp"
#include "alba/melspec.hpp"
#include "alba/synthdata.hpp"
#include "doctest.h"

using namespace alba;

namespace {
std::string tmp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "alba_synth_tests" / name;
  std::filesystem::create_directories(dir);
  return dir.string();
}
}  // namespace

TEST_CASE("speaker and token specs are deterministic and in range") {
  auto a = gen_speaker(42, "spk03", 16);
  auto b = gen_speaker(42, "spk03", 16);
  CHECK(a.pitch_offset == b.pitch_offset);
  CHECK(a.phase == b.phase);
  CHECK(a.timbre == b.timbre);

  int differing = 0;
  auto base = gen_speaker(42, "label000", 16);
  for (int i = 1; i < 100; ++i) {
    auto s = gen_speaker(42, "label" + std::to_string(i), 16);
    if (s.pitch_offset != base.pitch_offset || s.rate != base.rate || s.phase != base.phase)
      ++differing;
  }
  CHECK(differing == 99);

  int positive = 0;
  for (int i = 0; i < 1000; ++i) {
    auto s = gen_speaker(7, "s" + std::to_string(i), 8);
    CHECK(std::fabs(s.pitch_offset) >= 1.0f);
    CHECK(std::fabs(s.pitch_offset) <= 3.0f);
    CHECK(s.rate >= 0.7f);
    CHECK(s.rate <= 1.3f);
    CHECK(s.energy_scale >= 0.6f);
    CHECK(s.energy_scale <= 1.4f);
    for (float t : s.timbre) {
      CHECK(t >= -0.3f);
      CHECK(t <= 0.3f);
    }
    CHECK(s.phase >= 0.0f);
    CHECK(s.phase < 6.2832f);
    if (s.pitch_offset > 0) ++positive;
  }
  // the sign attribute actually splits the population
  CHECK(positive > 300);
  CHECK(positive < 700);

  for (std::uint32_t id = 0; id < 40; ++id) {
    auto t = gen_token(7, id, 8);
    CHECK(t.base_duration >= 2.0f);
    CHECK(t.base_duration <= 8.0f);
    for (float v : t.spectral) CHECK(v >= 0.0f);
  }
}

TEST_CASE("render_utterance invariants") {
  CorpusConfig cc;
  auto spec = gen_speaker(cc.corpus_seed, "spk00", cc.n_mel_bins);

  SUBCASE("rate 1 reproduces rounded base durations") {
    auto unit = spec;
    unit.rate = 1.0f;
    std::vector<std::uint32_t> tokens = {0, 1, 2, 3};
    auto u = render_utterance(cc.corpus_seed, unit, tokens, cc.vocab_size, cc.n_mel_bins);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      auto t = gen_token(cc.corpus_seed, tokens[i], cc.n_mel_bins);
      CHECK(u.durations[i] == static_cast<std::uint32_t>(std::lround(t.base_duration)));
    }
  }

  SUBCASE("ground truth is exact") {
    std::vector<std::uint32_t> tokens = {5, 7};
    auto u = render_utterance(cc.corpus_seed, spec, tokens, cc.vocab_size, cc.n_mel_bins);
    for (std::size_t i = 0; i < 2; ++i) {
      auto t = gen_token(cc.corpus_seed, tokens[i], cc.n_mel_bins);
      CHECK(u.energy[i] == spec.energy_scale * t.base_energy);
      CHECK(u.log_f0[i] == t.base_pitch + spec.pitch_offset);
    }
  }

  SUBCASE("frame sum invariant over 1000 random utterances") {
    Rng rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<std::uint32_t> tokens;
      std::size_t len = 1 + rng.below(12);
      for (std::size_t i = 0; i < len; ++i)
        tokens.push_back(static_cast<std::uint32_t>(rng.below(cc.vocab_size)));
      auto u = render_utterance(cc.corpus_seed, spec, tokens, cc.vocab_size, cc.n_mel_bins);
      std::size_t sum = 0;
      for (auto d : u.durations) sum += d;
      CHECK(u.n_frames == sum);
      CHECK(u.mel.size() == sum * cc.n_mel_bins);
    }
  }

  SUBCASE("two speakers render different mels") {
    auto spec2 = gen_speaker(cc.corpus_seed, "spk01", cc.n_mel_bins);
    std::vector<std::uint32_t> tokens = {1, 2, 3, 4, 5};
    auto a = render_utterance(cc.corpus_seed, spec, tokens, cc.vocab_size, cc.n_mel_bins);
    auto b = render_utterance(cc.corpus_seed, spec2, tokens, cc.vocab_size, cc.n_mel_bins);
    double l1 = 0;
    std::size_t frames = std::min(a.n_frames, b.n_frames);
    for (std::size_t i = 0; i < frames * cc.n_mel_bins; ++i)
      l1 += std::fabs(static_cast<double>(a.mel[i]) - b.mel[i]);
    CHECK(l1 > 0.0);
  }

  SUBCASE("unknown token") {
    CHECK_THROWS_AS(render_utterance(cc.corpus_seed, spec, {999}, cc.vocab_size, cc.n_mel_bins),
                    VocabError);
  }
}

TEST_CASE("corpus generation, splits, and byte-stable files") {
  CorpusConfig cc;  // 8 speakers x 100 utts
  Corpus corpus = generate_corpus(cc);
  CHECK(corpus.backbone_train.size() == 640);
  CHECK(corpus.backbone_val.size() == 80);
  CHECK(corpus.backbone_test.size() == 80);
  CHECK(corpus.target_train.size() == 160);  // 2 held-out target speakers
  CHECK(corpus.target_val.size() == 20);
  CHECK(corpus.backbone_speakers.size() == 8);
  CHECK(corpus.target_speakers.front() == "tgt00");

  // no utterance appears in two splits
  auto key = [](const Utterance& u) {
    std::string k = u.speaker;
    for (auto t : u.tokens) k += "," + std::to_string(t);
    return k;
  };
  std::set<std::string> train_keys, val_keys;
  for (const auto& u : corpus.backbone_train) train_keys.insert(key(u));
  for (const auto& u : corpus.backbone_val) {
    CHECK(train_keys.count(key(u)) == 0);
    val_keys.insert(key(u));
  }

  std::string d1 = tmp_dir("c1"), d2 = tmp_dir("c2");
  write_corpus(corpus, d1);
  Corpus again = generate_corpus(cc);
  write_corpus(again, d2);
  for (const char* f : {"backbone_train.sds", "target_val.sds", "manifest.tsv", "corpus.cfg"})
    CHECK(read_file_bytes(d1 + "/" + std::string(f)) == read_file_bytes(d2 + "/" + std::string(f)));

  Corpus loaded = load_corpus(d1);
  CHECK(loaded.cfg.corpus_seed == cc.corpus_seed);
  CHECK(loaded.backbone_train.size() == 640);
  CHECK(loaded.backbone_train[0].speaker == corpus.backbone_train[0].speaker);
  CHECK(loaded.backbone_train[0].mel == corpus.backbone_train[0].mel);
}

TEST_CASE("dataset container errors") {
  CorpusConfig cc;
  cc.utts_per_speaker = 10;
  Corpus corpus = generate_corpus(cc);
  std::string dir = tmp_dir("io");
  std::string path = dir + "/x.sds";
  save_dataset(path, corpus.backbone_val, cc.n_mel_bins);
  Dataset loaded = load_dataset(path, cc.n_mel_bins);
  CHECK(loaded.size() == corpus.backbone_val.size());

  auto bytes = read_file_bytes(path);
  bytes[bytes.size() / 2] ^= 0x01;
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(load_dataset(path, cc.n_mel_bins), ChecksumError);
}

TEST_CASE("nearest-centroid speaker separability on the desk corpus") {
  CorpusConfig cc;
  Corpus corpus = generate_corpus(cc);
  std::size_t B = cc.n_mel_bins;

  auto pooled = [B](const Utterance& u) {
    std::vector<double> m(B, 0.0);
    for (std::size_t f = 0; f < u.n_frames; ++f)
      for (std::size_t b = 0; b < B; ++b) m[b] += u.mel[f * B + b];
    for (auto& v : m) v /= static_cast<double>(u.n_frames);
    return m;
  };

  std::map<std::string, std::vector<double>> centroid;
  std::map<std::string, int> counts;
  for (const auto& u : corpus.backbone_train) {
    auto m = pooled(u);
    auto& c = centroid[u.speaker];
    if (c.empty()) c.assign(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) c[b] += m[b];
    counts[u.speaker]++;
  }
  for (auto& [label, c] : centroid)
    for (auto& v : c) v /= counts[label];

  int correct = 0, total = 0;
  for (const auto& u : corpus.backbone_val) {
    auto m = pooled(u);
    std::string best;
    double best_d = 1e300;
    for (const auto& [label, c] : centroid) {
      double d = 0;
      for (std::size_t b = 0; b < B; ++b) d += (m[b] - c[b]) * (m[b] - c[b]);
      if (d < best_d) {
        best_d = d;
        best = label;
      }
    }
    if (best == u.speaker) ++correct;
    ++total;
  }
  CHECK(static_cast<double>(correct) / total >= 0.95);
}

TEST_CASE("mix stream ratios") {
  CorpusConfig cc;
  cc.utts_per_speaker = 10;
  Corpus corpus = generate_corpus(cc);

  SUBCASE("99:1 lands near one percent target draws") {
    MixStream mix(&corpus.backbone_train, &corpus.target_train, 99, 1, Rng(1234));
    int target_draws = 0;
    const int n = 25600;
    for (int i = 0; i < n; ++i) {
      const Utterance& u = mix.next();
      if (u.speaker.rfind("tgt", 0) == 0) ++target_draws;
    }
    double frac = static_cast<double>(target_draws) / n;
    CHECK(frac >= 0.006);
    CHECK(frac <= 0.014);
  }

  SUBCASE("degenerate ratios") {
    MixStream only_target(&corpus.backbone_train, &corpus.target_train, 0, 1, Rng(5));
    for (int i = 0; i < 200; ++i) CHECK(only_target.next().speaker.rfind("tgt", 0) == 0);
    MixStream only_backbone(&corpus.backbone_train, &corpus.target_train, 1, 0, Rng(5));
    for (int i = 0; i < 200; ++i) CHECK(only_backbone.next().speaker.rfind("spk", 0) == 0);
    CHECK_THROWS_AS(MixStream(&corpus.backbone_train, &corpus.target_train, 0, 0, Rng(5)),
                    ConfigError);
    Dataset empty;
    MixStream starved(&empty, &corpus.target_train, 99, 1, Rng(5));
    CHECK_THROWS_AS(
        [&] {
          for (int i = 0; i < 1000; ++i) starved.next();
        }(),
        DataError);
  }
}

TEST_CASE("spectrogram container and PGM rendering") {
  std::string dir = tmp_dir("mel");
  std::vector<float> data = {0.0f, 1.0f, 2.0f, 3.0f, 4.0f, 5.0f};
  save_mels(dir + "/a.mels", 2, 3, data);
  MelFile m = load_mels(dir + "/a.mels");
  CHECK(m.n_frames == 2);
  CHECK(m.n_mel_bins == 3);
  CHECK(m.data == data);

  auto bytes = read_file_bytes(dir + "/a.mels");
  bytes[10] ^= 0xFF;
  write_file_bytes(dir + "/bad.mels", bytes);
  CHECK_THROWS_AS(load_mels(dir + "/bad.mels"), ChecksumError);
  ByteWriter w;
  w.raw("ALB1", 4);
  write_container(dir + "/wrong.mels", w);
  CHECK_THROWS_AS(load_mels(dir + "/wrong.mels"), BadMagicError);

  save_pgm(dir + "/a.pgm", m);
  auto pgm = read_file_bytes(dir + "/a.pgm");
  std::string header(pgm.begin(), pgm.begin() + 9);
  CHECK(header == "P5\n2 3\n25");  // "P5\n<w> <h>\n255\n"
  CHECK(pgm.size() == 11 + 6);  // header + one byte per cell
  CHECK(pgm[11 + 4] == 0);      // raster ends with bin 0: frame 0 holds the minimum
  CHECK(pgm[11 + 5] == 153);    // frame 1 bin 0 is 3/5 of the range
}
