#include <cmath>
#include <cstring>
#include <set>

#include "alba/backbone.hpp"
#include "alba/synthdata.hpp"
#include "doctest.h"

using namespace alba;

namespace {

BackboneConfig small_cfg() {
  BackboneConfig cfg;  // desk defaults
  return cfg;
}

Backbone small_backbone(std::uint64_t seed = 7) {
  Rng rng(seed);
  return Backbone::build(small_cfg(), rng, {"spk00", "spk01", "spk02", "spk03", "spk04", "spk05", "spk06", "spk07"});
}

Utterance sample_utt(std::uint64_t seed = 21) {
  CorpusConfig cc;
  SpeakerSpec spec = gen_speaker(cc.corpus_seed, "spk00", cc.n_mel_bins);
  Rng rng(seed);
  std::vector<std::uint32_t> tokens;
  for (int i = 0; i < 7; ++i) tokens.push_back(static_cast<std::uint32_t>(rng.below(cc.vocab_size)));
  return render_utterance(cc.corpus_seed, spec, tokens, cc.vocab_size, cc.n_mel_bins);
}

}  // namespace

TEST_CASE("upsampler weights") {
  SUBCASE("single token: every frame is that token") {
    Rng rng(1);
    Tensor x = Tensor::uniform({1, 4}, rng, -1, 1);
    Tensor y = gaussian_upsample(x, {3.4}, 1.0);
    CHECK(y.shape() == Shape{3, 4});
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t j = 0; j < 4; ++j) CHECK(y.data()[f * 4 + j] == x.data()[j]);
  }

  SUBCASE("hand-derived weight for durations (2,3)") {
    auto w = upsample_weight_matrix<double>({2.0, 3.0}, 1.0, upsample_frame_count({2.0, 3.0}));
    CHECK(upsample_frame_count({2.0, 3.0}) == 5);
    // frame 0 center 0.5; token centers 1.0 and 3.5; exponents -0.125 vs -4.5
    CHECK(std::round(w[0] * 1e4) / 1e4 == doctest::Approx(0.9876));
  }

  SUBCASE("rows sum to one and centers increase") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> durs;
      double cum = 0, prev_center = -1;
      for (int i = 0; i < 6; ++i) {
        durs.push_back(rng.uniform(0.5, 6.0));
        cum += durs.back();
        double center = cum - durs.back() / 2;
        CHECK(center > prev_center);
        prev_center = center;
      }
      std::size_t t = upsample_frame_count(durs);
      bool count_ok = t == static_cast<std::size_t>(std::llround(cum)) || t == 1;
      CHECK(count_ok);
      auto w = upsample_weight_matrix<float>(durs, 1.0, t);
      for (std::size_t f = 0; f < t; ++f) {
        double row = 0;
        for (std::size_t i = 0; i < durs.size(); ++i) row += w[f * durs.size() + i];
        CHECK(std::fabs(row - 1.0) <= 1e-6);
      }
    }
  }

  SUBCASE("frame count is monotone in durations") {
    CHECK(upsample_frame_count({2.0, 3.0}) < upsample_frame_count({4.0, 5.0}));
  }

  SUBCASE("errors") {
    Rng rng(1);
    Tensor x = Tensor::uniform({2, 3}, rng, -1, 1);
    CHECK_THROWS_AS(gaussian_upsample(x, {1.0, -0.5}, 1.0), DataError);
    CHECK_THROWS_AS(gaussian_upsample(x, {1.0, 1.0}, 0.0), ConfigError);
    CHECK_THROWS_AS(gaussian_upsample(x, {1.0}, 1.0), DimensionError);
  }
}

TEST_CASE("config validation and fingerprints") {
  BackboneConfig cfg = small_cfg();
  cfg.validate();
  std::uint64_t fp = cfg.fingerprint();
  BackboneConfig other = cfg;
  other.n_decoder_layers = 4;
  CHECK(other.fingerprint() != fp);
  CHECK(cfg.fingerprint() == fp);  // stable

  BackboneConfig bad = cfg;
  bad.n_heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.conv_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.frozen_encoder_layers = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.d_model = 2;  // d_spk would be 0: speaker conditioning is mandatory
  bad.n_heads = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("encode") {
  Backbone bb = small_backbone();
  Tensor one = bb.encode({3});
  CHECK(one.shape() == Shape{1, bb.cfg.d_model});

  Tensor a = bb.encode({3, 9, 4});
  Tensor b = bb.encode({3, 9, 4});
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0);

  // swapping two tokens changes the output (position sensitivity)
  Tensor swapped = bb.encode({9, 3, 4});
  bool differs = false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != swapped.data()[i]) differs = true;
  CHECK(differs);

  CHECK_THROWS_AS(bb.encode({999}), VocabError);
  CHECK_THROWS_AS(bb.encode({}), DataError);
}

TEST_CASE("condition broadcasts the speaker vector") {
  Backbone bb = small_backbone();
  Tensor enc = bb.encode({1, 2, 3, 4});
  Rng rng(5);
  Tensor spk = Tensor::uniform({bb.cfg.d_spk()}, rng, -1, 1);
  Tensor cond = bb.condition(enc, spk);
  std::size_t d = bb.cfg.d_model, ds = bb.cfg.d_spk();
  CHECK(cond.shape() == Shape{4, d + ds});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < ds; ++j) CHECK(cond.data()[i * (d + ds) + d + j] == spk.data()[j]);

  // a different speaker vector only changes the trailing columns
  Tensor spk2 = Tensor::uniform({ds}, rng, -1, 1);
  Tensor cond2 = bb.condition(enc, spk2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(cond.data()[i * (d + ds) + j] == cond2.data()[i * (d + ds) + j]);

  CHECK_THROWS_AS(bb.condition(enc, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("auxiliary per-token embedding hook") {
  BackboneConfig cfg = small_cfg();
  cfg.aux_vocab = 5;
  cfg.d_aux = 4;
  Rng rng(13);
  Backbone bb = Backbone::build(cfg, rng, {});
  CHECK(bb.params.contains("aux_table.rows"));
  Tensor enc = bb.encode({1, 2, 3});
  Tensor spk = bb.speaker_vec_for(0);

  std::vector<std::uint32_t> aux = {0, 4, 2};
  Tensor with_ids = bb.condition(enc, spk, &aux);
  Tensor without = bb.condition(enc, spk);  // neutral row 0 everywhere
  std::size_t w = cfg.cond_width();
  CHECK(with_ids.shape() == Shape{3, w});
  CHECK(without.shape() == Shape{3, w});
  // row 0 of both agree (aux id 0 == neutral); row 1 differs in the aux block
  for (std::size_t j = 0; j < w; ++j) CHECK(with_ids.data()[j] == without.data()[j]);
  bool aux_differs = false;
  for (std::size_t j = w - cfg.d_aux; j < w; ++j)
    if (with_ids.data()[w + j] != without.data()[w + j]) aux_differs = true;
  CHECK(aux_differs);

  // the hook feeds the whole pipeline: teacher-forced loss is finite
  Utterance utt = sample_utt();
  Rng r2(5);
  auto loss = bb.forward_teacher_forced(utt, spk, nullptr, Mode::train, Mode::train, r2);
  CHECK(std::isfinite(loss.total.item()));

  // disabled by default
  CHECK_FALSE(small_cfg().aux_enabled());
}

TEST_CASE("variance heads") {
  Backbone bb = small_backbone();
  Tensor enc = bb.encode({5, 6, 7});
  Tensor cond = bb.condition(enc, bb.speaker_vec_for(0));
  Rng rng(2);
  auto v = bb.variance_predict(cond, nullptr, Mode::infer, rng);
  CHECK(v.log_duration.shape() == Shape{3});
  CHECK(v.log_f0.shape() == Shape{3});
  CHECK(v.energy.shape() == Shape{3});

  // zero the final linear of the duration head: predictions all 0
  std::fill(bb.dur_head.out.w.data().begin(), bb.dur_head.out.w.data().end(), 0.0f);
  std::fill(bb.dur_head.out.b.data().begin(), bb.dur_head.out.b.data().end(), 0.0f);
  auto v2 = bb.variance_predict(cond, nullptr, Mode::infer, rng);
  for (float x : v2.log_duration.data()) CHECK(x == 0.0f);
}

TEST_CASE("parameter names partition into the declared prefixes") {
  Backbone bb = small_backbone();
  const std::vector<std::string> prefixes = {"encoder.", "speaker_table.", "aux_table.",
                                             "variance.", "decoder.", "mel_proj."};
  for (const auto& name : bb.params.names()) {
    int matches = 0;
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0) ++matches;
    if (name.rfind("mel_proj", 0) == 0) matches = 1;  // mel_proj.w / mel_proj.b
    CHECK(matches == 1);
  }
  // batch-norm state only inside decoder conv modules
  for (const auto& name : bb.params.names()) {
    if (name.find(".bn.") != std::string::npos)
      CHECK(name.rfind("decoder.block", 0) == 0);
  }
  std::size_t bn_entries = 0;
  for (const auto& name : bb.params.names())
    if (name.find(".bn.") != std::string::npos) ++bn_entries;
  CHECK(bn_entries == bb.cfg.n_decoder_layers * 4);  // gain, bias, two running stats
}

TEST_CASE("loss function examples") {
  // single-element mel, pred 0, target 2 -> L1 + L2 = 2 + 4
  Tensor pred = Tensor::from({1, 1}, {0.0f});
  Tensor target = Tensor::from({1, 1}, {2.0f});
  CHECK(l1_l2_loss(pred, target).item() == doctest::Approx(6.0));
  CHECK(l1_l2_loss(target, target).item() == 0.0f);
  CHECK(l2_loss(target, target).item() == 0.0f);
}

TEST_CASE("teacher-forced forward") {
  Backbone bb = small_backbone();
  Utterance utt = sample_utt();
  Rng rng(3);
  auto loss = bb.forward_teacher_forced(utt, bb.speaker_vec_for(0), nullptr, Mode::train, Mode::train, rng);
  CHECK(loss.total.item() > 0.0f);
  CHECK(std::isfinite(loss.total.item()));
  CHECK(loss.total.item() == doctest::Approx(loss.mel.item() + loss.dur.item() + loss.f0.item() +
                                             loss.energy.item()));

  // corrupting the frame count must raise a data error
  Utterance bad = utt;
  bad.n_frames += 1;
  bad.mel.resize(bad.n_frames * bb.cfg.n_mel_bins);
  CHECK_THROWS_AS(
      bb.forward_teacher_forced(bad, bb.speaker_vec_for(0), nullptr, Mode::train, Mode::train, rng) , DataError);
}

TEST_CASE("gradient flows into encoder from the duration loss when unfrozen") {
  Backbone bb = small_backbone();
  Utterance utt = sample_utt();
  Rng rng(4);
  auto loss = bb.forward_teacher_forced(utt, bb.speaker_vec_for(0), nullptr, Mode::train, Mode::train, rng);
  backward(loss.dur);
  double norm = 0;
  for (const auto& name : bb.params.names()) {
    if (name.rfind("encoder.", 0) != 0) continue;
    const auto& t = bb.params.get(name);
    if (t.has_grad())
      for (float g : t.grad()) norm += static_cast<double>(g) * g;
  }
  CHECK(norm > 0.0);
}

TEST_CASE("synthesize") {
  Backbone bb = small_backbone();
  std::vector<std::uint32_t> tokens = {2, 8, 13, 21, 34};
  Tensor spk = bb.speaker_vec_for(1);

  Tensor a = bb.synthesize(tokens, spk);
  Tensor b = bb.synthesize(tokens, spk);
  CHECK(a.shape()[1] == bb.cfg.n_mel_bins);
  REQUIRE(a.shape() == b.shape());
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0);
  for (float v : a.data()) CHECK(std::isfinite(v));

  // fresh zero-init adapters do not change a single bit
  Rng rng(5);
  AdapterPack pack = insert_adapters(bb, "tgt00", false, 4, 2,
                                     std::vector<float>(bb.cfg.d_spk(), 0.1f), rng, 0.1);
  Tensor c = bb.synthesize(tokens, spk, &pack.adapters);
  REQUIRE(c.shape() == a.shape());
  CHECK(std::memcmp(a.data().data(), c.data().data(), a.numel() * sizeof(float)) == 0);
}

TEST_CASE("decode determinism with and without adapter hooks") {
  Backbone bb = small_backbone();
  Rng rng(6);
  Tensor frames = Tensor::uniform({9, bb.cfg.cond_width() + 2}, rng, -1, 1);
  NoGrad ng;
  Rng drop(0);
  Tensor ref = bb.decode(frames, nullptr, Mode::infer, Mode::infer, drop);
  CHECK(ref.shape() == Shape{9, bb.cfg.n_mel_bins});
  Tensor again = bb.decode(frames, nullptr, Mode::infer, Mode::infer, drop);
  CHECK(std::memcmp(ref.data().data(), again.data().data(), ref.numel() * sizeof(float)) == 0);
}
