#include <cmath>

#include "alba/checkpoint.hpp"
#include "alba/evaluation.hpp"
#include "doctest.h"

using namespace alba;

namespace {

CorpusConfig tiny_cc() {
  CorpusConfig cc;
  cc.corpus_seed = 9;
  cc.vocab_size = 20;
  cc.n_mel_bins = 8;
  cc.n_speakers = 3;
  cc.n_target_speakers = 2;
  cc.utts_per_speaker = 20;
  cc.len_min = 3;
  cc.len_max = 6;
  return cc;
}

Backbone tiny_backbone(const CorpusConfig& cc, const std::vector<std::string>& labels) {
  BackboneConfig cfg;
  cfg.vocab_size = cc.vocab_size;
  cfg.d_model = 16;
  cfg.n_encoder_layers = 1;
  cfg.n_decoder_layers = 2;
  cfg.n_heads = 2;
  cfg.n_mel_bins = cc.n_mel_bins;
  cfg.n_speakers = cc.n_speakers;
  cfg.variance_hidden = 8;
  cfg.ff_mult = 2;
  Rng rng(4);
  return Backbone::build(cfg, rng, labels);
}

MelFile to_mel(const Utterance& u, std::size_t bins) {
  return MelFile{u.n_frames, bins, u.mel};
}

}  // namespace

TEST_CASE("cosine similarity values") {
  std::vector<float> a = {1, 2, 3};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  std::vector<float> ex = {1, 0}, ey = {0, 1};
  CHECK(cosine_similarity(ex, ey) == doctest::Approx(0.0));
  std::vector<float> diag = {1, 1};
  CHECK(cosine_similarity(diag, ex) == doctest::Approx(0.70711).epsilon(1e-4));
  std::vector<float> zero = {0, 0};
  CHECK_THROWS_AS(cosine_similarity(ex, zero), MetricError);
  std::vector<float> shorter = {1};
  CHECK_THROWS_AS(cosine_similarity(ex, shorter), MetricError);

  // scale invariance: sim(a, c*b) == sim(a, b) for c > 0
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<float> u(8), v(8), v2(8);
    float c = rng.uniform_f(0.1f, 10.0f);
    for (int j = 0; j < 8; ++j) {
      u[j] = rng.uniform_f(-1, 1);
      v[j] = rng.uniform_f(-1, 1);
      v2[j] = c * v[j];
    }
    CHECK(std::fabs(cosine_similarity(u, v) - cosine_similarity(u, v2)) < 1e-6);
  }
}

TEST_CASE("speaker similarity through the encoder") {
  CorpusConfig cc = tiny_cc();
  Corpus corpus = generate_corpus(cc);
  SpeakerEncoderResult enc = train_speaker_encoder(corpus, 4, 300, 8, 1e-2, 3);

  auto mels_of = [&](const Dataset& ds, const std::string& label, std::size_t limit) {
    std::vector<MelFile> out;
    for (const auto& u : ds)
      if (u.speaker == label && out.size() < limit) out.push_back(to_mel(u, cc.n_mel_bins));
    return out;
  };
  auto tgt0 = mels_of(corpus.target_val, "tgt00", 4);
  auto tgt0_refs = mels_of(corpus.target_train, "tgt00", 4);
  auto tgt1_refs = mels_of(corpus.target_train, "tgt01", 4);
  REQUIRE(!tgt0.empty());

  // same speaker scores at least as high as a cross-speaker control
  double same = speaker_similarity(enc.encoder, tgt0, tgt0_refs);
  double cross = speaker_similarity(enc.encoder, tgt0, tgt1_refs);
  CHECK(same > cross);

  // single pair equals plain cosine similarity of the embeddings
  Tensor ea = enc.encoder.embed(tgt0[0].data, tgt0[0].n_frames);
  Tensor eb = enc.encoder.embed(tgt0_refs[0].data, tgt0_refs[0].n_frames);
  double direct = cosine_similarity(ea.data(), eb.data());
  double via = speaker_similarity(enc.encoder, {tgt0[0]}, {tgt0_refs[0]});
  CHECK(via == doctest::Approx(direct));

  CHECK_THROWS_AS(speaker_similarity(enc.encoder, {}, tgt0_refs), MetricError);
}

TEST_CASE("backbone immutability verdicts per variant") {
  CorpusConfig cc = tiny_cc();
  Corpus corpus = generate_corpus(cc);
  Backbone bb = tiny_backbone(cc, corpus.backbone_speakers);
  TrainConfig tcfg;
  tcfg.steps = 15;
  tcfg.batch_size = 4;
  tcfg.eval_every = 5;
  pretrain_backbone(bb, corpus, tcfg);
  ParamStore reference = load_checkpoint([&] {
    save_checkpoint(bb.params, "/tmp/alba_eval_ref.alb");
    return std::string("/tmp/alba_eval_ref.alb");
  }());

  std::vector<std::vector<std::uint32_t>> probes = {{1, 2, 3}, {4, 5}, {6, 7, 8, 9}, {1}, {10, 11}};

  SUBCASE("after adapter training: intact") {
    adapt_speaker(bb, corpus, "tgt00", 6, 2, false, 1, 0.1, tcfg);
    ImmutabilityReport rep = verify_backbone_immutability(bb, reference, probes);
    CHECK(rep.ok);
    CHECK(rep.diffs.empty());
  }

  SUBCASE("after embedding-only: intact") {
    finetune_embedding_only(bb, corpus, "tgt00", 6, tcfg);
    CHECK(verify_backbone_immutability(bb, reference, probes).ok);
  }

  SUBCASE("after full fine-tuning: mutated, diffs listed") {
    TrainConfig ft = tcfg;
    ft.lr.constant = 1e-3;
    finetune_full(bb, corpus, "tgt00", 6, ft);
    ImmutabilityReport rep = verify_backbone_immutability(bb, reference, probes);
    CHECK_FALSE(rep.ok);
    CHECK(!rep.diffs.empty());
  }
}

TEST_CASE("report formatting") {
  EvalRun a{"adapters", "tgt00", 20, 0.123456, 0.87654, 491, 0.3956, true, 42};
  EvalRun b{"adapters", "tgt01", 20, 0.2, 0.8, 491, 0.3956, true, 42};
  EvalRun c{"finetune_full", "tgt00", 20, 0.15, 0.85, 124083, 100.0, false, 42};

  CHECK_THROWS_AS(make_report_csv({}), DataError);
  EvalRun other_seed = b;
  other_seed.corpus_seed = 43;
  CHECK_THROWS_AS(make_report_csv({a, other_seed}), DataError);

  std::string csv = make_report_csv({c, b, a});  // sorted on output
  std::string expected_header = "variant,speaker,knob,mel_loss,cos_sim,params,params_pct,backbone_intact";
  CHECK(csv.substr(0, expected_header.size()) == expected_header);
  auto first_row = csv.find('\n') + 1;
  CHECK(csv.substr(first_row, 8) == "adapters");
  CHECK(csv.find("0.1235") != std::string::npos);  // 4 significant digits
  CHECK(csv.find("finetune_full,tgt00") != std::string::npos);

  // regeneration is byte-identical
  CHECK(make_report_csv({c, b, a}) == make_report_csv({a, b, c}));

  std::string table = make_report_table({a, b, c});
  CHECK(table.find("variant") != std::string::npos);
  CHECK(table.find("adapters") != std::string::npos);

  // one run -> header + one row
  std::string single = make_report_csv({a});
  CHECK(std::count(single.begin(), single.end(), '\n') == 2);

  EvalRun rt = eval_run_from_line(eval_run_to_line(a));
  CHECK(rt.variant == a.variant);
  CHECK(rt.speaker == a.speaker);
  CHECK(rt.knob == a.knob);
  CHECK(rt.mel_loss == doctest::Approx(a.mel_loss));
  CHECK(rt.backbone_intact == a.backbone_intact);
  CHECK(rt.corpus_seed == a.corpus_seed);
}
