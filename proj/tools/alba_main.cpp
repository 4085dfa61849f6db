// alba — a desk-scale lab for parameter-efficient speaker adaptation with
// residual adapters: synthetic corpus, backbone pretraining, adaptation and
// baselines, objective evaluation, and a multi-tenant serving registry.

#include <cstdio>
#include <filesystem>
#include <future>

#include "CLI11.hpp"
#include "alba/checkpoint.hpp"
#include "alba/config.hpp"
#include "alba/evaluation.hpp"
#include "alba/melspec.hpp"
#include "alba/serving.hpp"
#include "alba/synthdata.hpp"
#include "alba/training.hpp"

namespace {

using namespace alba;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::uint16_t port = 7070;
};

void apply_overrides(KvConfig& cfg, const CommonArgs& args) {
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& kv : args.sets) cfg.set_kv(kv);
  if (args.seed_given) {
    if (cfg.has("seed")) cfg.set("seed", std::to_string(args.seed));
    if (cfg.has("corpus_seed")) cfg.set("corpus_seed", std::to_string(args.seed));
  }
}

void write_snapshot(const KvConfig& cfg, const CommonArgs& args, const std::string& cmd) {
  std::filesystem::create_directories(args.out);
  write_file_text(args.out + "/" + cmd + ".effective.cfg", cfg.snapshot());
}

// ---------------------------------------------------------------------------
// per-subcommand schemas

void declare_corpus_keys(KvConfig& c) {
  c.declare("corpus_seed", "42", "corpus generator seed");
  c.declare("vocab_size", "40", "token vocabulary size");
  c.declare("n_mel_bins", "16", "mel bins per frame");
  c.declare("n_speakers", "8", "backbone speakers");
  c.declare("n_target_speakers", "2", "held-out target speakers");
  c.declare("utts_per_speaker", "100", "utterances per speaker");
  c.declare("len_min", "5", "min tokens per utterance");
  c.declare("len_max", "20", "max tokens per utterance");
}

void declare_model_keys(KvConfig& c) {
  c.declare("d_model", "32", "encoder/decoder width");
  c.declare("n_heads", "4", "attention heads");
  c.declare("n_encoder_layers", "2", "encoder layers");
  c.declare("n_decoder_layers", "3", "decoder Conformer blocks");
  c.declare("conv_kernel", "3", "conv kernel size (odd)");
  c.declare("variance_hidden", "32", "variance head width");
  c.declare("ff_mult", "4", "feed-forward expansion");
  c.declare("upsampler_sigma", "1.0", "Gaussian upsampler sigma (frames)");
  c.declare("frozen_encoder_layers", "0", "lowest encoder layers frozen in pretraining");
}

void declare_train_keys(KvConfig& c, const char* steps, const char* batch) {
  c.declare("steps", steps, "optimizer steps");
  c.declare("batch_size", batch, "utterances per step");
  c.declare("lr_init", "0.001", "cosine schedule initial rate");
  c.declare("lr_final", "0.00001", "cosine schedule final rate");
  c.declare("decay_steps", "0", "cosine decay steps (0 = 80% of steps)");
  c.declare("eval_every", "100", "logging interval");
  c.declare("grad_clip", "1.0", "global gradient-norm clip");
  c.declare("seed", "42", "training seed");
}

CorpusConfig corpus_config_from(const KvConfig& c) {
  CorpusConfig cc;
  cc.corpus_seed = c.get_u64("corpus_seed");
  cc.vocab_size = c.get_size("vocab_size");
  cc.n_mel_bins = c.get_size("n_mel_bins");
  cc.n_speakers = c.get_size("n_speakers");
  cc.n_target_speakers = c.get_size("n_target_speakers");
  cc.utts_per_speaker = c.get_size("utts_per_speaker");
  cc.len_min = c.get_size("len_min");
  cc.len_max = c.get_size("len_max");
  return cc;
}

BackboneConfig backbone_config_from(const KvConfig& c, const Corpus& corpus) {
  BackboneConfig cfg;
  cfg.vocab_size = corpus.cfg.vocab_size;
  cfg.n_mel_bins = corpus.cfg.n_mel_bins;
  cfg.n_speakers = corpus.backbone_speakers.size();
  cfg.d_model = c.get_size("d_model");
  cfg.n_heads = c.get_size("n_heads");
  cfg.n_encoder_layers = c.get_size("n_encoder_layers");
  cfg.n_decoder_layers = c.get_size("n_decoder_layers");
  cfg.conv_kernel = c.get_size("conv_kernel");
  cfg.variance_hidden = c.get_size("variance_hidden");
  cfg.ff_mult = c.get_size("ff_mult");
  cfg.upsampler_sigma = c.get_double("upsampler_sigma");
  cfg.frozen_encoder_layers = c.get_size("frozen_encoder_layers");
  return cfg;
}

TrainConfig train_config_from(const KvConfig& c) {
  TrainConfig t;
  t.steps = c.get_u64("steps");
  t.batch_size = c.get_size("batch_size");
  t.lr.cosine = true;
  t.lr.lr_init = c.get_double("lr_init");
  t.lr.lr_final = c.get_double("lr_final");
  t.lr.decay_steps = c.get_u64("decay_steps");
  t.eval_every = c.get_u64("eval_every");
  t.grad_clip = c.get_double("grad_clip");
  t.seed = c.get_u64("seed");
  if (c.has("mix")) {
    t.mix_enabled = c.get_bool("mix");
    t.mix_backbone = static_cast<std::uint32_t>(c.get_u64("mix_backbone"));
    t.mix_target = static_cast<std::uint32_t>(c.get_u64("mix_target"));
  }
  return t;
}

void declare_mix_keys(KvConfig& c) {
  c.declare("mix", "false", "mix backbone training data");
  c.declare("mix_backbone", "99", "backbone share of the mix ratio");
  c.declare("mix_target", "1", "target share of the mix ratio");
}

Dataset filter_speaker(const Dataset& ds, const std::string& label) {
  Dataset out;
  for (const auto& u : ds)
    if (u.speaker == label) out.push_back(u);
  return out;
}

// ---------------------------------------------------------------------------
// subcommand bodies

int run_gen_data(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = generate_corpus(corpus_config_from(cfg));
  write_corpus(corpus, args.out);
  write_snapshot(cfg, args, "gen-data");
  std::printf("corpus written to %s (%zu backbone + %zu target speakers)\n", args.out.c_str(),
              corpus.backbone_speakers.size(), corpus.target_speakers.size());
  return 0;
}

int run_pretrain(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = load_corpus(cfg.get("corpus"));
  Rng rng(cfg.get_u64("seed"));
  Backbone bb = Backbone::build(backbone_config_from(cfg, corpus), rng, corpus.backbone_speakers);
  TrainConfig tcfg = train_config_from(cfg);
  PretrainResult result = pretrain_backbone(bb, corpus, tcfg);
  std::filesystem::create_directories(args.out);
  save_backbone(bb, args.out + "/backbone.alb");
  write_file_text(args.out + "/pretrain.log", result.log.text());
  write_snapshot(cfg, args, "pretrain");
  std::printf("pretrain done: initial loss %.4g, final loss %.4g, checkpoint %s/backbone.alb\n",
              result.initial_loss, result.final_loss, args.out.c_str());
  return 0;
}

int run_adapt(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = load_corpus(cfg.get("corpus"));
  Backbone bb = load_backbone(cfg.get("backbone"));
  TrainConfig tcfg = train_config_from(cfg);
  std::string target = cfg.get("target");
  AdaptResult result = adapt_speaker(bb, corpus, target, cfg.get_size("target_utts"),
                                     cfg.get_size("r"), cfg.get_bool("variance_adapters"),
                                     cfg.get_size("r_variance"), cfg.get_double("adapter_dropout"),
                                     tcfg);
  std::filesystem::create_directories(args.out);
  std::string pack_path = args.out + "/" + target + ".apk";
  save_pack(result.pack, pack_path);
  write_file_text(args.out + "/adapt_" + target + ".log", result.log.text());
  write_snapshot(cfg, args, "adapt");
  std::printf("adapter pack written to %s (%zu trainable params)\n", pack_path.c_str(),
              result.pack.params.total_params());
  return 0;
}

int run_embed_only(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = load_corpus(cfg.get("corpus"));
  Backbone bb = load_backbone(cfg.get("backbone"));
  TrainConfig tcfg = train_config_from(cfg);
  std::string target = cfg.get("target");
  AdaptResult result = finetune_embedding_only(bb, corpus, target, cfg.get_size("target_utts"), tcfg);
  std::filesystem::create_directories(args.out);
  std::string pack_path = args.out + "/" + target + "_embed.apk";
  save_pack(result.pack, pack_path);
  write_file_text(args.out + "/embed_only_" + target + ".log", result.log.text());
  write_snapshot(cfg, args, "embed-only");
  std::printf("embedding-only pack written to %s\n", pack_path.c_str());
  return 0;
}

int run_finetune(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = load_corpus(cfg.get("corpus"));
  Backbone bb = load_backbone(cfg.get("backbone"));
  TrainConfig tcfg = train_config_from(cfg);
  tcfg.lr.constant = cfg.get_double("lr_constant");
  std::string target = cfg.get("target");
  FinetuneResult result = finetune_full(bb, corpus, target, cfg.get_size("target_utts"), tcfg);
  std::filesystem::create_directories(args.out);
  save_backbone(bb, args.out + "/finetuned.alb");
  std::string pack_path = args.out + "/" + target + "_spk.apk";
  save_pack(result.speaker_pack, pack_path);
  write_file_text(args.out + "/finetune_" + target + ".log", result.log.text());
  write_snapshot(cfg, args, "finetune");
  std::printf("finetuned model written to %s/finetuned.alb (speaker row in %s)\n", args.out.c_str(),
              pack_path.c_str());
  return 0;
}

int run_train_spkenc(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = load_corpus(cfg.get("corpus"));
  SpeakerEncoderResult result =
      train_speaker_encoder(corpus, cfg.get_size("d_embed"), cfg.get_u64("steps"),
                            cfg.get_size("batch_size"), cfg.get_double("lr"), cfg.get_u64("seed"));
  std::filesystem::create_directories(args.out);
  save_speaker_encoder(result.encoder, args.out + "/spkenc.alb");
  write_snapshot(cfg, args, "train-spkenc");
  std::printf("speaker encoder written to %s/spkenc.alb (train acc %.3f, val acc %.3f)\n",
              args.out.c_str(), result.train_accuracy, result.val_accuracy);
  return 0;
}

int run_synth(KvConfig& cfg, const CommonArgs& args) {
  Backbone bb = load_backbone(cfg.get("backbone"));
  std::vector<std::uint32_t> tokens = parse_u32_list(cfg.get("tokens"));
  Tensor mel;
  if (!cfg.get("pack").empty()) {
    AdapterPack pack = load_pack(cfg.get("pack"));
    if (pack.fingerprint != bb.cfg.fingerprint())
      throw CompatibilityError("pack was built for a different backbone config");
    mel = bb.synthesize(tokens, pack.speaker_vec, &pack.adapters);
  } else {
    mel = bb.synthesize(tokens, bb.speaker_vec_for(bb.speaker_index(cfg.get("speaker"))));
  }
  std::filesystem::create_directories(args.out);
  std::string mel_path = args.out + "/" + cfg.get("name") + ".mels";
  save_mels(mel_path, mel.dim(0), mel.dim(1), mel.data());
  if (cfg.get_bool("pgm")) {
    MelFile mf{mel.dim(0), mel.dim(1), {mel.data().begin(), mel.data().end()}};
    save_pgm(args.out + "/" + cfg.get("name") + ".pgm", mf);
  }
  write_snapshot(cfg, args, "synth");
  std::printf("spectrogram: %zu frames x %zu bins -> %s\n", mel.dim(0), mel.dim(1), mel_path.c_str());
  return 0;
}

int run_eval(KvConfig& cfg, const CommonArgs& args) {
  Corpus corpus = load_corpus(cfg.get("corpus"));
  ParamStore original = load_checkpoint(cfg.get("backbone"));
  std::string model_path = cfg.get("model").empty() ? cfg.get("backbone") : cfg.get("model");
  Backbone bb = load_backbone(model_path);
  Variant variant = parse_variant(cfg.get("variant"));
  std::string target = cfg.get("target");
  SpeakerEncoder spkenc = load_speaker_encoder(cfg.get("spkenc"));

  Tensor speaker_vec;
  const AdapterSet* adapters = nullptr;
  AdapterPack pack;
  std::size_t speaker_params = 0;

  Dataset target_train = filter_speaker(corpus.target_train, target);
  Dataset target_val = filter_speaker(corpus.target_val, target);
  if (target_val.empty()) throw DataError("no validation utterances for '" + target + "'");

  switch (variant) {
    case Variant::adapters:
    case Variant::finetune_embed_only: {
      pack = load_pack(cfg.get("pack"));
      if (pack.fingerprint != bb.cfg.fingerprint())
        throw CompatibilityError("pack was built for a different backbone config");
      speaker_vec = pack.speaker_vec;
      adapters = &pack.adapters;
      speaker_params = pack.total_param_count();
      break;
    }
    case Variant::finetune_full: {
      pack = load_pack(cfg.get("pack"));
      speaker_vec = pack.speaker_vec;
      speaker_params = bb.params.total_params();  // the full copy is the per-speaker cost
      break;
    }
    case Variant::zero_shot_dvector: {
      std::size_t m = cfg.get_size("zero_shot_refs");
      if (m == 0 || m > target_train.size())
        throw DataError("zero_shot_refs out of range for available target data");
      Rng rng(cfg.get_u64("seed"));
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < m; ++i) idx.push_back(rng.below(target_train.size()));
      speaker_vec = zero_shot_condition(spkenc, target_train, idx);
      speaker_params = 0;  // nothing trained per speaker
      break;
    }
  }

  EvalRun run;
  run.variant = variant_name(variant);
  run.speaker = target;
  run.knob = cfg.get_size("knob");
  run.corpus_seed = corpus.cfg.corpus_seed;
  run.mel_loss = eval_mel_loss(bb, target_val, speaker_vec, adapters);
  run.params = speaker_params;
  run.params_pct = 100.0 * static_cast<double>(speaker_params) /
                   static_cast<double>(bb.params.total_params());

  // synthesized val sentences vs held-out reference recordings
  std::vector<MelFile> synth, refs;
  for (const auto& u : target_val) {
    Tensor mel = bb.synthesize(u.tokens, speaker_vec, adapters);
    synth.push_back(MelFile{mel.dim(0), mel.dim(1), {mel.data().begin(), mel.data().end()}});
  }
  std::size_t n_refs = std::min<std::size_t>(cfg.get_size("reference_utts"), target_train.size());
  for (std::size_t i = 0; i < n_refs; ++i)
    refs.push_back(MelFile{target_train[i].n_frames, corpus.cfg.n_mel_bins, target_train[i].mel});
  run.cos_sim = speaker_similarity(spkenc, synth, refs);

  // immutability against the original backbone checkpoint
  Rng probe_rng(1234);
  std::vector<std::vector<std::uint32_t>> probes;
  for (int p = 0; p < 5; ++p) {
    std::vector<std::uint32_t> t;
    for (int j = 0; j < 6; ++j)
      t.push_back(static_cast<std::uint32_t>(probe_rng.below(bb.cfg.vocab_size)));
    probes.push_back(std::move(t));
  }
  run.backbone_intact = verify_backbone_immutability(bb, original, probes).ok;

  std::filesystem::create_directories(args.out);
  std::string row_path = args.out + "/eval_" + run.variant + "_" + target + "_" +
                         std::to_string(run.knob) + ".row";
  write_file_text(row_path, eval_run_to_line(run) + "\n");
  write_snapshot(cfg, args, "eval");
  std::printf("%s\n", eval_run_to_line(run).c_str());
  return 0;
}

int run_report(KvConfig& cfg, const CommonArgs& args) {
  std::vector<EvalRun> runs;
  std::string dir = cfg.get("rows_dir").empty() ? args.out : cfg.get("rows_dir");
  std::vector<std::string> row_files;
  if (!std::filesystem::is_directory(dir)) throw DataError("rows_dir is not a directory: " + dir);
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".row") row_files.push_back(entry.path().string());
  std::sort(row_files.begin(), row_files.end());
  for (const auto& f : row_files) {
    std::istringstream is(read_file_text(f));
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) runs.push_back(eval_run_from_line(line));
  }
  std::string csv = make_report_csv(runs);
  std::string table = make_report_table(runs);
  std::filesystem::create_directories(args.out);
  write_file_text(args.out + "/report.csv", csv);
  write_file_text(args.out + "/report.txt", table);
  write_snapshot(cfg, args, "report");
  std::printf("%s", table.c_str());
  return 0;
}

int run_params(KvConfig& cfg, const CommonArgs& args) {
  auto c = count_adapter_params(cfg.get_size("d"), cfg.get_size("r"), cfg.get_size("sites"),
                                cfg.get_double("backbone_total"));
  std::printf("count=%zu pct=%.2f\n", c.count, c.percent);
  if (cfg.get_bool("table")) {
    for (std::size_t r : {std::size_t(16), std::size_t(128)}) {
      auto row = count_adapter_params(512, r, 6, 89e6);
      std::printf("decoder_r=%zu params=%zu pct=%.2f%%\n", r, row.count, row.percent);
    }
  }
  write_snapshot(cfg, args, "params");
  return 0;
}

int run_serve(KvConfig& cfg, const CommonArgs& args) {
  auto bb = std::make_shared<Backbone>(load_backbone(cfg.get("backbone")));
  bb->freeze_all();
  Registry registry(bb, cfg.get_size("capacity"));
  Server server(registry, args.port);
  server.start();
  write_snapshot(cfg, args, "serve");
  std::printf("serving on 127.0.0.1:%u (capacity %zu); QUIT closes a connection, Ctrl-C stops\n",
              server.port(), registry.capacity());
  std::fflush(stdout);
  std::promise<void> forever;
  forever.get_future().wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alba: residual-adapter speaker adaptation lab"};
  app.require_subcommand(1);

  CommonArgs args;
  std::map<std::string, KvConfig> schemas;
  std::map<std::string, std::function<int(KvConfig&, const CommonArgs&)>> runners;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "key=value config file");
    sub->add_option("--set", args.sets, "override, repeatable: --set key=value");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
      args.seed_given = true;
    });
  };

  auto make_sub = [&](const std::string& name, const std::string& what,
                      std::function<void(KvConfig&)> declare,
                      std::function<int(KvConfig&, const CommonArgs&)> run) {
    KvConfig schema;
    declare(schema);
    CLI::App* sub = app.add_subcommand(name, what + "\nconfig keys (defaults):\n" + schema.help_text());
    add_common(sub);
    schemas.emplace(name, std::move(schema));
    runners.emplace(name, std::move(run));
    return sub;
  };

  make_sub("gen-data", "generate the synthetic multi-speaker corpus",
           [](KvConfig& c) { declare_corpus_keys(c); }, run_gen_data);

  make_sub("pretrain", "teacher-forced backbone pretraining",
           [](KvConfig& c) {
             c.declare("corpus", "out", "corpus directory");
             declare_model_keys(c);
             declare_train_keys(c, "3000", "16");
           },
           run_pretrain);

  make_sub("adapt", "residual-adapter speaker adaptation (the proposed method)",
           [](KvConfig& c) {
             c.declare("corpus", "out", "corpus directory");
             c.declare("backbone", "out/backbone.alb", "backbone checkpoint");
             c.declare("target", "tgt00", "held-out target speaker");
             c.declare("target_utts", "20", "few-shot target utterance budget");
             c.declare("r", "1", "decoder adapter bottleneck width");
             c.declare("variance_adapters", "false", "also insert adapters into variance heads");
             c.declare("r_variance", "1", "variance adapter bottleneck width");
             c.declare("adapter_dropout", "0.1", "dropout before the residual connection");
             declare_train_keys(c, "1500", "8");
             declare_mix_keys(c);
           },
           run_adapt);

  make_sub("embed-only", "speaker-embedding-only fine-tuning baseline",
           [](KvConfig& c) {
             c.declare("corpus", "out", "corpus directory");
             c.declare("backbone", "out/backbone.alb", "backbone checkpoint");
             c.declare("target", "tgt00", "held-out target speaker");
             c.declare("target_utts", "20", "few-shot target utterance budget");
             declare_train_keys(c, "1500", "8");
           },
           run_embed_only);

  make_sub("finetune", "full fine-tuning baseline (everything but the encoder)",
           [](KvConfig& c) {
             c.declare("corpus", "out", "corpus directory");
             c.declare("backbone", "out/backbone.alb", "backbone checkpoint");
             c.declare("target", "tgt00", "held-out target speaker");
             c.declare("target_utts", "20", "few-shot target utterance budget");
             c.declare("lr_constant", "0.0001", "constant rate for non-embedding trainables");
             declare_train_keys(c, "1500", "8");
             declare_mix_keys(c);
           },
           run_finetune);

  make_sub("train-spkenc", "speaker-classification encoder (d-vector stand-in)",
           [](KvConfig& c) {
             c.declare("corpus", "out", "corpus directory");
             c.declare("d_embed", "8", "embedding width (= backbone d_spk)");
             c.declare("steps", "2000", "optimizer steps");
             c.declare("batch_size", "16", "utterances per step");
             c.declare("lr", "0.01", "constant learning rate");
             c.declare("seed", "42", "training seed");
           },
           run_train_spkenc);

  make_sub("synth", "synthesize a spectrogram from token ids",
           [](KvConfig& c) {
             c.declare("backbone", "out/backbone.alb", "backbone checkpoint");
             c.declare("pack", "", "adapter pack (overrides speaker)");
             c.declare("speaker", "spk00", "backbone speaker label");
             c.declare("tokens", "1,2,3,4,5", "comma-separated token ids");
             c.declare("name", "synth", "output basename");
             c.declare("pgm", "true", "also write a PGM rendering");
           },
           run_synth);

  make_sub("eval", "objective metrics for one trained variant",
           [](KvConfig& c) {
             c.declare("corpus", "out", "corpus directory");
             c.declare("backbone", "out/backbone.alb", "original backbone checkpoint");
             c.declare("model", "", "model checkpoint if not the backbone (finetune)");
             c.declare("variant", "adapters", "adapters|finetune_full|finetune_embed_only|zero_shot_dvector");
             c.declare("pack", "", "adapter/speaker pack for pack-based variants");
             c.declare("spkenc", "out/spkenc.alb", "speaker encoder checkpoint");
             c.declare("target", "tgt00", "target speaker");
             c.declare("knob", "20", "target data budget used (reported)");
             c.declare("zero_shot_refs", "10", "reference utterances for zero-shot conditioning");
             c.declare("reference_utts", "10", "reference recordings for similarity");
             c.declare("seed", "42", "sampling seed");
           },
           run_eval);

  make_sub("report", "collect eval rows into the report table",
           [](KvConfig& c) { c.declare("rows_dir", "", "directory of .row files (default --out)"); },
           run_report);

  make_sub("params", "adapter parameter count and percentage",
           [](KvConfig& c) {
             c.declare("d", "512", "layer width");
             c.declare("r", "16", "bottleneck width");
             c.declare("sites", "6", "insertion sites");
             c.declare("backbone_total", "89000000", "backbone parameter count");
             c.declare("table", "false", "also print the size-ablation parameter table");
           },
           run_params);

  CLI::App* serve = make_sub("serve", "multi-tenant pack registry over TCP",
                             [](KvConfig& c) {
                               c.declare("backbone", "out/backbone.alb", "backbone checkpoint");
                               c.declare("capacity", "4", "max resident packs (LRU eviction)");
                             },
                             run_serve);
  serve->add_option("--port", args.port, "TCP port (0 = ephemeral)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string cmd;
  for (const auto& [name, fn] : runners)
    if (app.get_subcommand(name)->parsed()) cmd = name;

  try {
    KvConfig& cfg = schemas.at(cmd);
    apply_overrides(cfg, args);
    return runners.at(cmd)(cfg, args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return 4;
  } catch (const ServingError& e) {
    std::fprintf(stderr, "serving error: %s\n", e.what());
    return 5;
  } catch (const Error& e) {  // data, io, vocab, compatibility, metric, contract
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
