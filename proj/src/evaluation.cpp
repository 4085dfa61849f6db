#include "alba/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace alba {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty())
    throw MetricError("cosine_similarity: vectors of length " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw MetricError("cosine_similarity: zero-norm input");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double speaker_similarity(const SpeakerEncoder& encoder, const std::vector<MelFile>& synth,
                          const std::vector<MelFile>& references) {
  if (synth.empty() || references.empty())
    throw MetricError("speaker_similarity: empty synthesis or reference set");
  std::vector<std::vector<float>> se, re;
  for (const auto& m : synth) {
    Tensor e = encoder.embed(m.data, m.n_frames);
    se.emplace_back(e.data().begin(), e.data().end());
  }
  for (const auto& m : references) {
    Tensor e = encoder.embed(m.data, m.n_frames);
    re.emplace_back(e.data().begin(), e.data().end());
  }
  double total = 0;
  for (const auto& s : se)
    for (const auto& r : re) total += cosine_similarity(s, r);
  return total / (static_cast<double>(se.size()) * re.size());
}

ImmutabilityReport verify_backbone_immutability(Backbone& backbone, const ParamStore& reference,
                                                const std::vector<std::vector<std::uint32_t>>& probes) {
  ImmutabilityReport report;
  report.ok = true;

  std::vector<std::string> ref_names, cur_names;
  for (const auto& [name, e] : reference) ref_names.push_back(name);
  cur_names = backbone.params.names();
  if (ref_names != cur_names)
    throw NameSetError("verify_backbone_immutability: reference and backbone name sets differ");

  for (const auto& [name, e] : reference) {
    const Tensor& cur = backbone.params.get(name);
    if (cur.numel() != e.tensor.numel() ||
        std::memcmp(cur.data().data(), e.tensor.data().data(), cur.numel() * sizeof(float)) != 0) {
      report.ok = false;
      report.diffs.push_back(name);
    }
  }

  // probe synthesis for backbone speakers with and without an identity pack
  Rng rng(12345);
  AdapterPack fresh = insert_adapters(backbone, "__probe__", false, 2, 2,
                                      std::vector<float>(backbone.cfg.d_spk(), 0.0f), rng, 0.1);
  std::size_t n_rows = std::min<std::size_t>(5, backbone.cfg.n_speakers);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    Tensor spk = backbone.speaker_vec_for(p % n_rows);
    Tensor bare = backbone.synthesize(probes[p], spk);
    Tensor packed = backbone.synthesize(probes[p], spk, &fresh.adapters);
    if (bare.shape() != packed.shape() ||
        std::memcmp(bare.data().data(), packed.data().data(), bare.numel() * sizeof(float)) != 0) {
      report.ok = false;
      report.diffs.push_back("probe" + std::to_string(p) + ": synthesis differs with identity pack");
    }
  }
  return report;
}

namespace {

std::string g4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void sort_runs(std::vector<EvalRun>& runs) {
  std::sort(runs.begin(), runs.end(), [](const EvalRun& a, const EvalRun& b) {
    if (a.variant != b.variant) return a.variant < b.variant;
    if (a.speaker != b.speaker) return a.speaker < b.speaker;
    return a.knob < b.knob;
  });
}

void check_runs(const std::vector<EvalRun>& runs) {
  if (runs.empty()) throw DataError("report: no runs to report");
  for (const auto& r : runs)
    if (r.corpus_seed != runs.front().corpus_seed)
      throw DataError("report: runs evaluated on different corpus seeds");
}

}  // namespace

std::string make_report_csv(std::vector<EvalRun> runs) {
  check_runs(runs);
  sort_runs(runs);
  std::string out = "variant,speaker,knob,mel_loss,cos_sim,params,params_pct,backbone_intact\n";
  for (const auto& r : runs) {
    out += r.variant + "," + r.speaker + "," + std::to_string(r.knob) + "," + g4(r.mel_loss) + "," +
           g4(r.cos_sim) + "," + std::to_string(r.params) + "," + g4(r.params_pct) + "," +
           (r.backbone_intact ? "true" : "false") + "\n";
  }
  return out;
}

std::string make_report_table(std::vector<EvalRun> runs) {
  check_runs(runs);
  sort_runs(runs);
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"variant", "speaker", "knob", "mel_loss", "cos_sim", "params", "params_pct",
                  "backbone_intact"});
  for (const auto& r : runs)
    rows.push_back({r.variant, r.speaker, std::to_string(r.knob), g4(r.mel_loss), g4(r.cos_sim),
                    std::to_string(r.params), g4(r.params_pct), r.backbone_intact ? "true" : "false"});
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

std::string eval_run_to_line(const EvalRun& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.17g,%.17g,%zu,%.17g,%d,%llu", r.variant.c_str(),
                r.speaker.c_str(), r.knob, r.mel_loss, r.cos_sim, r.params, r.params_pct,
                r.backbone_intact ? 1 : 0, static_cast<unsigned long long>(r.corpus_seed));
  return buf;
}

EvalRun eval_run_from_line(const std::string& line) {
  EvalRun r;
  std::istringstream is(line);
  std::string field;
  auto next = [&]() {
    if (!std::getline(is, field, ',')) throw DataError("eval run line: missing fields: " + line);
    return field;
  };
  r.variant = next();
  r.speaker = next();
  r.knob = std::stoul(next());
  r.mel_loss = std::stod(next());
  r.cos_sim = std::stod(next());
  r.params = std::stoul(next());
  r.params_pct = std::stod(next());
  r.backbone_intact = std::stoi(next()) != 0;
  r.corpus_seed = std::stoull(next());
  return r;
}

}  // namespace alba
