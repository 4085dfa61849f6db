#include <cstring>
#include <filesystem>

#include "alba/adapters.hpp"
#include "alba/backbone.hpp"
#include "alba/gradcheck.hpp"
#include "alba/hashio.hpp"
#include "doctest.h"

using namespace alba;

namespace {
std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "alba_pack_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}
}  // namespace

TEST_CASE("fresh adapter is an exact identity in infer mode") {
  Rng rng(3);
  auto a = init_adapter<float>(16, 4, rng);
  Rng drop(0);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor h = Tensor::uniform({5, 16}, rng, -3, 3);
    Tensor out = a.forward(h, Mode::infer, drop);
    CHECK(std::memcmp(out.data().data(), h.data().data(), h.numel() * sizeof(float)) == 0);
  }
}

TEST_CASE("hand-computed adapter forward") {
  Rng rng(1);
  auto a = init_adapter<float>(2, 1, rng, /*dropout_rate=*/0.0);
  a.ln_eps = 1e-9f;
  a.w_down.data()[0] = 1.0f;
  a.w_down.data()[1] = 0.0f;
  a.w_up.data()[0] = 2.0f;
  a.w_up.data()[1] = 3.0f;
  Rng drop(0);

  // bottleneck sees LN(1,-1) = (1,-1) -> pre-activation 1 -> ReLU 1 -> (2,3)
  Tensor h = Tensor::from({1, 2}, {1, -1});
  Tensor out = a.forward(h, Mode::infer, drop);
  CHECK(out.data()[0] == doctest::Approx(3.0).epsilon(1e-4));
  CHECK(out.data()[1] == doctest::Approx(2.0).epsilon(1e-4));

  // mirrored input closes the ReLU gate: identity
  Tensor h2 = Tensor::from({1, 2}, {-1, 1});
  Tensor out2 = a.forward(h2, Mode::infer, drop);
  CHECK(out2.data()[0] == h2.data()[0]);
  CHECK(out2.data()[1] == h2.data()[1]);
}

TEST_CASE("adapter parameter counting") {
  Rng rng(5);
  auto big = init_adapter<float>(512, 16, rng);
  CHECK(big.param_count() == 17936);

  auto c1 = count_adapter_params(512, 16, 6, 89e6);
  CHECK(c1.count == 107616);
  CHECK(std::round(c1.percent * 100.0) / 100.0 == doctest::Approx(0.12));
  auto c2 = count_adapter_params(512, 128, 6, 89e6);
  CHECK(c2.count == 796416);
  CHECK(std::round(c2.percent * 100.0) / 100.0 == doctest::Approx(0.89));

  // the d=4, r=2 example against a brute-force enumeration oracle
  ParamStore ps;
  auto small = make_adapter(ps, "adapter.x", 4, 2, rng, 0.1);
  std::size_t enumerated = 0;
  for (const auto& [name, e] : ps) enumerated += e.tensor.numel();
  CHECK(enumerated == 30);
  CHECK(count_adapter_params(4, 2, 1, 1e6).count == 30);

  // formula equals enumeration for 50 random (d, r, n)
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t d = 1 + rng.below(40);
    std::size_t r = 1 + rng.below(d);
    std::size_t n = 1 + rng.below(8);
    ParamStore scratch;
    std::size_t total = 0;
    for (std::size_t s = 0; s < n; ++s)
      make_adapter(scratch, "adapter.s" + std::to_string(s), d, r, rng, 0.1);
    for (const auto& [name, e] : scratch) total += e.tensor.numel();
    CHECK(count_adapter_params(d, r, n, 1e6).count == total);
  }

  CHECK_THROWS_AS(init_adapter<float>(4, 5, rng), ConfigError);
  CHECK_THROWS_AS(init_adapter<float>(4, 0, rng), ConfigError);
  CHECK_THROWS_AS(count_adapter_params(0, 1, 1, 1.0), ConfigError);
}

TEST_CASE("same seed gives identical down projections") {
  Rng a(77), b(77);
  auto a1 = init_adapter<float>(8, 2, a);
  auto a2 = init_adapter<float>(8, 2, b);
  CHECK(std::memcmp(a1.w_down.data().data(), a2.w_down.data().data(), 16 * sizeof(float)) == 0);
}

TEST_CASE("adapter gradient check") {
  using D = double;
  Rng rng(9);
  auto a = init_adapter<D>(6, 2, rng, 0.0);
  // give the up projection real values so gradients flow everywhere
  for (auto& v : a.w_up.data()) v = rng.uniform(-0.5, 0.5);
  for (auto& v : a.b_up.data()) v = rng.uniform(-0.1, 0.1);
  auto x = Ten<D>::uniform({3, 6}, rng, -1.5, 1.5);
  Rng wr(31);
  auto w = Ten<D>::uniform({3, 6}, wr, 0.2, 1.0);
  auto f = [&a, w](const std::vector<Ten<D>>& in) {
    Rng drop(0);
    ResidualAdapterT<D> local = a;
    local.ln_gain = in[1];
    local.w_down = in[2];
    local.w_up = in[3];
    local.b_up = in[4];
    return sum_all(mul(w, local.forward(in[0], Mode::infer, drop)));
  };
  double err = grad_check<D>(f, {x, a.ln_gain, a.w_down, a.w_up, a.b_up}, 1e-3);
  CHECK(err < 1e-3);  // contract bound
  CHECK(err < 1e-6);  // double-precision bound
}

TEST_CASE("site enumeration for adapter insertion") {
  BackboneConfig cfg;  // desk defaults: 3 decoder blocks
  CHECK(adapter_sites(cfg, false).size() == 3);
  CHECK(adapter_sites(cfg, true).size() == 9);  // + 3 heads x 2 sublayers
  cfg.n_decoder_layers = 6;
  auto sites = adapter_sites(cfg, false);
  CHECK(sites.size() == 6);
  CHECK(sites.front() == "decoder_block0");
  CHECK(sites.back() == "decoder_block5");
  auto widths = adapter_site_widths(cfg, true);
  CHECK(widths.at("decoder_block0") == cfg.d_model);
  CHECK(widths.at("variance_f0_sub1") == cfg.variance_hidden);
}

TEST_CASE("adapter pack round trip and compatibility") {
  BackboneConfig cfg;
  Rng rng(11);
  std::vector<float> spk(cfg.d_spk(), 0.25f);
  AdapterPack pack = make_adapter_pack("tgt00", cfg.fingerprint(), adapter_sites(cfg, false),
                                       adapter_site_widths(cfg, false), 4, 2, spk, rng, 0.1);
  // give it non-trivial bytes
  for (auto& [name, e] : pack.params)
    for (auto& v : e.tensor.data()) v += 0.001f * static_cast<float>(rng.normal());

  std::string path = tmp_path("tgt00.apk");
  save_pack(pack, path);
  AdapterPack loaded = load_pack(path);
  CHECK(loaded.speaker_label == "tgt00");
  CHECK(loaded.fingerprint == cfg.fingerprint());
  CHECK(loaded.sites == pack.sites);
  REQUIRE(loaded.params.size() == pack.params.size());
  for (const auto& [name, e] : pack.params) {
    const auto& t = loaded.params.get(name);
    CHECK(std::memcmp(t.data().data(), e.tensor.data().data(), t.numel() * sizeof(float)) == 0);
  }
  CHECK(loaded.adapters.size() == 3);
  CHECK(loaded.adapters.at("decoder_block0").d == cfg.d_model);
  CHECK(loaded.adapters.at("decoder_block0").r == 4);

  // desk-scale pack stays small on disk
  CHECK(std::filesystem::file_size(path) < 8 * 1024);

  // corrupt the container
  auto bytes = read_file_bytes(path);
  bytes[bytes.size() / 3] ^= 0x10;
  std::string bad = tmp_path("bad.apk");
  write_file_bytes(bad, bytes);
  CHECK_THROWS_AS(load_pack(bad), ChecksumError);

  ByteWriter w;
  w.raw("ALB1", 4);
  std::string wrong = tmp_path("wrong.apk");
  write_container(wrong, w);
  CHECK_THROWS_AS(load_pack(wrong), BadMagicError);
}
