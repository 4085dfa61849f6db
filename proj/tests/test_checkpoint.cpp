#include <cstring>
#include <filesystem>

#include "alba/checkpoint.hpp"
#include "doctest.h"

using namespace alba;

namespace {

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "alba_ckpt_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

ParamStore sample_store() {
  ParamStore ps;
  Rng rng(17);
  ps.add("decoder.block0.w", Tensor::uniform({4, 3}, rng, -1, 1));
  ps.add("encoder.emb", Tensor::uniform({5, 2}, rng, -1, 1), false);
  ps.add("mel_proj.b", Tensor::uniform({7}, rng, -1, 1));
  return ps;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  ParamStore ps = sample_store();
  std::string path = tmp_path("round.alb");
  save_checkpoint(ps, path);
  ParamStore loaded = load_checkpoint(path);
  CHECK(loaded.size() == ps.size());
  for (const auto& [name, e] : ps) {
    REQUIRE(loaded.contains(name));
    const auto& t = loaded.get(name);
    CHECK(t.shape() == e.tensor.shape());
    CHECK(loaded.trainable(name) == e.trainable);
    CHECK(std::memcmp(t.data().data(), e.tensor.data().data(), t.numel() * sizeof(float)) == 0);
  }
  // saving the loaded store reproduces the file byte-for-byte
  std::string path2 = tmp_path("round2.alb");
  save_checkpoint(loaded, path2);
  CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("truncated file raises checksum error") {
  ParamStore ps = sample_store();
  std::string path = tmp_path("trunc.alb");
  save_checkpoint(ps, path);
  auto bytes = read_file_bytes(path);
  bytes.resize(bytes.size() - 7);
  std::string cut = tmp_path("trunc_cut.alb");
  write_file_bytes(cut, bytes);
  CHECK_THROWS_AS(load_checkpoint(cut), ChecksumError);
}

TEST_CASE("flipped byte raises checksum error") {
  ParamStore ps = sample_store();
  std::string path = tmp_path("flip.alb");
  save_checkpoint(ps, path);
  auto bytes = read_file_bytes(path);
  bytes[bytes.size() / 2] ^= 0x40;
  write_file_bytes(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), ChecksumError);
}

TEST_CASE("wrong magic raises bad-magic error") {
  std::string path = tmp_path("magic.alb");
  ByteWriter w;
  w.raw("NOPE", 4);
  w.u32(1);
  w.u32(0);
  write_container(path, w);
  CHECK_THROWS_AS(load_checkpoint(path), BadMagicError);
}

TEST_CASE("wrong version raises version error") {
  std::string path = tmp_path("version.alb");
  ByteWriter w;
  w.raw("ALB1", 4);
  w.u32(99);
  w.u32(0);
  write_container(path, w);
  CHECK_THROWS_AS(load_checkpoint(path), VersionError);
}

TEST_CASE("name-set mismatch lists missing and extra names") {
  ParamStore ps = sample_store();
  std::string path = tmp_path("names.alb");
  save_checkpoint(ps, path);

  ParamStore other;
  Rng rng(3);
  other.add("decoder.block0.w", Tensor::uniform({4, 3}, rng, -1, 1));
  other.add("encoder.emb", Tensor::uniform({5, 2}, rng, -1, 1));
  other.add("variance.dur.w", Tensor::uniform({2}, rng, -1, 1));
  try {
    load_checkpoint_into(other, path);
    FAIL("expected NameSetError");
  } catch (const NameSetError& e) {
    std::string msg = e.what();
    CHECK(msg.find("variance.dur.w") != std::string::npos);  // missing in file
    CHECK(msg.find("mel_proj.b") != std::string::npos);      // extra in file
  }
}

TEST_CASE("load_checkpoint_into copies values and flags") {
  ParamStore ps = sample_store();
  std::string path = tmp_path("into.alb");
  save_checkpoint(ps, path);
  ParamStore dst;
  dst.add("decoder.block0.w", Tensor::zeros({4, 3}));
  dst.add("encoder.emb", Tensor::zeros({5, 2}));
  dst.add("mel_proj.b", Tensor::zeros({7}));
  load_checkpoint_into(dst, path);
  CHECK(std::memcmp(dst.get("mel_proj.b").data().data(), ps.get("mel_proj.b").data().data(),
                    7 * sizeof(float)) == 0);
  CHECK_FALSE(dst.trainable("encoder.emb"));
}

TEST_CASE("store hashes detect byte changes") {
  ParamStore ps = sample_store();
  std::uint64_t h0 = store_hash(ps);
  ps.get("mel_proj.b").data()[0] += 1e-3f;
  CHECK(store_hash(ps) != h0);
  std::uint64_t hf = store_hash_filtered(ps, [](const std::string& n) { return n.rfind("encoder.", 0) == 0; });
  ps.get("decoder.block0.w").data()[0] = 9.0f;
  CHECK(store_hash_filtered(ps, [](const std::string& n) { return n.rfind("encoder.", 0) == 0; }) == hf);
}
