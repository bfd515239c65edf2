#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "noie/beam.hpp"
#include "noie/checkpoint.hpp"
#include "noie/model.hpp"
#include "test_util.hpp"

using namespace noie;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "noie_ckpt_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

Vocabulary small_vocab() {
  return Vocabulary::build(
      std::vector<std::vector<std::string>>{{"red", "green", "blue", "cyan"}}, 20);
}

template <class S>
ModelParams<S> small_model(const Vocabulary& vocab, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.hidden_dim = 5;
  cfg.embed_dim = 4;
  cfg.num_layers = 2;
  cfg.bidirectional_encoder = true;
  cfg.vocab_size = int(vocab.size());
  cfg.dropout = 0.1;
  ModelParams<S> params(cfg);
  Rng rng(seed);
  params.init_uniform(rng, 0.4);
  return params;
}

void corrupt_byte(const std::string& path, std::size_t back_offset) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(f);
  f.seekg(0, std::ios::end);
  auto size = static_cast<std::size_t>(f.tellg());
  REQUIRE(size > back_offset);
  f.seekp(static_cast<std::streamoff>(size - back_offset));
  char byte = 0;
  f.seekg(static_cast<std::streamoff>(size - back_offset));
  f.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x40);
  f.seekp(static_cast<std::streamoff>(size - back_offset));
  f.write(&byte, 1);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<double>(vocab, 42);
  TrainConfig tcfg;
  tcfg.seed = 77;
  tcfg.epochs = 13;

  std::string path = temp_path("rt.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 7, 0xABCDEF0123456789ull);

  Vocabulary loaded_vocab;
  CheckpointMeta meta;
  auto loaded = load_checkpoint<double>(path, &loaded_vocab, &meta);

  CHECK(meta.epoch == 7);
  CHECK(meta.rng_state == 0xABCDEF0123456789ull);
  CHECK(meta.precision == 64);
  CHECK(meta.train.seed == 77);
  CHECK(meta.train.epochs == 13);
  CHECK(meta.model.hidden_dim == 5);
  REQUIRE(loaded_vocab.size() == vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i)
    CHECK(loaded_vocab.token(int(i)) == vocab.token(int(i)));

  auto orig = params.all_params();
  auto got = loaded.all_params();
  REQUIRE(orig.size() == got.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i]->name == got[i]->name);
    REQUIRE(orig[i]->value.size() == got[i]->value.size());
    CHECK(std::memcmp(orig[i]->value.data(), got[i]->value.data(),
                      sizeof(double) * std::size_t(orig[i]->value.size())) == 0);
  }
}

TEST_CASE("checkpoint round trip in 32-bit") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<float>(vocab, 43);
  TrainConfig tcfg;
  tcfg.precision = 32;
  std::string path = temp_path("rt32.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 1, 5);
  CHECK(peek_checkpoint(path).precision == 32);
  auto loaded = load_checkpoint<float>(path);
  auto orig = params.all_params();
  auto got = loaded.all_params();
  for (std::size_t i = 0; i < orig.size(); ++i)
    CHECK(std::memcmp(orig[i]->value.data(), got[i]->value.data(),
                      sizeof(float) * std::size_t(orig[i]->value.size())) == 0);
}

TEST_CASE("checkpoint refuses a precision mismatch") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<double>(vocab, 44);
  TrainConfig tcfg;
  std::string path = temp_path("prec.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 1, 5);
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("64-bit"),
                       CheckpointError);
}

TEST_CASE("corrupted parameter byte fails the checksum") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<double>(vocab, 45);
  TrainConfig tcfg;
  std::string path = temp_path("corrupt.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 1, 5);
  corrupt_byte(path, 24);  // inside the last parameter block's payload
  CHECK_THROWS_WITH_AS(load_checkpoint<double>(path), doctest::Contains("checksum"),
                       CheckpointError);
}

TEST_CASE("unknown version and bad magic are refused") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<double>(vocab, 46);
  TrainConfig tcfg;
  std::string path = temp_path("version.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 1, 5);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    std::uint32_t v = 999;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  CHECK_THROWS_WITH_AS(peek_checkpoint(path), doctest::Contains("version"),
                       CheckpointError);

  std::string garbage = temp_path("garbage.ckpt");
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(peek_checkpoint(garbage), CheckpointError);
}

TEST_CASE("truncated checkpoint is refused") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<double>(vocab, 47);
  TrainConfig tcfg;
  std::string path = temp_path("trunc.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 1, 5);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 200);
  CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);
}

TEST_CASE("a loaded model decodes identically") {
  Vocabulary vocab = small_vocab();
  auto params = small_model<double>(vocab, 48);
  TrainConfig tcfg;
  std::string path = temp_path("decode.ckpt");
  save_checkpoint(path, params, vocab, tcfg, 1, 5);
  auto loaded = load_checkpoint<double>(path);

  auto src = SourceEncoding::from_tokens({"red", "mystery", "blue"}, vocab);
  auto enc_a = encode(params, src.embed_ids);
  auto enc_b = encode(loaded, src.embed_ids);
  auto ids_a = greedy_decode(params, src, enc_a, 20);
  auto ids_b = greedy_decode(loaded, src, enc_b, 20);
  CHECK(ids_a == ids_b);
}
