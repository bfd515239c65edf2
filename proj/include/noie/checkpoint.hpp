#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "noie/model.hpp"
#include "noie/train_config.hpp"
#include "noie/types.hpp"
#include "noie/vocab.hpp"

// Checkpoint file layout (little-endian):
//   magic "NOIE", format version u32,
//   meta_len u64, meta (UTF-8 JSON: model/train configs, vocabulary,
//     epoch, rng state, float precision),
//   block count u32, then per named parameter:
//     name_len u32, name, rows u64, cols u64,
//     row-major raw values, crc32 of the value bytes.

namespace noie {

inline constexpr std::array<char, 4> kCheckpointMagic = {'N', 'O', 'I', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint32_t crc32(const unsigned char* data, std::size_t len,
                           std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

struct CheckpointMeta {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> vocab_tokens;
  int epoch = 0;
  std::uint64_t rng_state = 0;
  int precision = 64;
};

namespace detail {

inline nlohmann::json model_to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers},
          {"hidden_dim", c.hidden_dim},
          {"embed_dim", c.embed_dim},
          {"vocab_size", c.vocab_size},
          {"bidirectional_encoder", c.bidirectional_encoder},
          {"dropout", c.dropout},
          {"max_source_len", c.max_source_len}};
}

inline ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.bidirectional_encoder = j.at("bidirectional_encoder").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.max_source_len = j.at("max_source_len").get<int>();
  return c;
}

inline nlohmann::json train_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr0", c.lr0},
          {"decay", c.decay},
          {"decay_start_epoch", c.decay_start_epoch},
          {"dropout", c.dropout},
          {"batch_size", c.batch_size},
          {"partitions", c.partitions},
          {"seed", c.seed},
          {"grad_clip_norm", c.grad_clip_norm},
          {"precision", c.precision}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.lr0 = j.at("lr0").get<double>();
  c.decay = j.at("decay").get<double>();
  c.decay_start_epoch = j.at("decay_start_epoch").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.partitions = j.at("partitions").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.precision = j.at("precision").get<int>();
  return c;
}

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint while reading " + what);
  return v;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, ModelParams<S>& params,
                     const Vocabulary& vocab, const TrainConfig& tcfg, int epoch,
                     std::uint64_t rng_state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);

  nlohmann::json meta = {{"model", detail::model_to_json(params.cfg)},
                         {"train", detail::train_to_json(tcfg)},
                         {"vocab", vocab.tokens()},
                         {"epoch", epoch},
                         {"rng_state", rng_state},
                         {"precision", int(sizeof(S) * 8)}};
  const std::string meta_str = meta.dump();

  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(out, meta_str.size());
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  auto ps = params.all_params();
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ps.size()));
  std::vector<S> buf;
  for (auto* p : ps) {
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const auto rows = p->value.rows(), cols = p->value.cols();
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(rows));
    detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(cols));
    buf.resize(static_cast<std::size_t>(rows * cols));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) buf[k++] = p->value(r, c);
    const auto* bytes = reinterpret_cast<const unsigned char*>(buf.data());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(S)));
    detail::write_pod<std::uint32_t>(out, crc32(bytes, buf.size() * sizeof(S)));
  }
  if (!out) throw CheckpointError("write failed: " + path);
}

// Reads only the header; used to learn precision/config before picking a
// scalar type.
inline CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::array<char, 4> magic;
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic)
    throw CheckpointError(path + ": not a NOIE checkpoint");
  const auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError(path + ": unsupported checkpoint version " +
                          std::to_string(version));
  const auto meta_len = detail::read_pod<std::uint64_t>(in, "meta length");
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw CheckpointError(path + ": truncated metadata");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad metadata: " + e.what());
  }
  CheckpointMeta meta;
  try {
    meta.model = detail::model_from_json(j.at("model"));
    meta.train = detail::train_from_json(j.at("train"));
    meta.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
    meta.epoch = j.at("epoch").get<int>();
    meta.rng_state = j.at("rng_state").get<std::uint64_t>();
    meta.precision = j.at("precision").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad metadata: " + e.what());
  }
  return meta;
}

template <class S>
ModelParams<S> load_checkpoint(const std::string& path, Vocabulary* vocab_out = nullptr,
                               CheckpointMeta* meta_out = nullptr) {
  CheckpointMeta meta = peek_checkpoint(path);
  if (meta.precision != int(sizeof(S) * 8))
    throw CheckpointError(path + ": stores " + std::to_string(meta.precision) +
                          "-bit floats, loader instantiated for " +
                          std::to_string(sizeof(S) * 8) + "-bit");

  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(4 + sizeof(std::uint32_t)));
  const auto meta_len = detail::read_pod<std::uint64_t>(in, "meta length");
  in.seekg(static_cast<std::streamoff>(meta_len), std::ios::cur);

  ModelParams<S> params(meta.model);
  auto ps = params.all_params();
  const auto n_blocks = detail::read_pod<std::uint32_t>(in, "block count");
  if (n_blocks != ps.size())
    throw CheckpointError(path + ": has " + std::to_string(n_blocks) +
                          " parameter blocks, model needs " + std::to_string(ps.size()));
  std::vector<S> buf;
  for (auto* p : ps) {
    const auto name_len = detail::read_pod<std::uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointError(path + ": truncated block name");
    if (name != p->name)
      throw CheckpointError(path + ": block '" + name + "' where '" + p->name +
                            "' was expected");
    const auto rows = detail::read_pod<std::uint64_t>(in, name + " rows");
    const auto cols = detail::read_pod<std::uint64_t>(in, name + " cols");
    if (rows != std::uint64_t(p->value.rows()) || cols != std::uint64_t(p->value.cols()))
      throw CheckpointError(path + ": block '" + name + "' is " +
                            shape_str(Eigen::Index(rows), Eigen::Index(cols)) +
                            ", expected " +
                            shape_str(p->value.rows(), p->value.cols()));
    buf.resize(rows * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(S)));
    if (!in) throw CheckpointError(path + ": truncated block '" + name + "'");
    const auto stored_crc = detail::read_pod<std::uint32_t>(in, name + " checksum");
    const auto actual_crc =
        crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() * sizeof(S));
    if (stored_crc != actual_crc)
      throw CheckpointError(path + ": checksum mismatch in block '" + name + "'");
    std::size_t k = 0;
    for (std::uint64_t r = 0; r < rows; ++r)
      for (std::uint64_t c = 0; c < cols; ++c)
        p->value(Eigen::Index(r), Eigen::Index(c)) = buf[k++];
  }
  if (vocab_out) *vocab_out = Vocabulary::from_tokens(meta.vocab_tokens);
  if (meta_out) *meta_out = meta;
  return params;
}

}  // namespace noie
