#pragma once

// Model checkpoints.
//
// Layout (little-endian):
//   "PARCWGTS" | u32 version | u32 n_tensors | u64 metadata_len | metadata
//   (JSON: model config + scaling) | 9 x f64 scaling coefficients
//   | per tensor: u32 name_len, name, u32 rank, rank x u32 dims
//   | per tensor, same order: float32 payload
//   | u64 CRC-64/XZ of all prior bytes

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "holstein/binary_io.hpp"
#include "holstein/models.hpp"

namespace holstein::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'R', 'C', 'W', 'G', 'T', 'S'};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Model<T>& m, const json& extra = json::object()) {
  const auto params = m.named_parameters();
  json meta{{"config", to_json(m.config())}, {"scaling", data::to_json(m.scaling())}, {"extra", extra}};
  const std::string meta_text = meta.dump();
  io::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 8));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  w.put<std::uint64_t>(meta_text.size());
  w.put_bytes(meta_text);
  for (double c : m.scaling().as_array()) w.put<double>(c);
  for (const auto& [name, t] : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, t] : params)
    for (T v : t.values()) w.put<float>(static_cast<float>(v));
  w.put_crc();
  return w.bytes();
}

template <typename T>
void write_checkpoint(const Model<T>& m, const std::filesystem::path& path, const json& extra = json::object()) {
  io::write_file(path, encode_checkpoint(m, extra));
}

struct CheckpointContents {
  ModelConfig config;
  ScalingCoefficients scaling;
  json extra;
  std::vector<std::string> names;
  std::vector<ad::Shape> shapes;
  std::vector<std::vector<float>> values;
};

inline CheckpointContents decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.size() < 24) throw TruncationError(what + ": shorter than the checkpoint header");
  io::ByteReader r(bytes.data(), bytes.size(), what);
  if (r.get_bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError(what + ": bad magic (not a checkpoint)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw VersionMismatchError(what + fmt::format(": checkpoint version {} unsupported", version));
  io::verify_crc_trailer(bytes, what);
  const auto n = r.get<std::uint32_t>();
  const auto meta_len = r.get<std::uint64_t>();
  CheckpointContents c;
  try {
    const json meta = json::parse(r.get_bytes(meta_len));
    c.config = model_config_from_json(meta.at("config"));
    c.extra = meta.value("extra", json::object());
  } catch (const json::exception& e) {
    throw FormatError(what + ": malformed metadata: " + e.what());
  }
  std::array<double, 9> s{};
  for (double& v : s) v = r.get<double>();
  c.scaling = ScalingCoefficients::from_array(s);
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto len = r.get<std::uint32_t>();
    c.names.push_back(r.get_bytes(len));
    const auto rank = r.get<std::uint32_t>();
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
    c.shapes.push_back(std::move(shape));
  }
  for (std::uint32_t k = 0; k < n; ++k) {
    std::vector<float> v(ad::numel_of(c.shapes[k]));
    for (float& x : v) x = r.get<float>();
    c.values.push_back(std::move(v));
  }
  if (r.remaining() != 8) throw PayloadIntegrityError(what + ": trailing bytes after tensor payload");
  return c;
}

/// Copies stored values into an existing model with matching names/shapes.
template <typename T>
void load_parameters(Model<T>& m, const CheckpointContents& c) {
  auto params = m.named_parameters();
  if (params.size() != c.names.size()) throw PayloadIntegrityError("checkpoint tensor count does not match model");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& [name, t] = params[k];
    if (name != c.names[k] || t.shape() != c.shapes[k])
      throw PayloadIntegrityError("checkpoint tensor '" + c.names[k] + "' does not match model parameter '" + name + "'");
    auto dst = t.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(c.values[k][i]);
  }
}

template <typename T = float>
Model<T> read_checkpoint(const std::filesystem::path& path, json* extra = nullptr) {
  const auto c = decode_checkpoint(io::read_file(path), path.filename().string());
  Model<T> m(c.config, c.scaling);
  load_parameters(m, c);
  if (extra) *extra = c.extra;
  return m;
}

/// Deep copy of parameter values (for best-checkpoint retention).
template <typename T>
std::vector<std::vector<T>> snapshot_parameters(const Model<T>& m) {
  std::vector<std::vector<T>> out;
  for (const auto& [name, t] : m.named_parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

template <typename T>
void restore_parameters(Model<T>& m, const std::vector<std::vector<T>>& values) {
  auto params = m.named_parameters();
  if (params.size() != values.size()) throw InvalidArgument("restore_parameters: size mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) std::copy(values[k].begin(), values[k].end(), params[k].second.data());
}

}  // namespace holstein::model
