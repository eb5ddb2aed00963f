#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/error.hpp"
#include "gendp/numerics/tensor.hpp"

namespace gendp {

inline constexpr const char* kEngineVersion = "gendp-engine/1";
inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'N', 'D', 'P', 'C', 'K', 'P'};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

// In-memory image of a checkpoint file. Tensors are kept at 32-bit precision.
struct Checkpoint {
  std::string engine_version;
  std::uint64_t seed = 0;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

// Layout: 8-byte magic, u64 LE manifest length, JSON manifest
// {engine_version, seed, meta, tensors:[{name, shape, offset}]}, then every
// tensor as little-endian IEEE-754 binary32 (offset counts floats).
template <typename T>
std::string encode_checkpoint(const std::vector<NamedTensor<T>>& tensors, const nlohmann::json& meta,
                              std::uint64_t seed) {
  nlohmann::json manifest;
  manifest["engine_version"] = kEngineVersion;
  manifest["seed"] = seed;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& nt : tensors) {
    manifest["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor->shape}, {"offset", offset}});
    offset += nt.tensor->size();
  }
  const std::string header = manifest.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u64(out, header.size());
  out += header;
  out.reserve(out.size() + offset * 4);
  for (const auto& nt : tensors) {
    for (T v : nt.tensor->data) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<NamedTensor<T>>& tensors,
                     const nlohmann::json& meta, std::uint64_t seed) {
  const std::string bytes = encode_checkpoint(tensors, meta, seed);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write checkpoint: " + path);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing checkpoint: " + path);
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw ParseError("not a gendp checkpoint (bad magic)", 0);
  }
  const std::uint64_t header_len = detail::get_u64(raw + 8);
  if (16 + header_len > bytes.size()) throw ParseError("truncated checkpoint manifest", 0);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what(), 0);
  }

  Checkpoint ck;
  ck.engine_version = manifest.at("engine_version").get<std::string>();
  if (ck.engine_version != kEngineVersion) {
    throw Error("checkpoint engine version " + ck.engine_version + " is not supported (expected " +
                kEngineVersion + ")");
  }
  ck.seed = manifest.at("seed").get<std::uint64_t>();
  ck.meta = manifest.value("meta", nlohmann::json::object());
  const std::size_t data_start = 16 + header_len;
  const std::size_t n_floats = (bytes.size() - data_start) / 4;
  for (const auto& entry : manifest.at("tensors")) {
    auto name = entry.at("name").get<std::string>();
    auto shape = entry.at("shape").get<Shape>();
    auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t n = shape_size(shape);
    if (offset + n > n_floats) throw ParseError("checkpoint tensor '" + name + "' exceeds file size", 0);
    std::vector<float> values(n);
    const unsigned char* p = raw + data_start + offset * 4;
    for (std::size_t i = 0; i < n; ++i, p += 4) {
      std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                           (static_cast<std::uint32_t>(p[2]) << 16) |
                           (static_cast<std::uint32_t>(p[3]) << 24);
      values[i] = std::bit_cast<float>(bits);
    }
    ck.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// Copies checkpoint values into an architecture's tensors. Every expected
// tensor must be present with an identical shape.
template <typename T>
void restore_tensors(const Checkpoint& ck, const std::vector<NamedTensor<T>>& tensors) {
  for (const auto& nt : tensors) {
    const auto* src = ck.find(nt.name);
    if (!src) throw ShapeError("checkpoint is missing tensor '" + nt.name + "'");
    if (src->shape != nt.tensor->shape) {
      throw ShapeError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(src->shape) +
                       ", architecture expects " + shape_str(nt.tensor->shape));
    }
    nt.tensor->data.assign(src->data.begin(), src->data.end());
  }
  if (ck.tensors.size() != tensors.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, architecture expects " +
                     std::to_string(tensors.size()));
  }
}

}  // namespace gendp
