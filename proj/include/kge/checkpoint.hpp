#pragma once

// Binary checkpoint format (all integers and floats little-endian):
//
//   char[8]  magic "KGECKPT1"
//   u32      format version (1)
//   u32      model kind (ModelKind)
//   u32      d
//   u32      |E|
//   u32      |R|
//   u32      matrix count
//   per matrix, in matrix_layout(kind) order:
//     u64 rows, u64 cols, rows*cols f32 row-major
//
// A sidecar "<path>.meta" holds flat key = value metadata.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "kge/io.hpp"
#include "kge/scoring.hpp"

namespace kge {

inline constexpr char kCheckpointMagic[8] = {'K', 'G', 'E', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated checkpoint");
  return to_little(v);
}

}  // namespace detail

inline std::filesystem::path meta_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".meta";
  return p;
}

inline void write_checkpoint(std::ostream& out, const EmbeddingStore& store) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.kind));
  detail::put<std::uint32_t>(out, store.dim);
  detail::put<std::uint32_t>(out, store.entity_count);
  detail::put<std::uint32_t>(out, store.relation_count);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.matrices.size()));
  for (const auto& m : store.matrices) {
    detail::put<std::uint64_t>(out, m.rows);
    detail::put<std::uint64_t>(out, m.cols);
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    } else {
      for (float v : m.data) detail::put<float>(out, v);
    }
  }
}

inline EmbeddingStore read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw DataError("not a checkpoint file");
  auto version = detail::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  auto kind = detail::get<std::uint32_t>(in);
  if (kind > static_cast<std::uint32_t>(ModelKind::RotatE)) throw DataError("bad model kind in checkpoint");
  auto dim = detail::get<std::uint32_t>(in);
  auto entities = detail::get<std::uint32_t>(in);
  auto relations = detail::get<std::uint32_t>(in);
  EmbeddingStore store(static_cast<ModelKind>(kind), dim, entities, relations);
  auto count = detail::get<std::uint32_t>(in);
  if (count != store.matrices.size()) throw DataError("checkpoint matrix count mismatch");
  for (auto& m : store.matrices) {
    auto rows = detail::get<std::uint64_t>(in);
    auto cols = detail::get<std::uint64_t>(in);
    if (rows != m.rows || cols != m.cols) throw DataError("checkpoint matrix shape mismatch");
    if constexpr (std::endian::native == std::endian::little) {
      in.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(float)));
      if (!in) throw DataError("truncated checkpoint");
    } else {
      for (auto& v : m.data) v = detail::get<float>(in);
    }
  }
  return store;
}

/// Writes the checkpoint and its metadata sidecar, each atomically.
inline void save_checkpoint(const std::filesystem::path& path, const EmbeddingStore& store,
                            const KeyValues& meta = {}) {
  write_atomic(path, [&](std::ostream& out) { write_checkpoint(out, store); });
  KeyValues full = meta;
  full["model"] = std::string(to_string(store.kind));
  full["dim"] = std::to_string(store.dim);
  full["entities"] = std::to_string(store.entity_count);
  full["relations"] = std::to_string(store.relation_count);
  write_text_atomic(meta_path(path), format_key_values(full));
}

inline EmbeddingStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

inline KeyValues load_checkpoint_meta(const std::filesystem::path& path) {
  auto mp = meta_path(path);
  if (!std::filesystem::exists(mp)) return {};
  return read_key_values(mp);
}

}  // namespace kge
