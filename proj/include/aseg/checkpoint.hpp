#pragma once

// Versioned binary checkpoint.
//
//   "ASEGCKPT" | u32 version | u32 n_arch | n_arch x (str key, i32 value)
//   | u32 n_arrays | n_arrays x (str name, u8 dtype, i32 c, i32 h, i32 w, raw data)
//
// Strings are u32 length + bytes; all integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "aseg/model.hpp"

namespace aseg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

namespace detail {

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename V>
V get(std::istream& in) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("truncated checkpoint");
  return v;
}

inline std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw CheckpointError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw CheckpointError("truncated checkpoint");
  return s;
}

template <typename Src, typename Dst>
void read_values(std::istream& in, Tensor<Dst>& dst) {
  std::vector<Src> buf(dst.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(Src)))) {
    throw CheckpointError("truncated checkpoint");
  }
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<Dst>(buf[i]);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const Model<T>& model, std::ostream& out) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put(out, kCheckpointVersion);
  const auto arch = model.arch().to_map();
  detail::put(out, static_cast<std::uint32_t>(arch.size()));
  for (const auto& [k, v] : arch) {
    detail::put_string(out, k);
    detail::put(out, static_cast<std::int32_t>(v));
  }
  const auto& params = model.parameters();
  detail::put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_string(out, p.name);
    detail::put(out, static_cast<std::uint8_t>(dtype_of<T>()));
    detail::put(out, static_cast<std::int32_t>(p.value.channels()));
    detail::put(out, static_cast<std::int32_t>(p.value.height()));
    detail::put(out, static_cast<std::int32_t>(p.value.width()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(T)));
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  save_checkpoint(model, out);
}

/// Reads only the architecture header.
inline ArchConfig read_checkpoint_arch(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto n = detail::get<std::uint32_t>(in);
  std::map<std::string, int> m;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string key = detail::get_string(in);
    m[key] = detail::get<std::int32_t>(in);
  }
  try {
    return ArchConfig::from_map(m);
  } catch (const ArchitectureError& e) {
    throw CheckpointError(std::string("checkpoint architecture: ") + e.what());
  }
}

/// Loads a model; parameters stored in another precision are converted.
template <typename T>
Model<T> load_checkpoint(std::istream& in) {
  Model<T> model(read_checkpoint_arch(in));
  auto& params = model.parameters();
  const auto n = detail::get<std::uint32_t>(in);
  if (n != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(n) + " arrays, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    const std::string name = detail::get_string(in);
    if (name != p.name) throw CheckpointError("array '" + name + "' where '" + p.name + "' was expected");
    const auto dtype = static_cast<DType>(detail::get<std::uint8_t>(in));
    const int c = detail::get<std::int32_t>(in);
    const int h = detail::get<std::int32_t>(in);
    const int w = detail::get<std::int32_t>(in);
    if (Shape{c, h, w} != p.value.shape()) {
      throw CheckpointError("array '" + name + "' has shape " + Shape{c, h, w}.str() + ", model expects " +
                            p.value.shape().str());
    }
    switch (dtype) {
      case DType::f32: detail::read_values<float>(in, p.value); break;
      case DType::f64: detail::read_values<double>(in, p.value); break;
      default: throw CheckpointError("array '" + name + "' has unknown dtype");
    }
  }
  return model;
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_checkpoint<T>(in);
}

/// Loads and checks that the stored architecture is the expected one.
template <typename T>
Model<T> load_checkpoint(const std::string& path, const ArchConfig& expected) {
  Model<T> model = load_checkpoint<T>(path);
  if (!(model.arch() == expected)) {
    std::string diff;
    const auto got = model.arch().to_map();
    for (const auto& [k, v] : expected.to_map()) {
      if (got.at(k) != v) diff += " " + k + "=" + std::to_string(got.at(k)) + " (config " + std::to_string(v) + ")";
    }
    throw CheckpointError("checkpoint architecture differs from config:" + diff);
  }
  return model;
}

}  // namespace aseg
