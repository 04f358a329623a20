#pragma once

// Weight checkpoint container ("IAWT"):
//   magic "IAWT" | version u16 LE | count u32 LE
//   [version 2 only] metadata block: byte length u32 LE, then UTF-8 key=value lines
//   count records of: name length u16 LE | name bytes | rank u8 | dims u32 LE each |
//                     payload as 32-bit little-endian floats
// Version 1 is the plain layout with no metadata block; version 2 inserts the
// metadata block ahead of the tensor records so a model can carry its config.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "inamp/errors.hpp"
#include "inamp/tensor.hpp"

namespace inamp {

using CheckpointMeta = std::map<std::string, std::string>;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) |
                                      (static_cast<std::uint8_t>(p[1]) << 8));
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw TruncatedFile("checkpoint: unexpected end of file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Writes names in the given order. Payloads are stored as float32 regardless
/// of T. Pass metadata to get a version-2 file; omit it for version 1.
template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
                     const CheckpointMeta* meta = nullptr) {
  std::string out;
  out += "IAWT";
  detail::put_u16(out, meta ? 2 : 1);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  if (meta) {
    std::string block;
    for (const auto& [k, v] : *meta) block += k + "=" + v + "\n";
    detail::put_u32(out, static_cast<std::uint32_t>(block.size()));
    out += block;
  }
  for (const auto& [name, t] : tensors) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d = 0; d < t.rank(); ++d) detail::put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
    for (T v : t.values()) detail::put_f32(out, static_cast<float>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("save_checkpoint: short write to " + path);
}

template <typename T>
struct Checkpoint {
  CheckpointMeta meta;  // empty for version-1 files
  std::vector<std::pair<std::string, Tensor<T>>> tensors;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r(std::move(bytes));

  if (r.str(4) != "IAWT") throw BadMagic("load_checkpoint: not a weight checkpoint: " + path);
  const std::uint16_t version = r.u16();
  if (version != 1 && version != 2)
    throw UnsupportedVersion("load_checkpoint: version " + std::to_string(version));
  const std::uint32_t count = r.u32();

  Checkpoint<T> ck;
  if (version == 2) {
    const std::string block = r.str(r.u32());
    std::size_t start = 0;
    while (start < block.size()) {
      std::size_t nl = block.find('\n', start);
      if (nl == std::string::npos) nl = block.size();
      const std::string line = block.substr(start, nl - start);
      const std::size_t eq = line.find('=');
      if (eq != std::string::npos) ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
      start = nl + 1;
    }
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u16());
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (std::uint8_t d = 0; d < rank; ++d) shape[d] = r.u32();
    std::vector<T> values(shape_size(shape));
    for (T& v : values) v = static_cast<T>(r.f32());
    ck.tensors.emplace_back(name, Tensor<T>::from_values(std::move(shape), std::move(values)));
  }
  return ck;
}

}  // namespace inamp
