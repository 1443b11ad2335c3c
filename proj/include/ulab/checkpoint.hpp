#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ulab/errors.hpp"
#include "ulab/tensor.hpp"

namespace ulab {

/// One entry of a checkpoint file.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// Checkpoint container: little-endian flat binary.
//   header : magic "ULAB", version u32, tensor count u32
//   tensor : name length u16, name bytes, rank u8, extents u32[], payload f64[]

namespace detail {

constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_bytes(std::string& out, const void* src, std::size_t n) {
  out.append(static_cast<const char*>(src), n);
}

inline void put_u16(std::string& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  put_bytes(out, b, 2);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& what)
      : bytes_(bytes), what_(what) {}

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw format_error(what_ + ": truncated payload");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint16_t u16() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2));
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }

  double f64() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out;
  out.append("ULAB");
  detail::put_u32(out, detail::kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff)
      throw contract_error("checkpoint: tensor name too long");
    if (numel(t.shape) != t.data.size())
      throw shape_error("checkpoint: tensor " + t.name + " shape/data mismatch");
    detail::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out.append(t.name);
    out.push_back(static_cast<char>(t.shape.size()));
    for (std::size_t e : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data) detail::put_f64(out, v);
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes,
                                                  const std::string& what) {
  detail::ByteReader r(bytes, what);
  if (std::string(r.take(4), 4) != "ULAB")
    throw format_error(what + ": bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion)
    throw format_error(what + ": unsupported checkpoint version " +
                       std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint16_t name_len = r.u16();
    t.name.assign(r.take(name_len), name_len);
    const unsigned char rank = static_cast<unsigned char>(*r.take(1));
    t.shape.resize(rank);
    for (auto& e : t.shape) e = r.u32();
    t.data.resize(numel(t.shape));
    for (auto& v : t.data) v = r.f64();
    tensors.push_back(std::move(t));
  }
  if (!r.exhausted()) throw format_error(what + ": trailing bytes");
  return tensors;
}

inline void save_checkpoint(const std::string& path,
                            const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open checkpoint for writing: " + path);
  const std::string bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw format_error("short write to checkpoint: " + path);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

}  // namespace ulab
