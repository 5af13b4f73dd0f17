#pragma once

// Byte formats, all little-endian.
//
// .ovp container:
//   "OVP1" | u16 version=1 | u8 dtype {0 int4, 1 flint4, 2 int8} | u8 bias |
//   f64 scale | u32 rank | u32 dims[rank] | payload
//
// Float tensors are a raw f32 stream at `path` plus a sidecar header at
// `path + ".ovt"`:  "OVT0" | u32 rank | u32 dims[rank]

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ovp/codec.hpp"
#include "ovp/error.hpp"

namespace ovp {

inline constexpr std::array<std::uint8_t, 4> kContainerMagic = {'O', 'V', 'P', '1'};
inline constexpr std::array<std::uint8_t, 4> kTensorMagic = {'O', 'V', 'T', '0'};
inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::string_view kTensorHeaderSuffix = ".ovt";

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
  }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) out_.push_back(b);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, ErrorCode short_read)
      : in_(in), short_read_(short_read) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(std::make_unsigned_t<T>{in_[pos_ + i]} << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void set_short_read(ErrorCode code) { short_read_ = code; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(short_read_, "unexpected end of stream");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  ErrorCode short_read_;
};

inline std::size_t checked_count(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw Error(ErrorCode::BadHeader, "dims overflow");
    }
    n *= d;
  }
  return n;
}

inline std::vector<std::uint32_t> read_dims(ByteReader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank > 64) throw Error(ErrorCode::BadHeader, "rank " + std::to_string(rank) + " too large");
  std::vector<std::uint32_t> dims(rank);
  for (auto& d : dims) d = r.get<std::uint32_t>();
  return dims;
}

}  // namespace detail

inline std::vector<std::uint8_t> write_container(const OvpContainer& c) {
  std::vector<std::uint8_t> out;
  out.reserve(24 + 4 * c.dims.size() + c.payload.size());
  detail::ByteWriter w(out);
  w.put_bytes(kContainerMagic);
  w.put(kContainerVersion);
  w.put(static_cast<std::uint8_t>(c.dtype));
  w.put(c.bias);
  w.put_f64(c.scale);
  w.put(static_cast<std::uint32_t>(c.dims.size()));
  for (auto d : c.dims) w.put(d);
  w.put_bytes(c.payload);
  return out;
}

inline OvpContainer read_container(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, ErrorCode::BadHeader);
  const auto magic = r.take(kContainerMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kContainerMagic.begin())) {
    throw Error(ErrorCode::BadMagic, "not an .ovp container");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kContainerVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "container version " + std::to_string(version));
  }
  OvpContainer c;
  const auto dtype = dtype_from_tag(r.get<std::uint8_t>());
  if (!dtype) throw Error(ErrorCode::BadHeader, "unknown dtype tag");
  c.dtype = *dtype;
  c.bias = r.get<std::uint8_t>();
  c.scale = r.get_f64();
  if (!(c.scale > 0.0) || !std::isfinite(c.scale)) throw Error(ErrorCode::BadHeader, "scale must be positive");
  try {
    validate(config_of(c).abf);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadHeader, e.what());
  }
  c.dims = detail::read_dims(r);

  const std::size_t want = expected_payload_size(c.dtype, detail::checked_count(c.dims));
  r.set_short_read(ErrorCode::TruncatedPayload);
  const auto payload = r.take(want);
  if (r.remaining() != 0) throw Error(ErrorCode::BadHeader, "trailing bytes after payload");
  c.payload.assign(payload.begin(), payload.end());
  return c;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::Io, "read failed for " + path.string());
  return bytes;
}

// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot rename into " + path.string());
  }
}

inline OvpContainer load_container(const std::filesystem::path& path) {
  return read_container(read_file(path));
}

inline void save_container(const std::filesystem::path& path, const OvpContainer& c) {
  write_file_atomic(path, write_container(c));
}

inline std::filesystem::path tensor_header_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p += kTensorHeaderSuffix;
  return p;
}

inline std::vector<std::uint8_t> write_tensor_header(std::span<const std::uint32_t> dims) {
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.put_bytes(kTensorMagic);
  w.put(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.put(d);
  return out;
}

inline std::vector<std::uint32_t> read_tensor_header(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, ErrorCode::BadHeader);
  const auto magic = r.take(kTensorMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kTensorMagic.begin())) {
    throw Error(ErrorCode::BadMagic, "not an OVT tensor header");
  }
  auto dims = detail::read_dims(r);
  if (r.remaining() != 0) throw Error(ErrorCode::BadHeader, "trailing bytes after tensor header");
  return dims;
}

inline Tensor decode_tensor_data(std::span<const std::uint32_t> dims, std::span<const std::uint8_t> data) {
  const std::size_t n = detail::checked_count(dims);
  if (data.size() != 4 * n) {
    throw Error(ErrorCode::TruncatedPayload, "f32 stream holds " + std::to_string(data.size()) +
                                                 " bytes, header needs " + std::to_string(4 * n));
  }
  Tensor t{{dims.begin(), dims.end()}, std::vector<float>(n)};
  detail::ByteReader r(data, ErrorCode::TruncatedPayload);
  for (auto& v : t.data) v = r.get_f32();
  return t;
}

inline Tensor load_tensor(const std::filesystem::path& data_path) {
  const auto dims = read_tensor_header(read_file(tensor_header_path(data_path)));
  return decode_tensor_data(dims, read_file(data_path));
}

inline void save_tensor(const std::filesystem::path& data_path, const Tensor& t) {
  if (detail::checked_count(t.dims) != t.data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor dims do not match its data");
  }
  std::vector<std::uint8_t> data;
  data.reserve(4 * t.data.size());
  detail::ByteWriter w(data);
  for (float v : t.data) w.put_f32(v);
  write_file_atomic(data_path, data);
  write_file_atomic(tensor_header_path(data_path), write_tensor_header(t.dims));
}

}  // namespace ovp
