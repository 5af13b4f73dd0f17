#pragma once

// Outlier-victim pair encoding.
//
// Consecutive elements are grouped in pairs. A pair is either two normal
// codes, or one abfloat outlier code next to the outlier identifier, which
// marks the pruned partner (the victim). A 4-bit pair occupies exactly one
// byte (slot1 in the low nibble), an 8-bit pair two bytes in element order,
// so the encoded tensor is aligned and carries no side index.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ovp/error.hpp"
#include "ovp/formats.hpp"

namespace ovp {

// Threshold and scale are in grid units / real units per grid unit.
struct QuantConfig {
  NormalDType dtype = NormalDType::Int4;
  AbfloatConfig abf = default_abfloat(NormalDType::Int4);
  double scale = 1.0;
  double threshold = 7.0;
};

// Midpoint between the largest normal and the smallest outlier magnitude,
// so every element lands on the closer of the two ranges. Falls back to the
// largest normal when the ranges overlap (small bias).
inline double default_threshold(NormalDType dtype, const AbfloatConfig& abf) {
  const double hi = max_normal(dtype);
  const double lo = min_outlier(abf);
  return lo > hi ? 0.5 * (hi + lo) : hi;
}

inline QuantConfig make_config(NormalDType dtype, double scale, const AbfloatConfig& abf,
                               std::optional<double> threshold = std::nullopt) {
  return {dtype, abf, scale, threshold ? *threshold : default_threshold(dtype, abf)};
}

inline QuantConfig make_config(NormalDType dtype, double scale,
                               std::optional<int> bias = std::nullopt,
                               std::optional<double> threshold = std::nullopt) {
  auto abf = default_abfloat(dtype);
  if (bias) abf.bias = *bias;
  return make_config(dtype, scale, abf, threshold);
}

inline void validate(const QuantConfig& cfg) {
  validate(cfg.abf);
  if (cfg.abf.width != code_bits(cfg.dtype)) {
    throw Error(ErrorCode::InvalidConfig, "abfloat width must match the normal code width");
  }
  if (!(cfg.scale > 0.0) || !std::isfinite(cfg.scale)) {
    throw Error(ErrorCode::InvalidConfig, "scale must be positive and finite");
  }
  if (!(cfg.threshold >= max_normal(cfg.dtype))) {
    throw Error(ErrorCode::InvalidConfig, "threshold must be at least the largest normal magnitude");
  }
}

// Codes of the two slots of one pair, in element order.
struct SlotPair {
  std::uint8_t slot1 = 0;
  std::uint8_t slot2 = 0;

  friend constexpr bool operator==(const SlotPair&, const SlotPair&) = default;
};

// One 4-bit pair packed into a byte; slot1 is the low nibble.
struct PairByte {
  std::uint8_t raw = 0;

  constexpr std::uint8_t slot1() const { return raw & 0xF; }
  constexpr std::uint8_t slot2() const { return raw >> 4; }
  constexpr SlotPair slots() const { return {slot1(), slot2()}; }

  static constexpr PairByte pack(SlotPair s) {
    return {static_cast<std::uint8_t>((s.slot1 & 0xF) | (s.slot2 << 4))};
  }
};

enum class PairKind { NormalNormal, OutlierVictim, VictimOutlier };

inline PairKind pair_kind(SlotPair s, NormalDType dtype) {
  const auto id = identifier_code(dtype);
  if (s.slot2 == id) return PairKind::OutlierVictim;
  if (s.slot1 == id) return PairKind::VictimOutlier;
  return PairKind::NormalNormal;
}

// Outliers are compared by magnitude; if both exceed the threshold the larger
// survives and slot1 wins exact ties.
inline SlotPair encode_pair(double v1, double v2, const QuantConfig& cfg) {
  const double a1 = std::fabs(v1);
  const double a2 = std::fabs(v2);
  const auto id = identifier_code(cfg.dtype);
  if (a1 > cfg.threshold && a1 >= a2) return {encode_abfloat(v1, cfg.abf), id};
  if (a2 > cfg.threshold) return {id, encode_abfloat(v2, cfg.abf)};
  return {encode_normal(v1, cfg.dtype), encode_normal(v2, cfg.dtype)};
}

inline std::pair<ExpIntPair, ExpIntPair> decode_pair(SlotPair s, const QuantConfig& cfg) {
  const auto id = identifier_code(cfg.dtype);
  if (s.slot1 == id && s.slot2 == id) {
    throw Error(ErrorCode::CorruptPair, "both slots hold the outlier identifier");
  }
  try {
    switch (pair_kind(s, cfg.dtype)) {
      case PairKind::OutlierVictim: return {decode_abfloat(s.slot1, cfg.abf), {}};
      case PairKind::VictimOutlier: return {{}, decode_abfloat(s.slot2, cfg.abf)};
      case PairKind::NormalNormal:
        return {decode_normal(s.slot1, cfg.dtype), decode_normal(s.slot2, cfg.dtype)};
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DisabledCode) {
      throw Error(ErrorCode::CorruptPair, "outlier slot holds a disabled abfloat code");
    }
    throw;
  }
  return {};
}

inline std::pair<ExpIntPair, ExpIntPair> decode_pair(PairByte b, const QuantConfig& cfg) {
  return decode_pair(b.slots(), cfg);
}

// Encoded tensor. The payload holds ceil(N/2) bytes for 4-bit dtypes and N
// bytes for int8; see encode_tensor for the odd tail.
struct OvpContainer {
  NormalDType dtype = NormalDType::Int4;
  std::uint8_t bias = 2;
  double scale = 1.0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<std::size_t>());
  }

  friend bool operator==(const OvpContainer&, const OvpContainer&) = default;
};

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t size() const { return data.size(); }
};

inline std::size_t expected_payload_size(NormalDType dtype, std::size_t n) {
  return code_bits(dtype) == 4 ? (n + 1) / 2 : n;
}

// Decoding config for a container: decoding never depends on the threshold.
inline QuantConfig config_of(const OvpContainer& c) {
  return make_config(c.dtype, c.scale, c.bias);
}

// Odd element counts: a 4-bit tensor pads the last pair with a zero element.
// An 8-bit tail has no partner byte, so it is stored as a lone normal code
// (saturating at +-127) to keep the payload at exactly N bytes.
inline OvpContainer encode_tensor(std::span<const float> values, std::vector<std::uint32_t> dims,
                                  const QuantConfig& cfg) {
  validate(cfg);
  OvpContainer out;
  out.dtype = cfg.dtype;
  out.bias = static_cast<std::uint8_t>(cfg.abf.bias);
  out.scale = cfg.scale;
  out.dims = std::move(dims);
  if (out.element_count() != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "dims do not match the number of values");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteInput, "element is not finite", i);
    }
  }

  const std::size_t n = values.size();
  const bool nibbles = code_bits(cfg.dtype) == 4;
  out.payload.reserve(expected_payload_size(cfg.dtype, n));
  const auto scaled = [&](std::size_t i) { return static_cast<double>(values[i]) / cfg.scale; };

  std::size_t i = 0;
  for (; i + 1 < n; i += 2) {
    const auto s = encode_pair(scaled(i), scaled(i + 1), cfg);
    if (nibbles) {
      out.payload.push_back(PairByte::pack(s).raw);
    } else {
      out.payload.push_back(s.slot1);
      out.payload.push_back(s.slot2);
    }
  }
  if (i < n) {
    if (nibbles) {
      out.payload.push_back(PairByte::pack(encode_pair(scaled(i), 0.0, cfg)).raw);
    } else {
      out.payload.push_back(encode_normal(scaled(i), cfg.dtype));
    }
  }
  return out;
}

inline OvpContainer encode_tensor(const Tensor& t, const QuantConfig& cfg) {
  return encode_tensor(t.data, t.dims, cfg);
}

// Unscaled decoded values, one exponent-integer pair per element.
inline std::vector<ExpIntPair> decode_grid(const OvpContainer& c) {
  const std::size_t n = c.element_count();
  if (c.payload.size() != expected_payload_size(c.dtype, n)) {
    throw Error(ErrorCode::BadHeader, "payload size does not match dims");
  }
  const auto cfg = config_of(c);
  validate(cfg.abf);
  const bool nibbles = code_bits(c.dtype) == 4;

  std::vector<ExpIntPair> out;
  out.reserve(n + 1);
  const std::size_t pairs = n / 2 + (nibbles ? n % 2 : 0);
  for (std::size_t p = 0; p < pairs; ++p) {
    const SlotPair s = nibbles ? PairByte{c.payload[p]}.slots()
                               : SlotPair{c.payload[2 * p], c.payload[2 * p + 1]};
    try {
      const auto [a, b] = decode_pair(s, cfg);
      out.push_back(a);
      out.push_back(b);
    } catch (const Error& e) {
      throw Error(e.code(), "pair at element " + std::to_string(2 * p) + " is corrupt", 2 * p);
    }
  }
  if (!nibbles && n % 2 == 1) {
    const std::uint8_t tail = c.payload.back();
    if (tail == identifier_code(c.dtype)) {
      throw Error(ErrorCode::CorruptPair, "unpaired tail holds the outlier identifier", n - 1);
    }
    out.push_back(decode_normal(tail, c.dtype));
  }
  out.resize(n);
  return out;
}

inline std::vector<double> dequantize(const OvpContainer& c) {
  const auto grid = decode_grid(c);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = c.scale * grid[i].value();
  return out;
}

inline Tensor decode_tensor(const OvpContainer& c) {
  const auto values = dequantize(c);
  return {c.dims, std::vector<float>(values.begin(), values.end())};
}

}  // namespace ovp
