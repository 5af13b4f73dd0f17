#pragma once

// Scalar number formats used by outlier-victim pair encoding.
//
// Every format decodes to an exponent-integer pair <e, i> meaning i << e.
// Normal values use int4, flint4 or int8 with one code reserved as the
// outlier identifier. Outliers use abfloat: a fixed-point float
//
//   sign * ((1 << mb) + mantissa) << (exponent_field + bias)
//
// where the bias pushes the whole range above the normal values. The
// all-zero magnitude decodes to 0 and is disabled for outlier slots, which
// also keeps the sign-only code free for the identifier.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ovp/error.hpp"

namespace ovp {

struct ExpIntPair {
  int exponent = 0;
  std::int32_t integer = 0;

  double value() const { return std::ldexp(static_cast<double>(integer), exponent); }

  friend constexpr bool operator==(const ExpIntPair&, const ExpIntPair&) = default;
};

enum class NormalDType : std::uint8_t { Int4 = 0, Flint4 = 1, Int8 = 2 };

constexpr int code_bits(NormalDType dtype) { return dtype == NormalDType::Int8 ? 8 : 4; }

constexpr std::uint8_t identifier_code(NormalDType dtype) {
  return dtype == NormalDType::Int8 ? 0x80 : 0x8;
}

// Largest normal magnitude in grid units.
constexpr int max_normal(NormalDType dtype) {
  switch (dtype) {
    case NormalDType::Int4: return 7;
    case NormalDType::Flint4: return 16;
    case NormalDType::Int8: return 127;
  }
  return 0;
}

constexpr std::string_view to_string(NormalDType dtype) {
  switch (dtype) {
    case NormalDType::Int4: return "int4";
    case NormalDType::Flint4: return "flint4";
    case NormalDType::Int8: return "int8";
  }
  return "?";
}

inline std::optional<NormalDType> parse_dtype(std::string_view name) {
  if (name == "int4") return NormalDType::Int4;
  if (name == "flint4") return NormalDType::Flint4;
  if (name == "int8") return NormalDType::Int8;
  return std::nullopt;
}

inline std::optional<NormalDType> dtype_from_tag(std::uint8_t tag) {
  if (tag > 2) return std::nullopt;
  return static_cast<NormalDType>(tag);
}

// Outliers are clipped to this magnitude for 8-bit abfloat so that the
// product of any two of them fits a signed 32-bit accumulator.
inline constexpr std::int64_t kOutlierClip = std::int64_t{1} << 15;

struct AbfloatConfig {
  int width = 4;  // 4 -> E2M1, 8 -> E4M3
  int bias = 2;
  bool clip = true;  // only meaningful for width 8

  constexpr int mantissa_bits() const { return width == 4 ? 1 : 3; }
  constexpr int exponent_bits() const { return width == 4 ? 2 : 4; }
  constexpr std::uint8_t sign_mask() const { return static_cast<std::uint8_t>(1u << (width - 1)); }
  constexpr std::uint8_t magnitude_mask() const { return static_cast<std::uint8_t>(sign_mask() - 1); }
  constexpr bool clipped() const { return width == 8 && clip; }

  static constexpr AbfloatConfig e2m1(int bias) { return {4, bias, true}; }
  static constexpr AbfloatConfig e4m3(int bias, bool clip = true) { return {8, bias, clip}; }

  friend constexpr bool operator==(const AbfloatConfig&, const AbfloatConfig&) = default;
};

// Smallest bias whose outlier range sits strictly above the normal range:
// 2 for int4 ({12..96}), 3 for flint4 ({24..192}), 4 for int8 (from 144).
constexpr int default_bias(NormalDType dtype) {
  switch (dtype) {
    case NormalDType::Int4: return 2;
    case NormalDType::Flint4: return 3;
    case NormalDType::Int8: return 4;
  }
  return 0;
}

constexpr AbfloatConfig default_abfloat(NormalDType dtype) {
  return dtype == NormalDType::Int8 ? AbfloatConfig::e4m3(default_bias(dtype))
                                    : AbfloatConfig::e2m1(default_bias(dtype));
}

enum class DecodeMode { Strict, Lenient };

namespace detail {

inline void check_code_width(std::uint32_t code, int bits) {
  if (code >= (1u << bits)) {
    throw Error(ErrorCode::InvalidCode,
                "code " + std::to_string(code) + " does not fit in " + std::to_string(bits) + " bits");
  }
}

// flint4 magnitude field -> (exponent, odd integer); value set {0,1,2,3,4,6,8,16}.
inline constexpr std::array<ExpIntPair, 8> kFlint4Magnitudes = {{
    {0, 0}, {0, 1}, {1, 1}, {0, 3}, {2, 1}, {1, 3}, {3, 1}, {4, 1},
}};

inline constexpr std::array<int, 8> kFlint4Values = {0, 1, 2, 3, 4, 6, 8, 16};

// Round half away from zero; std::round already does this.
inline double round_half_away(double x) { return std::round(x); }

inline std::int64_t magnitude_of(std::uint8_t mag_code, const AbfloatConfig& cfg) {
  if (mag_code == 0) return 0;
  const int mb = cfg.mantissa_bits();
  const int field = mag_code >> mb;
  const int mantissa = mag_code & ((1 << mb) - 1);
  return std::int64_t{(1 << mb) + mantissa} << (cfg.bias + field);
}

}  // namespace detail

inline void validate(const AbfloatConfig& cfg) {
  if (cfg.width != 4 && cfg.width != 8) {
    throw Error(ErrorCode::InvalidConfig, "abfloat width must be 4 or 8");
  }
  if (cfg.bias < 0) throw Error(ErrorCode::InvalidConfig, "abfloat bias must be non-negative");
  // Keep every decoded magnitude well inside int64 so that products can be
  // checked rather than wrapped.
  const int max_exponent = cfg.bias + (1 << cfg.exponent_bits()) - 1;
  if (max_exponent > 40) throw Error(ErrorCode::InvalidConfig, "abfloat bias too large");
  if (cfg.clipped() && detail::magnitude_of(1, cfg) > kOutlierClip) {
    throw Error(ErrorCode::InvalidConfig,
                "8-bit abfloat bias leaves no representable value within the 2^15 clip");
  }
}

// Largest magnitude code that may be emitted for an outlier.
inline std::uint8_t max_magnitude_code(const AbfloatConfig& cfg) {
  auto code = cfg.magnitude_mask();
  if (cfg.clipped()) {
    while (code > 1 && detail::magnitude_of(code, cfg) > kOutlierClip) --code;
  }
  return code;
}

inline bool is_disabled_abfloat(std::uint8_t code, const AbfloatConfig& cfg) {
  return (code & cfg.magnitude_mask()) == 0;
}

// True for codes encode_abfloat can produce: not disabled and within the clip.
inline bool is_emittable_abfloat(std::uint8_t code, const AbfloatConfig& cfg) {
  if (code >= (1u << cfg.width) || is_disabled_abfloat(code, cfg)) return false;
  return (code & cfg.magnitude_mask()) <= max_magnitude_code(cfg);
}

inline ExpIntPair decode_normal(std::uint8_t code, NormalDType dtype) {
  detail::check_code_width(code, code_bits(dtype));
  if (code == identifier_code(dtype)) {
    throw Error(ErrorCode::IdentifierCode, "outlier identifier is not a normal value");
  }
  switch (dtype) {
    case NormalDType::Int4:
      return {0, (code & 0x8) ? static_cast<std::int32_t>(code) - 16 : code};
    case NormalDType::Int8:
      return {0, static_cast<std::int8_t>(code)};
    case NormalDType::Flint4: {
      auto pair = detail::kFlint4Magnitudes[code & 0x7];
      if (code & 0x8) pair.integer = -pair.integer;
      return pair;
    }
  }
  return {};
}

inline std::uint8_t encode_normal(double scaled_value, NormalDType dtype) {
  const double limit = max_normal(dtype);
  const double v = std::clamp(scaled_value, -limit, limit);
  switch (dtype) {
    case NormalDType::Int4:
    case NormalDType::Int8: {
      const auto q = static_cast<std::int32_t>(detail::round_half_away(v));
      const std::uint32_t mask = dtype == NormalDType::Int4 ? 0xF : 0xFF;
      return static_cast<std::uint8_t>(static_cast<std::uint32_t>(q) & mask);
    }
    case NormalDType::Flint4: {
      const double mag = std::fabs(v);
      std::size_t best = 0;
      for (std::size_t i = 1; i < detail::kFlint4Values.size(); ++i) {
        // Ascending scan with <= keeps the larger magnitude on ties.
        if (std::fabs(detail::kFlint4Values[i] - mag) <= std::fabs(detail::kFlint4Values[best] - mag)) {
          best = i;
        }
      }
      if (best == 0) return 0;
      return static_cast<std::uint8_t>(best | (std::signbit(v) ? 0x8 : 0x0));
    }
  }
  return 0;
}

inline ExpIntPair decode_abfloat(std::uint8_t code, const AbfloatConfig& cfg,
                                 DecodeMode mode = DecodeMode::Strict) {
  detail::check_code_width(code, cfg.width);
  const std::uint8_t mag = code & cfg.magnitude_mask();
  if (mag == 0) {
    if (mode == DecodeMode::Strict) {
      throw Error(ErrorCode::DisabledCode, "abfloat code " + std::to_string(code) + " is disabled");
    }
    return {cfg.bias, 0};
  }
  const int mb = cfg.mantissa_bits();
  const int field = mag >> mb;
  const int mantissa = mag & ((1 << mb) - 1);
  const std::int32_t base = (1 << mb) + mantissa;
  return {cfg.bias + field, (code & cfg.sign_mask()) ? -base : base};
}

// Nearest representable outlier value, ties away from zero. Magnitudes below
// the smallest code saturate up to it, magnitudes above the largest (or the
// 2^15 clip for 8-bit) saturate down. Disabled codes are never produced.
inline std::uint8_t encode_abfloat(double scaled_value, const AbfloatConfig& cfg) {
  const int mb = cfg.mantissa_bits();
  const std::uint8_t sign = std::signbit(scaled_value) ? cfg.sign_mask() : 0;
  const std::uint8_t max_code = max_magnitude_code(cfg);

  double mag = std::fabs(scaled_value);
  if (cfg.clipped()) mag = std::min(mag, static_cast<double>(kOutlierClip));
  if (!(mag > 0.0)) return sign | 1;
  if (!std::isfinite(mag)) return sign | max_code;

  int exp = std::ilogb(mag) - mb;
  auto base = static_cast<std::int64_t>(detail::round_half_away(std::ldexp(mag, -exp)));
  if (base == (std::int64_t{2} << mb)) {
    ++exp;
    base = std::int64_t{1} << mb;
  }
  const int field = exp - cfg.bias;
  const auto mantissa = static_cast<int>(base - (std::int64_t{1} << mb));

  std::uint8_t mag_code;
  if (field < 0 || (field == 0 && mantissa == 0)) {
    mag_code = 1;
  } else if (field >= (1 << cfg.exponent_bits())) {
    mag_code = max_code;
  } else {
    mag_code = static_cast<std::uint8_t>((field << mb) | mantissa);
    mag_code = std::min(mag_code, max_code);
  }
  return sign | mag_code;
}

// Sorted, duplicate-free normal grid in grid units.
inline std::vector<double> grid_values(NormalDType dtype) {
  std::vector<double> out;
  const int n = 1 << code_bits(dtype);
  for (int code = 0; code < n; ++code) {
    const auto c = static_cast<std::uint8_t>(code);
    if (c == identifier_code(dtype)) continue;
    out.push_back(decode_normal(c, dtype).value());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Sorted signed values an outlier slot can hold (disabled codes and, for
// clipped 8-bit, values above 2^15 excluded).
inline std::vector<double> grid_values(const AbfloatConfig& cfg) {
  validate(cfg);
  std::vector<double> out;
  for (int code = 0; code < (1 << cfg.width); ++code) {
    const auto c = static_cast<std::uint8_t>(code);
    if (!is_emittable_abfloat(c, cfg)) continue;
    out.push_back(decode_abfloat(c, cfg).value());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Decoded magnitudes of every unsigned code, zero included, in code order.
// For E2M1 with bias 0 this is {0, 3, 4, 6, 8, 12, 16, 24}.
inline std::vector<double> magnitude_table(const AbfloatConfig& cfg) {
  validate(cfg);
  std::vector<double> out;
  for (int code = 0; code <= cfg.magnitude_mask(); ++code) {
    out.push_back(decode_abfloat(static_cast<std::uint8_t>(code), cfg, DecodeMode::Lenient).value());
  }
  return out;
}

// Smallest and largest emittable outlier magnitudes.
inline double min_outlier(const AbfloatConfig& cfg) {
  return static_cast<double>(detail::magnitude_of(1, cfg));
}
inline double max_outlier(const AbfloatConfig& cfg) {
  return static_cast<double>(detail::magnitude_of(max_magnitude_code(cfg), cfg));
}

}  // namespace ovp
