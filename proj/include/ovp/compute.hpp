#pragma once

// Functional model of the exponent-integer arithmetic pipeline.
//
// Decoded operands are pairs <e, i> = i << e. A product is <a + c, b * d>,
// materialized by a shift and accumulated into a signed 32-bit register.
// Overflow anywhere is a checked error. 8-bit operands are split into a high
// and a low nibble so one product runs on four 4-bit multipliers.

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovp/codec.hpp"
#include "ovp/error.hpp"
#include "ovp/formats.hpp"

namespace ovp {

inline constexpr std::size_t kEdpLanes4 = 16;
inline constexpr std::size_t kEdpLanes8 = 8;

struct AccResult {
  std::int32_t value = 0;

  friend constexpr bool operator==(const AccResult&, const AccResult&) = default;
};

constexpr ExpIntPair mul_pair(ExpIntPair p, ExpIntPair q) {
  return {p.exponent + q.exponent, p.integer * q.integer};
}

// integer << exponent if it fits in int32.
inline std::optional<std::int32_t> materialize(ExpIntPair p) {
  if (p.integer == 0) return 0;
  if (p.exponent < 0 || p.exponent > 31) return std::nullopt;
  const std::int64_t v = std::int64_t{p.integer} * (std::int64_t{1} << p.exponent);
  if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
    return std::nullopt;
  }
  return static_cast<std::int32_t>(v);
}

namespace detail {

inline std::int32_t checked_add(std::int32_t acc, ExpIntPair term, std::size_t lane) {
  const auto v = materialize(term);
  if (!v) throw Error(ErrorCode::AccOverflow, "product does not fit in 32 bits", lane);
  std::int32_t out;
  if (__builtin_add_overflow(acc, *v, &out)) {
    throw Error(ErrorCode::AccOverflow, "accumulator overflow", lane);
  }
  return out;
}

}  // namespace detail

// Dot product accumulated in lane order. Lengths must match.
inline AccResult edp(std::span<const ExpIntPair> a, std::span<const ExpIntPair> b, AccResult acc = {}) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "edp operands differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc.value = detail::checked_add(acc.value, mul_pair(a[i], b[i]), i);
  }
  return acc;
}

struct Split8 {
  std::int32_t high = 0;  // [-8, 7]
  std::int32_t low = 0;   // [0, 15]

  friend constexpr bool operator==(const Split8&, const Split8&) = default;
};

// x == (high << 4) + low for x in [-128, 127].
constexpr Split8 split8(std::int32_t x) { return {x >> 4, x & 0xF}; }

// <e, i> as <e + 4, high> + <e, low>; requires i in [-128, 127].
constexpr std::array<ExpIntPair, 2> split_pair(ExpIntPair p) {
  const auto s = split8(p.integer);
  return {{{p.exponent + 4, s.high}, {p.exponent, s.low}}};
}

namespace detail {

// Four nibble products of two split operands, accumulated in PE order.
inline std::int32_t accumulate_split(std::int32_t acc, ExpIntPair x, ExpIntPair y, std::size_t lane) {
  const auto xs = split_pair(x);
  const auto ys = split_pair(y);
  for (const auto& xp : xs) {
    for (const auto& yp : ys) acc = checked_add(acc, mul_pair(xp, yp), lane);
  }
  return acc;
}

}  // namespace detail

inline std::int32_t mul8_composed(std::int8_t x, std::int8_t y) {
  return detail::accumulate_split(0, {0, x}, {0, y}, 0);
}

// 8-bit abfloat times an int8-range pair using four nibble products. The
// abfloat integer part is at most 15 in magnitude, so its split has a high
// nibble of 0 or -1. Disabled codes multiply as zero.
inline std::int32_t mul8_abfloat(std::uint8_t z, ExpIntPair y, const AbfloatConfig& cfg) {
  if (cfg.width != 8) throw Error(ErrorCode::InvalidConfig, "mul8_abfloat needs an 8-bit abfloat config");
  if (y.integer < -128 || y.integer > 127) {
    throw Error(ErrorCode::InvalidConfig, "partner integer is outside the int8 range");
  }
  return detail::accumulate_split(0, decode_abfloat(z, cfg, DecodeMode::Lenient), y, 0);
}

// Row-major m x n result of matmul_packed, in real units.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Location of the first accumulator overflow in a matmul.
struct OverflowSite {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t lane = 0;
};

class MatmulOverflow : public Error {
 public:
  explicit MatmulOverflow(OverflowSite site)
      : Error(ErrorCode::AccOverflow,
              "at (" + std::to_string(site.row) + ", " + std::to_string(site.col) + ") lane " +
                  std::to_string(site.lane),
              site.lane),
        site_(site) {}

  const OverflowSite& site() const noexcept { return site_; }

 private:
  OverflowSite site_;
};

namespace detail {

struct PackedOperands {
  std::size_t m = 0, n = 0, k = 0;
  std::vector<ExpIntPair> a;   // m x k
  std::vector<ExpIntPair> bt;  // n x k
};

inline PackedOperands unpack_operands(const OvpContainer& a, const OvpContainer& b_cols) {
  if (a.dims.size() != 2 || b_cols.dims.size() != 2) {
    throw Error(ErrorCode::ShapeMismatch, "matmul operands must be rank 2");
  }
  if (a.dims[1] != b_cols.dims[1]) {
    throw Error(ErrorCode::ShapeMismatch, "inner dimensions differ: " + std::to_string(a.dims[1]) +
                                              " vs " + std::to_string(b_cols.dims[1]));
  }
  if (a.dims[1] % 2 != 0) throw Error(ErrorCode::ShapeMismatch, "inner dimension must be even");
  return {a.dims[0], b_cols.dims[0], a.dims[1], decode_grid(a), decode_grid(b_cols)};
}

}  // namespace detail

// C = A * B where A is m x k and B (k x n) is packed by columns: `b_cols`
// holds B transposed, dims [n, k], so pairs run along the reduction axis.
// Each output accumulates EDP blocks of 16 (4-bit) or 8 (8-bit) lanes into
// one int32; 8-bit operands go through the four-nibble multiplier path.
inline Matrix matmul_packed(const OvpContainer& a, const OvpContainer& b_cols) {
  const auto ops = detail::unpack_operands(a, b_cols);
  const bool wide = code_bits(a.dtype) == 8 || code_bits(b_cols.dtype) == 8;
  const std::size_t lanes = wide ? kEdpLanes8 : kEdpLanes4;
  const double scale = a.scale * b_cols.scale;

  Matrix c{ops.m, ops.n, std::vector<double>(ops.m * ops.n)};
  for (std::size_t i = 0; i < ops.m; ++i) {
    const auto row = std::span(ops.a).subspan(i * ops.k, ops.k);
    for (std::size_t j = 0; j < ops.n; ++j) {
      const auto col = std::span(ops.bt).subspan(j * ops.k, ops.k);
      std::size_t base = 0;
      try {
        AccResult acc;
        for (; base < ops.k; base += lanes) {
          const std::size_t len = std::min(lanes, ops.k - base);
          if (wide) {
            for (std::size_t l = 0; l < len; ++l) {
              acc.value = detail::accumulate_split(acc.value, row[base + l], col[base + l], l);
            }
          } else {
            acc = edp(row.subspan(base, len), col.subspan(base, len), acc);
          }
        }
        c.data[i * ops.n + j] = scale * static_cast<double>(acc.value);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AccOverflow) throw;
        throw MatmulOverflow({i, j, base + e.index().value_or(0)});
      }
    }
  }
  return c;
}

// Same product computed on decoded grid values in double precision, then
// scaled identically. Every grid value is a small integer times a power of
// two, so without overflow this matches matmul_packed exactly.
inline Matrix reference_matmul(const OvpContainer& a, const OvpContainer& b_cols) {
  const auto ops = detail::unpack_operands(a, b_cols);
  const double scale = a.scale * b_cols.scale;
  Matrix c{ops.m, ops.n, std::vector<double>(ops.m * ops.n)};
  for (std::size_t i = 0; i < ops.m; ++i) {
    for (std::size_t j = 0; j < ops.n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < ops.k; ++t) {
        s += ops.a[i * ops.k + t].value() * ops.bt[j * ops.k + t].value();
      }
      c.data[i * ops.n + j] = scale * s;
    }
  }
  return c;
}

}  // namespace ovp
