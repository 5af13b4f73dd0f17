#pragma once

// Tensor statistics and the MSE-driven scale search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ovp/codec.hpp"
#include "ovp/error.hpp"
#include "ovp/formats.hpp"

namespace ovp {

// Fixed-order pairwise summation; the result depends only on the input order.
template <typename T>
double pairwise_sum(std::span<const T> xs) {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (const auto& x : xs) s += static_cast<double>(x);
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct TensorStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  double max_abs = 0.0;
  std::optional<double> max_sigma_ratio;  // empty when sigma == 0
  double frac_gt_3sigma = 0.0;
  double frac_gt_6sigma = 0.0;

  bool degenerate() const { return !max_sigma_ratio.has_value(); }
};

inline TensorStats compute_stats(std::span<const float> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyTensor, "cannot compute statistics of an empty tensor");
  const auto n = static_cast<double>(values.size());
  TensorStats st;
  st.mu = pairwise_sum(values) / n;

  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - st.mu;
    sq[i] = d * d;
    st.max_abs = std::max(st.max_abs, std::fabs(static_cast<double>(values[i])));
  }
  st.sigma = std::sqrt(pairwise_sum(std::span<const double>(sq)) / n);
  if (!(st.sigma > 0.0)) {
    st.sigma = 0.0;
    return st;
  }
  st.max_sigma_ratio = st.max_abs / st.sigma;
  std::size_t gt3 = 0, gt6 = 0;
  for (float v : values) {
    const double d = std::fabs(v - st.mu);
    gt3 += d > 3.0 * st.sigma;
    gt6 += d > 6.0 * st.sigma;
  }
  st.frac_gt_3sigma = static_cast<double>(gt3) / n;
  st.frac_gt_6sigma = static_cast<double>(gt6) / n;
  return st;
}

// Fractions of normal-normal, outlier-normal and outlier-outlier pairs.
struct PairStats {
  double nn = 0.0;
  double on = 0.0;
  double oo = 0.0;
  std::size_t pairs = 0;
};

// Disjoint consecutive pairs; an odd tail is paired with an implicit 0.
inline PairStats classify_pairs(std::span<const float> values, double threshold) {
  if (values.empty()) throw Error(ErrorCode::EmptyTensor, "cannot classify pairs of an empty tensor");
  if (!(threshold > 0.0)) throw Error(ErrorCode::InvalidConfig, "threshold must be positive");
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < values.size(); i += 2) {
    int outliers = std::fabs(values[i]) > threshold;
    if (i + 1 < values.size()) outliers += std::fabs(values[i + 1]) > threshold;
    ++counts[outliers];
  }
  PairStats ps;
  ps.pairs = (values.size() + 1) / 2;
  const auto p = static_cast<double>(ps.pairs);
  ps.nn = counts[0] / p;
  ps.on = counts[1] / p;
  ps.oo = counts[2] / p;
  return ps;
}

// Mean squared error of the full encode/decode round trip, in real units.
inline double quant_mse(std::span<const float> values, const QuantConfig& cfg) {
  if (values.empty()) return 0.0;
  const auto c = encode_tensor(values, {static_cast<std::uint32_t>(values.size())}, cfg);
  const auto back = dequantize(c);
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = static_cast<double>(values[i]) - back[i];
    sq[i] = d * d;
  }
  return pairwise_sum(std::span<const double>(sq)) / static_cast<double>(values.size());
}

// Symmetric clipped integer quantization without outlier handling; the
// baseline OVP encoding is measured against.
inline double clipped_int_mse(std::span<const float> values, double scale, int max_level) {
  if (values.empty()) return 0.0;
  std::vector<double> sq(values.size());
  const double lim = max_level;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double q = std::clamp(std::round(values[i] / scale), -lim, lim);
    const double d = static_cast<double>(values[i]) - q * scale;
    sq[i] = d * d;
  }
  return pairwise_sum(std::span<const double>(sq)) / static_cast<double>(values.size());
}

// Candidate scales are `steps` geometric points in [lo, hi] times the
// initial scale, plus the initial scale itself.
struct SearchWindow {
  double lo = 0.25;
  double hi = 4.0;
  std::uint32_t steps = 64;
};

struct ScaleSearchResult {
  double scale = 1.0;
  double mse = 0.0;
  std::size_t candidates_evaluated = 0;
  double initial_scale = 1.0;
};

inline std::vector<double> candidate_scales(double initial, const SearchWindow& w) {
  if (w.steps == 0 || !(w.lo > 0.0) || !(w.hi >= w.lo) || !std::isfinite(w.hi)) {
    throw Error(ErrorCode::InvalidConfig, "search window needs 0 < lo <= hi and steps >= 1");
  }
  std::vector<double> out{initial};
  if (w.steps == 1) return out;
  const double log_lo = std::log(w.lo);
  const double log_hi = std::log(w.hi);
  for (std::uint32_t i = 0; i < w.steps; ++i) {
    const double t = static_cast<double>(i) / (w.steps - 1);
    const double s = initial * std::exp(log_lo + t * (log_hi - log_lo));
    if (s != initial) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace detail {

// 3-sigma starting point; a flat tensor falls back to max_abs.
inline double initial_scale(const TensorStats& st, int max_level) {
  if (st.sigma > 0.0) return 3.0 * st.sigma / max_level;
  if (st.max_abs > 0.0) return st.max_abs / max_level;
  return 1.0;
}

template <typename MseFn>
ScaleSearchResult run_search(double s0, const SearchWindow& w, MseFn&& mse_at) {
  ScaleSearchResult best;
  best.initial_scale = s0;
  bool first = true;
  // Ascending order with strict < keeps the smaller scale on ties.
  for (double s : candidate_scales(s0, w)) {
    const double m = mse_at(s);
    ++best.candidates_evaluated;
    if (first || m < best.mse) {
      best.scale = s;
      best.mse = m;
      first = false;
    }
  }
  return best;
}

}  // namespace detail

inline ScaleSearchResult search_scale(std::span<const float> values, NormalDType dtype,
                                      const AbfloatConfig& abf, const SearchWindow& window = {}) {
  const auto st = compute_stats(values);
  const double s0 = detail::initial_scale(st, max_normal(dtype));
  if (!(st.sigma > 0.0)) {
    return {s0, quant_mse(values, make_config(dtype, s0, abf)), 1, s0};
  }
  return detail::run_search(s0, window, [&](double s) { return quant_mse(values, make_config(dtype, s, abf)); });
}

inline ScaleSearchResult search_clipped_int_scale(std::span<const float> values, int max_level,
                                                  const SearchWindow& window = {}) {
  const auto st = compute_stats(values);
  const double s0 = detail::initial_scale(st, max_level);
  if (!(st.sigma > 0.0)) return {s0, clipped_int_mse(values, s0, max_level), 1, s0};
  return detail::run_search(s0, window, [&](double s) { return clipped_int_mse(values, s, max_level); });
}

}  // namespace ovp
