#pragma once

// Test-only reference models. These are written from the format
// definitions directly and never call into the encoder paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ovp::oracle {

// Signed outlier-legal abfloat values built from
// sign * ((1 << mb) + m) << (e + bias), skipping the zero magnitude.
inline std::vector<double> abfloat_values(int width, int bias, bool clip) {
  const int mb = width == 4 ? 1 : 3;
  const int eb = width == 4 ? 2 : 4;
  std::vector<double> out;
  for (int e = 0; e < (1 << eb); ++e) {
    for (int m = 0; m < (1 << mb); ++m) {
      if (e == 0 && m == 0) continue;
      const double v = std::ldexp((1 << mb) + m, e + bias);
      if (width == 8 && clip && v > 32768.0) continue;
      out.push_back(v);
      out.push_back(-v);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline const std::vector<double>& flint4_values() {
  static const std::vector<double> v = {-16, -8, -6, -4, -3, -2, -1, 0, 1, 2, 3, 4, 6, 8, 16};
  return v;
}

inline std::vector<double> int_values(int max_level) {
  std::vector<double> v;
  for (int i = -max_level; i <= max_level; ++i) v.push_back(i);
  return v;
}

// Nearest grid value by linear scan; ties go to the larger magnitude.
inline double nearest(const std::vector<double>& grid, double v) {
  double best = grid.front();
  for (double g : grid) {
    const double d = std::fabs(g - v);
    const double db = std::fabs(best - v);
    if (d < db || (d == db && std::fabs(g) > std::fabs(best))) best = g;
  }
  return best;
}

// Upper tail mass of |Z| > k for a standard normal.
inline double normal_two_sided_tail(double k) { return std::erfc(k / std::sqrt(2.0)); }

inline std::vector<float> gaussian(std::mt19937_64& rng, std::size_t n, double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(dist(rng));
  return v;
}

// Replaces a fraction of elements with +-k sigma spikes.
inline void inject_outliers(std::mt19937_64& rng, std::vector<float>& v, double fraction, double magnitude) {
  const auto count = static_cast<std::size_t>(std::ceil(fraction * v.size()));
  std::uniform_int_distribution<std::size_t> pos(0, v.size() - 1);
  std::bernoulli_distribution sign(0.5);
  for (std::size_t i = 0; i < count; ++i) {
    v[pos(rng)] = static_cast<float>(sign(rng) ? magnitude : -magnitude);
  }
}

}  // namespace ovp::oracle
