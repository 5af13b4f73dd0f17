#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ovp/quantizer.hpp"

namespace ovp {
namespace {

TEST(ComputeStats, SmallTensor) {
  const std::vector<float> v = {1, 2, 3, 4};
  const auto st = compute_stats(v);
  EXPECT_DOUBLE_EQ(st.mu, 2.5);
  EXPECT_DOUBLE_EQ(st.sigma, std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(st.max_abs, 4.0);
  ASSERT_TRUE(st.max_sigma_ratio);
  EXPECT_DOUBLE_EQ(*st.max_sigma_ratio, 4.0 / std::sqrt(1.25));
  EXPECT_EQ(st.frac_gt_3sigma, 0.0);
}

TEST(ComputeStats, ConstantTensorIsDegenerate) {
  const std::vector<float> v = {5, 5, 5};
  const auto st = compute_stats(v);
  EXPECT_EQ(st.sigma, 0.0);
  EXPECT_TRUE(st.degenerate());
  EXPECT_EQ(st.frac_gt_3sigma, 0.0);
  EXPECT_EQ(st.frac_gt_6sigma, 0.0);
}

TEST(ComputeStats, Empty) {
  try {
    compute_stats(std::vector<float>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTensor);
  }
}

TEST(ComputeStats, GaussianThreeSigmaTail) {
  std::mt19937_64 rng(1);
  const auto v = oracle::gaussian(rng, 1'000'000);
  const auto st = compute_stats(v);
  const double expected = oracle::normal_two_sided_tail(3.0);  // ~0.0027
  EXPECT_NEAR(st.frac_gt_3sigma, expected, 0.0005);
  EXPECT_LE(st.frac_gt_6sigma, st.frac_gt_3sigma);
  EXPECT_NEAR(st.sigma, 1.0, 0.01);
}

TEST(ComputeStats, PermutationInvariant) {
  std::mt19937_64 rng(2);
  auto v = oracle::gaussian(rng, 4097);
  oracle::inject_outliers(rng, v, 0.01, 30.0);
  const auto a = compute_stats(v);
  std::shuffle(v.begin(), v.end(), rng);
  const auto b = compute_stats(v);
  EXPECT_NEAR(a.mu, b.mu, 1e-12);
  EXPECT_NEAR(a.sigma, b.sigma, 1e-12);
  EXPECT_EQ(a.max_abs, b.max_abs);
  EXPECT_EQ(a.frac_gt_3sigma, b.frac_gt_3sigma);
  EXPECT_EQ(a.frac_gt_6sigma, b.frac_gt_6sigma);
}

TEST(ClassifyPairs, Examples) {
  const auto ps = classify_pairs(std::vector<float>{0.1f, 5.0f, 0.2f, 0.3f}, 3.0);
  EXPECT_EQ(ps.nn, 0.5);
  EXPECT_EQ(ps.on, 0.5);
  EXPECT_EQ(ps.oo, 0.0);
  EXPECT_EQ(classify_pairs(std::vector<float>{1, -1, 2}, 3.0).nn, 1.0);
  const auto tail = classify_pairs(std::vector<float>{1, 1, -9}, 3.0);
  EXPECT_EQ(tail.pairs, 2u);
  EXPECT_EQ(tail.on, 0.5);
  EXPECT_THROW(classify_pairs(std::vector<float>{}, 3.0), Error);
  EXPECT_THROW(classify_pairs(std::vector<float>{1}, 0.0), Error);
}

TEST(ClassifyPairs, PositionalNotPermutationInvariant) {
  const std::vector<float> a = {9, 9, 0, 0};
  const std::vector<float> b = {9, 0, 9, 0};
  EXPECT_EQ(classify_pairs(a, 3.0).oo, 0.5);
  EXPECT_EQ(classify_pairs(b, 3.0).oo, 0.0);
}

TEST(ClassifyPairs, GaussianOutlierOutlierRare) {
  std::mt19937_64 rng(3);
  const auto v = oracle::gaussian(rng, 1'000'000);
  const auto st = compute_stats(v);
  const auto ps = classify_pairs(v, 3.0 * st.sigma);
  // Independence bound: p(oo) ~ p(|z| > 3)^2 ~ 7e-6.
  EXPECT_LT(ps.oo, 1e-4);
  EXPECT_NEAR(ps.nn + ps.on + ps.oo, 1.0, 1e-12);
}

TEST(ClassifyPairs, FractionsSumToOne) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 999);
  std::uniform_real_distribution<double> thr(0.1, 4.0);
  for (int i = 0; i < 200; ++i) {
    const auto v = oracle::gaussian(rng, len(rng));
    const auto ps = classify_pairs(v, thr(rng));
    ASSERT_NEAR(ps.nn + ps.on + ps.oo, 1.0, 1e-12);
    ASSERT_GE(std::min({ps.nn, ps.on, ps.oo}), 0.0);
  }
}

TEST(QuantMse, OnGridIsZero) {
  const float s = 0.25f;
  const std::vector<float> v = {1 * s, 2 * s, -3 * s, 0.0f};
  EXPECT_EQ(quant_mse(v, make_config(NormalDType::Int4, s)), 0.0);
}

TEST(QuantMse, HalfRoundsAwayFromZero) {
  const double s = 0.5;
  const std::vector<float> v = {float(0.5 * s), 0, 0, 0};
  // 0.5 rounds to 1: error 0.5 s on one of four elements.
  EXPECT_DOUBLE_EQ(quant_mse(v, make_config(NormalDType::Int4, s)), 0.0625 * s * s);
}

TEST(QuantMse, MatchesCodecRoundTrip) {
  std::mt19937_64 rng(6);
  auto v = oracle::gaussian(rng, 777);
  oracle::inject_outliers(rng, v, 0.01, 25.0);
  const auto cfg = make_config(NormalDType::Int4, 0.4);
  const auto back = dequantize(encode_tensor(v, {777}, cfg));
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) sum += (v[i] - back[i]) * (v[i] - back[i]);
  EXPECT_NEAR(quant_mse(v, cfg), sum / v.size(), 1e-12);
}

TEST(SearchScale, SingleStepReturnsInitialScale) {
  std::mt19937_64 rng(7);
  const auto v = oracle::gaussian(rng, 1000, 2.0);
  const auto st = compute_stats(v);
  const auto r = search_scale(v, NormalDType::Int4, default_abfloat(NormalDType::Int4), {0.25, 4.0, 1});
  EXPECT_EQ(r.scale, 3.0 * st.sigma / 7.0);
  EXPECT_EQ(r.initial_scale, r.scale);
  EXPECT_EQ(r.candidates_evaluated, 1u);
}

TEST(SearchScale, NeverWorseThanInitial) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 30; ++i) {
    auto v = oracle::gaussian(rng, 512);
    oracle::inject_outliers(rng, v, 0.005, 15.0);
    for (auto dtype : {NormalDType::Int4, NormalDType::Flint4, NormalDType::Int8}) {
      const auto abf = default_abfloat(dtype);
      const auto r = search_scale(v, dtype, abf);
      EXPECT_LE(r.mse, quant_mse(v, make_config(dtype, r.initial_scale, abf)));
      EXPECT_EQ(r.candidates_evaluated, 65u);
    }
  }
}

TEST(SearchScale, ResultIsMinimumOfCandidates) {
  std::mt19937_64 rng(9);
  auto v = oracle::gaussian(rng, 300);
  oracle::inject_outliers(rng, v, 0.01, 20.0);
  const SearchWindow w{0.5, 2.0, 9};
  const auto abf = default_abfloat(NormalDType::Int4);
  const auto r = search_scale(v, NormalDType::Int4, abf, w);
  for (double s : candidate_scales(r.initial_scale, w)) {
    EXPECT_LE(r.mse, quant_mse(v, make_config(NormalDType::Int4, s, abf)));
  }
  EXPECT_EQ(r.mse, quant_mse(v, make_config(NormalDType::Int4, r.scale, abf)));
}

TEST(SearchScale, ExactGridFound) {
  // Every int4 level once, seven extra +-1 pairs and 25 zeros: the
  // population sigma is exactly 7/3 grid units, so 3 sigma / 7 lands on the
  // grid step.
  const float step = 0.125f;
  std::vector<float> v;
  for (int k = -7; k <= 7; ++k) v.push_back(k * step);
  for (int i = 0; i < 7; ++i) {
    v.push_back(step);
    v.push_back(-step);
  }
  v.resize(54, 0.0f);
  const auto r = search_scale(v, NormalDType::Int4, default_abfloat(NormalDType::Int4));
  EXPECT_EQ(r.initial_scale, step);
  EXPECT_EQ(r.mse, 0.0);
}

TEST(SearchScale, FlatTensorFallsBack) {
  const std::vector<float> v(10, 3.5f);
  const auto r = search_scale(v, NormalDType::Int4, default_abfloat(NormalDType::Int4));
  EXPECT_EQ(r.scale, 0.5);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_THROW(search_scale(std::vector<float>{}, NormalDType::Int4, default_abfloat(NormalDType::Int4)), Error);
}

TEST(SearchScale, BadWindow) {
  const std::vector<float> v = {1, 2, 3};
  EXPECT_THROW(search_scale(v, NormalDType::Int4, default_abfloat(NormalDType::Int4), {2.0, 1.0, 8}), Error);
  EXPECT_THROW(search_scale(v, NormalDType::Int4, default_abfloat(NormalDType::Int4), {0.5, 1.0, 0}), Error);
}

TEST(QuantizerProperties, OutlierPreservationBeatsClipping) {
  std::mt19937_64 rng(10);
  int wins = 0;
  for (int seed = 0; seed < 10; ++seed) {
    auto v = oracle::gaussian(rng, 4096);
    oracle::inject_outliers(rng, v, 0.001, 20.0);
    const auto pairs = search_scale(v, NormalDType::Int4, default_abfloat(NormalDType::Int4));
    const auto clipped = search_clipped_int_scale(v, 7);
    wins += pairs.mse < clipped.mse;
  }
  EXPECT_EQ(wins, 10);
}

}  // namespace
}  // namespace ovp
