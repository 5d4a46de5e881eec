#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "test_support.hpp"
#include "vimq/kscaled.hpp"

namespace vimq {
namespace {

double sse(const std::vector<double>& f, const std::vector<std::uint32_t>& a, std::size_t k) {
  std::vector<double> sum(k, 0.0), n(k, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    sum[a[i]] += f[i];
    n[a[i]] += 1;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double m = sum[a[i]] / n[a[i]];
    s += (f[i] - m) * (f[i] - m);
  }
  return s;
}

// Every labelling of n points with at most k labels.
double exhaustive_labelling_optimum(const std::vector<double>& f, std::size_t k) {
  const auto n = f.size();
  std::vector<std::uint32_t> a(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    best = std::min(best, sse(f, a, k));
    std::size_t i = 0;
    while (i < n && ++a[i] == k) a[i++] = 0;
    if (i == n) break;
  }
  return best;
}

// Every split of the sorted values into at most k contiguous runs.
double contiguous_partition_optimum(std::vector<double> f, std::size_t k) {
  std::sort(f.begin(), f.end());
  const auto n = f.size();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t start,
                                                                  std::size_t left, double acc) {
    if (start == n) {
      best = std::min(best, acc);
      return;
    }
    if (left == 0) return;
    double s = 0.0, ss = 0.0;
    for (std::size_t end = start + 1; end <= n; ++end) {
      s += f[end - 1];
      ss += f[end - 1] * f[end - 1];
      const double cnt = static_cast<double>(end - start);
      rec(end, left - 1, acc + std::max(0.0, ss - s * s / cnt));
    }
  };
  rec(0, k, 0.0);
  return best;
}

TEST(GroupStats, Examples) {
  const Tensor y({1, 2}, std::vector<float>{8.0f, -1.0f});
  EXPECT_EQ(group_stats(y, KAxis::Token), (std::vector<double>{3.0, 0.0}));
  EXPECT_EQ(group_stats(y, KAxis::Channel), (std::vector<double>{3.0}));
  const auto c = group_stats(Tensor::full({3, 5}, -2.0f), KAxis::Channel);
  EXPECT_EQ(c, (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_EQ(group_stats(Tensor::full({3, 5}, 1.0f), KAxis::Token).size(), 5u);
}

TEST(GroupStats, ZeroGroupFloored) {
  const Tensor y({2, 2}, std::vector<float>{0, 0, 4, 2});
  EXPECT_EQ(group_stats(y, KAxis::Channel), (std::vector<double>{-126.0, 2.0}));
}

TEST(GroupStats, BatchedLayoutPoolsSamples) {
  // [N=2, C=2, L=2]
  const Tensor y({2, 2, 2}, std::vector<float>{1, 2, 4, 1, 8, 1, 1, 1});
  EXPECT_EQ(group_stats(y, KAxis::Channel), (std::vector<double>{3.0, 2.0}));
  EXPECT_EQ(group_stats(y, KAxis::Token), (std::vector<double>{3.0, 1.0}));
  EXPECT_THROW(group_stats(Tensor::full({2}, 1.0f), KAxis::Channel), ShapeError);
}

TEST(KMeans, SeparatedExample) {
  const std::vector<double> f = {3.32, 3.33, 3.31, -3.3, -3.2, -3.5};
  for (auto method : {KMeansMethod::Optimal, KMeansMethod::Lloyd}) {
    const auto r = kmeans_1d(f, 2, {method, 50});
    EXPECT_EQ(r.assignment, (std::vector<std::uint32_t>{0, 0, 0, 1, 1, 1}));
    EXPECT_GT(r.centroids[0], r.centroids[1]);
    EXPECT_NEAR(within_cluster_ss(f, r.assignment), exhaustive_labelling_optimum(f, 2), 1e-12);
  }
}

TEST(KMeans, EdgeCases) {
  const std::vector<double> f = {1.0, 5.0, 2.0, 9.0};
  const auto one = kmeans_1d(f, 1);
  EXPECT_EQ(one.assignment, (std::vector<std::uint32_t>(4, 0)));
  const auto all = kmeans_1d(f, 4);
  EXPECT_EQ(within_cluster_ss(f, all.assignment), 0.0);
  EXPECT_EQ(all.assignment, (std::vector<std::uint32_t>{3, 1, 2, 0}));
  const auto reduced = kmeans_1d({2.0, 2.0, 7.0}, 3);
  EXPECT_EQ(reduced.k(), 2);
  EXPECT_THROW(kmeans_1d({}, 2), ConfigError);
  EXPECT_THROW(kmeans_1d({1.0}, 0), ConfigError);
}

TEST(KMeansProperty, MatchesExhaustiveLabelling) {
  Rng rng(100);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = test::rand_int(rng, 1, 8);
    const auto k = test::rand_int(rng, 1, 4);
    std::vector<double> f(n);
    for (auto& x : f) x = std::round(rng.uniform(-8, 8) * 4) / 4;
    const auto r = kmeans_1d(f, static_cast<int>(k));
    ASSERT_NEAR(within_cluster_ss(f, r.assignment), exhaustive_labelling_optimum(f, k), 1e-9)
        << "trial " << trial;
  }
}

TEST(KMeansProperty, MatchesContiguousOracleUpTo12) {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = test::rand_int(rng, 1, 12);
    const auto k = test::rand_int(rng, 1, 5);
    std::vector<double> f(n);
    for (auto& x : f) x = rng.normal(0, 3);
    const auto r = kmeans_1d(f, static_cast<int>(k));
    ASSERT_NEAR(within_cluster_ss(f, r.assignment), contiguous_partition_optimum(f, k), 1e-9)
        << "trial " << trial;
    for (std::size_t c = 1; c < r.centroids.size(); ++c) {
      ASSERT_GT(r.centroids[c - 1], r.centroids[c]);
    }
  }
}

TEST(RedefineScales, Examples) {
  auto r = redefine_scales({0.8f, 0.19f});
  EXPECT_EQ(r.s1, 0.8f);
  EXPECT_EQ(r.shifts, (std::vector<int>{0, 2}));
  EXPECT_EQ(std::ldexp(r.s1, -r.shifts[1]), 0.2f);
  EXPECT_EQ(redefine_scales({0.8f, 0.8f}).shifts, (std::vector<int>{0, 0}));
  EXPECT_EQ(redefine_scales({1.0f, 0.5f, 0.25f}).shifts, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(redefine_scales({1.0f, 1e-30f}).shifts[1], 31);
  EXPECT_THROW(redefine_scales({1.0f, 0.0f}), NumericError);
  EXPECT_THROW(redefine_scales({}), ConfigError);
}

KScaledParams hand_params() {
  KScaledParams p;
  p.axis = KAxis::Token;
  p.k = 2;
  p.bits = 8;
  p.assignment = {1, 0, 1};
  p.s1 = 0.5f;
  p.shifts = {0, 3};
  p.searched_scales = {0.5f, 0.06f};
  return p;
}

TEST(KScaledQuantize, UsesPerClusterEffectiveScale) {
  const auto p = hand_params();
  const Tensor y({2, 3}, std::vector<float>{0.125f, 10.0f, -1.0f, 0.0625f, -2.0f, 20.0f});
  const auto q = quantize_kscaled(y, p);
  // Tokens 0 and 2 use 0.5/8 = 0.0625, token 1 uses 0.5.
  EXPECT_EQ(q.to_f32_vector(), (std::vector<float>{2, 20, -16, 1, -4, 127}));
  const auto d = dequantize_kscaled(q, p);
  EXPECT_EQ(d.to_f32_vector(),
            (std::vector<float>{0.125f, 10.0f, -1.0f, 0.0625f, -2.0f, 127 * 0.0625f}));
  EXPECT_EQ(fake_quantize_kscaled(y, p), d);
}

TEST(KScaledQuantize, ChecksAssignment) {
  auto p = hand_params();
  const Tensor y({2, 4}, std::vector<float>(8, 1.0f));
  EXPECT_THROW(quantize_kscaled(y, p), ShapeError);
  p.assignment = {0, 1, 2};
  EXPECT_THROW(quantize_kscaled(Tensor({1, 3}, std::vector<float>{1, 1, 1}), p), ConfigError);
}

TEST(KScaledAlign, SharesOneMultiplierBitExactly) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    KScaledParams p;
    p.axis = trial % 2 ? KAxis::Channel : KAxis::Token;
    p.k = 3;
    p.bits = 8;
    p.s1 = static_cast<float>(rng.uniform(0.01, 2.0));
    p.shifts = {0, static_cast<int>(test::rand_int(rng, 0, 10)),
                static_cast<int>(test::rand_int(rng, 0, 20))};
    const auto y = test::randn(rng, {4, 6}, 0.5);
    const auto groups = p.axis == KAxis::Channel ? 4u : 6u;
    for (std::size_t g = 0; g < groups; ++g) p.assignment.push_back(rng.next() % 3);
    const auto q = quantize_kscaled(y, p);
    const auto aligned = align_kscaled(q, p);
    EXPECT_EQ(aligned.values.dtype(), DType::I32);
    const auto av = aligned.values.i32();
    const auto deq = dequantize_kscaled(q, p).to_f32_vector();
    for (std::size_t i = 0; i < av.size(); ++i) {
      ASSERT_EQ(static_cast<float>(av[i]) * aligned.common_scale, deq[i]);
    }
  }
  auto wide = hand_params();
  wide.shifts = {0, 24};
  EXPECT_THROW(align_kscaled(quantize_kscaled(Tensor({1, 3}, std::vector<float>{1, 1, 1}), wide),
                             wide),
               NumericError);
}

TEST(KScaledCalibrate, ConstantMagnitudeHasNoShift) {
  const auto y = Tensor::full({4, 8}, 3.0f);
  const auto p = calibrate_kscaled(y, KAxis::Token);
  for (int m : p.shifts) EXPECT_EQ(m, 0);
}

TEST(KScaledCalibrate, IsolatesOutlierToken) {
  Rng rng(21);
  auto v = test::uniform_vec(rng, 4 * 16, -1.0, 1.0);
  for (std::size_t c = 0; c < 4; ++c) v[c * 16 + 5] = c == 2 ? -50.0f : 30.0f;
  const Tensor y({4, 16}, std::move(v));
  KScaledOptions o;
  o.k = 2;
  const auto p = calibrate_kscaled(y, KAxis::Token, o);
  ASSERT_EQ(p.k, 2);
  for (std::size_t t = 0; t < 16; ++t) EXPECT_EQ(p.assignment[t], t == 5 ? 0u : 1u);
  EXPECT_EQ(p.shifts[0], 0);
  EXPECT_GT(p.shifts[1], 0);
  EXPECT_GT(p.effective_scale(0), p.effective_scale(1));
}

TEST(KScaledCalibrate, Deterministic) {
  Rng rng(22);
  const auto y = test::randn(rng, {3, 8, 20});
  EXPECT_EQ(calibrate_kscaled(y, KAxis::Channel), calibrate_kscaled(y, KAxis::Channel));
}

TEST(KScaledCalibrate, AllZeroClusterGetsTopScale) {
  std::vector<float> v(2 * 4, 0.0f);
  v[0] = 1.0f;
  v[1] = 0.01f;
  const Tensor y({2, 4}, std::move(v));
  KScaledOptions o;
  o.k = 3;
  const auto p = calibrate_kscaled(y, KAxis::Token, o);
  EXPECT_EQ(p.k, 3);
  // The cluster holding the all-zero tokens quantizes everything to 0 anyway.
  const auto zero_cluster = p.assignment[2];
  EXPECT_EQ(p.shifts[zero_cluster], 0);
}

TEST(KScaledProperty, EffectiveScalesReconstructAndStayNearSearched) {
  Rng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    auto v = test::randn_vec(rng, 6 * 24);
    for (std::size_t t = 0; t < 24; ++t) {
      const float gain = static_cast<float>(std::exp2(rng.uniform(-4, 4)));
      for (std::size_t c = 0; c < 6; ++c) v[c * 24 + t] *= gain;
    }
    const Tensor y({6, 24}, std::move(v));
    const auto p = calibrate_kscaled(y, KAxis::Token);
    for (std::size_t c = 0; c < static_cast<std::size_t>(p.k); ++c) {
      const float rebuilt = p.s1 * std::exp2(-static_cast<float>(p.shifts[c]));
      ASSERT_EQ(rebuilt, p.effective_scale(c));
      const double ratio = p.searched_scales[c] / p.effective_scale(c);
      ASSERT_GE(ratio, std::exp2(-0.5));
      ASSERT_LE(ratio, std::exp2(0.5));
    }
  }
}

double mse(const Tensor& a, const Tensor& b) {
  const auto x = a.f32(), y = b.f32();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (double(x[i]) - y[i]) * (double(x[i]) - y[i]);
  return s / static_cast<double>(x.size());
}

TEST(KScaledProperty, BeatsSingleScaleWhenGroupMaximaAreTight) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(600 + trial);
    const std::size_t C = 32, L = 48;
    std::vector<float> v(C * L);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) {
        const double gain = t >= L / 3 && t < 2 * L / 3 ? 32.0 : 1.0;
        v[c * L + t] = static_cast<float>(gain * rng.uniform(-1, 1));
      }
    const Tensor y({C, L}, std::move(v));
    const auto kq = fake_quantize_kscaled(y, calibrate_kscaled(y, KAxis::Token));
    const auto mm = fake_quantize(y, minmax_scale(y, 8), 8);
    ASSERT_LT(mse(y, kq), mse(y, mm)) << "trial " << trial;
  }
}

// A cluster sitting 0.7x below the top rounds to shift 1, so its largest
// values clip at s1/2 * qmax.
TEST(KScaledProperty, ShiftRoundingCanClipACluster) {
  std::vector<float> v = {127.0f, 0.7f * 127.0f, 1.0f};
  const Tensor y({1, 3}, v);
  KScaledOptions o;
  o.k = 3;
  o.cluster_scale = ClusterScale::MinMax;
  const auto p = calibrate_kscaled(y, KAxis::Token, o);
  const auto mid = p.assignment[1];
  EXPECT_EQ(p.shifts[mid], 1);
  EXPECT_EQ(fake_quantize_kscaled(y, p).f32()[1], 63.5f);
  EXPECT_EQ(fake_quantize(y, minmax_scale(y, 8), 8).f32()[1], 89.0f);
}

TEST(KAxis, Names) {
  EXPECT_EQ(parse_kaxis(to_string(KAxis::Channel)), KAxis::Channel);
  EXPECT_EQ(parse_kaxis(to_string(KAxis::Token)), KAxis::Token);
  EXPECT_THROW(parse_kaxis("row"), ConfigError);
}

}  // namespace
}  // namespace vimq
