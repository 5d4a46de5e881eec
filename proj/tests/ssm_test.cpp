#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "vimq/ssm.hpp"

namespace vimq {
namespace {

using kernels::Exec;

SsmParams random_params(Rng& rng, std::size_t C, std::size_t D) {
  SsmParams p;
  std::vector<float> a(C * D);
  for (auto& v : a) v = -static_cast<float>(rng.uniform(0.1, 2.0));
  p.a = Tensor({C, D}, std::move(a));
  p.w_delta = test::randn(rng, {C, C}, 0.5);
  p.w_b = test::randn(rng, {D, C});
  p.w_c = test::randn(rng, {D, C});
  p.d_skip = test::randn(rng, {C});
  return p;
}

TEST(Softplus, Examples) {
  const auto s = softplus(Tensor({3}, std::vector<float>{0.0f, 100.0f, -100.0f})).to_f32_vector();
  EXPECT_NEAR(s[0], 0.693147, 1e-6);
  EXPECT_EQ(s[1], 100.0f);
  EXPECT_GT(s[2], 0.0f);
}

TEST(Softplus, PositiveEverywhere) {
  Rng rng(1);
  const auto s = softplus(test::randn(rng, {1000}, 30.0)).to_f32_vector();
  for (float v : s) EXPECT_GT(v, 0.0f);
}

TEST(Projections, ZeroInput) {
  Rng rng(2);
  const auto p = random_params(rng, 3, 2);
  const auto pr = project_delta_b_c(Tensor::zeros(DType::F32, {3, 5}), p);
  EXPECT_EQ(pr.delta.dims(), (Shape{3, 5}));
  EXPECT_EQ(pr.b.dims(), (Shape{5, 2}));
  EXPECT_EQ(pr.c.dims(), (Shape{5, 2}));
  for (float v : pr.delta.f32()) EXPECT_NEAR(v, 0.693147, 1e-6);
  for (float v : pr.b.f32()) EXPECT_EQ(v, 0.0f);
  for (float v : pr.c.f32()) EXPECT_EQ(v, 0.0f);
}

TEST(Projections, MatchNaiveMatmul) {
  Rng rng(3);
  const std::size_t C = 4, L = 6, D = 3;
  const auto p = random_params(rng, C, D);
  const auto x = test::randn(rng, {C, L});
  const auto pr = project_delta_b_c(x, p, Exec::Serial);
  const auto xv = x.f32(), wd = p.w_delta.f32(), wb = p.w_b.f32(), wc = p.w_c.f32();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < C; ++k) s += double(wd[c * C + k]) * xv[k * L + l];
      EXPECT_NEAR(pr.delta.f32()[c * L + l], std::log1p(std::exp(s)), 1e-5);
    }
    for (std::size_t d = 0; d < D; ++d) {
      double sb = 0.0, sc = 0.0;
      for (std::size_t k = 0; k < C; ++k) {
        sb += double(wb[d * C + k]) * xv[k * L + l];
        sc += double(wc[d * C + k]) * xv[k * L + l];
      }
      EXPECT_NEAR(pr.b.f32()[l * D + d], sb, 1e-5);
      EXPECT_NEAR(pr.c.f32()[l * D + d], sc, 1e-5);
    }
  }
  EXPECT_EQ(project_delta_b_c(x, p, Exec::Parallel).delta, pr.delta);
  EXPECT_THROW(project_delta_b_c(test::randn(rng, {C + 1, L}), p), ShapeError);
}

TEST(Discretize, ScalarExample) {
  const auto d = discretize(Tensor({1, 1}, std::vector<float>{0.5f}),
                            Tensor({1, 1}, std::vector<float>{-1.0f}),
                            Tensor({1, 1}, std::vector<float>{3.0f}));
  EXPECT_NEAR(d.abar.f32()[0], 0.606531, 1e-6);
  EXPECT_EQ(d.bbar.f32()[0], 1.5f);
}

TEST(Discretize, RangeAndSmallStep) {
  Rng rng(4);
  const auto delta = test::uniform(rng, {3, 7}, 1e-4, 3.0);
  const auto a = test::uniform(rng, {3, 2}, -3.0, -0.1);
  const auto b = test::randn(rng, {7, 2});
  const auto d = discretize(delta, a, b);
  for (float v : d.abar.f32()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  const auto tiny = discretize(Tensor::full({1, 1}, 1e-7f), Tensor::full({1, 1}, -1.0f),
                               Tensor::full({1, 1}, 1.0f));
  EXPECT_NEAR(tiny.abar.f32()[0], 1.0, 1e-6);
  EXPECT_NEAR(tiny.bbar.f32()[0], 0.0, 1e-6);
}

TEST(Discretize, ZeroOrderHold) {
  const float delta = 0.5f, a = -2.0f, b = 3.0f;
  const auto d =
      discretize(Tensor::full({1, 1}, delta), Tensor::full({1, 1}, a), Tensor::full({1, 1}, b),
                 Discretization::ZeroOrderHold);
  EXPECT_NEAR(d.bbar.f32()[0], (std::exp(delta * a) - 1.0) / a * b, 1e-6);
  EXPECT_NEAR(d.abar.f32()[0], std::exp(-1.0), 1e-6);
}

TEST(Scan, HandExample) {
  const auto abar = Tensor({1, 2, 1}, std::vector<float>{std::exp(-0.5f), std::exp(-0.5f)});
  const auto bbar = Tensor({1, 2, 1}, std::vector<float>{0.5f, 0.5f});
  const auto c = Tensor({2, 1}, std::vector<float>{1.0f, 1.0f});
  const auto x = Tensor({1, 2}, std::vector<float>{1.0f, 2.0f});
  const auto tr = selective_scan(abar, bbar, c, Tensor::zeros(DType::F32, {1}), x);
  EXPECT_NEAR(tr.h.f32()[0], 0.5, 1e-6);
  EXPECT_NEAR(tr.h.f32()[1], 1.30327, 1e-5);
  EXPECT_NEAR(tr.y.f32()[0], 0.5, 1e-6);
  EXPECT_NEAR(tr.y.f32()[1], 1.30327, 1e-5);
}

TEST(Scan, ZeroInputAndMemoryless) {
  Rng rng(5);
  const std::size_t C = 2, L = 4, D = 3;
  const auto bbar = test::randn(rng, {C, L, D});
  const auto c = test::randn(rng, {L, D});
  const auto skip = test::randn(rng, {C});
  const auto zero = selective_scan(test::uniform(rng, {C, L, D}, 0.1, 0.9), bbar, c, skip,
                                   Tensor::zeros(DType::F32, {C, L}));
  for (float v : zero.h.f32()) EXPECT_EQ(v, 0.0f);
  for (float v : zero.y.f32()) EXPECT_EQ(v, 0.0f);

  const auto x = test::randn(rng, {C, L});
  const auto tr =
      selective_scan(Tensor::zeros(DType::F32, {C, L, D}), bbar, c, skip, x);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const auto k = (i * L + t) * D + d;
        EXPECT_EQ(tr.h.f32()[k], bbar.f32()[k] * x.f32()[i * L + t]);
      }
}

// h_t = sum_{tau <= t} (prod_{tau < sigma <= t} abar_sigma) * bbar_tau * x_tau
TEST(ScanProperty, MatchesUnrolledClosedForm) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto C = test::rand_int(rng, 1, 4), L = test::rand_int(rng, 1, 4),
               D = test::rand_int(rng, 1, 4);
    const auto abar = test::uniform(rng, {C, L, D}, 0.05, 0.99);
    const auto bbar = test::randn(rng, {C, L, D});
    const auto c = test::randn(rng, {L, D});
    const auto skip = test::randn(rng, {C});
    const auto x = test::randn(rng, {C, L});
    const auto tr = selective_scan(abar, bbar, c, skip, x);
    const auto av = abar.f32(), bv = bbar.f32(), cv = c.f32(), xv = x.f32();
    std::vector<float> h(C * L * D), y(C * L);
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t t = 0; t < L; ++t) {
        double yt = double(skip.f32()[i]) * xv[i * L + t];
        for (std::size_t d = 0; d < D; ++d) {
          double s = 0.0;
          for (std::size_t tau = 0; tau <= t; ++tau) {
            double prod = 1.0;
            for (std::size_t sg = tau + 1; sg <= t; ++sg) prod *= av[(i * L + sg) * D + d];
            s += prod * bv[(i * L + tau) * D + d] * xv[i * L + tau];
          }
          h[(i * L + t) * D + d] = static_cast<float>(s);
          yt += double(cv[t * D + d]) * s;
        }
        y[i * L + t] = static_cast<float>(yt);
      }
    ASSERT_LE(test::rel_err(tr.h.to_f32_vector(), h), 1e-5) << trial;
    ASSERT_LE(test::rel_err(tr.y.to_f32_vector(), y), 1e-5) << trial;
  }
}

TEST(ScanProperty, StateBoundAndDeterminism) {
  Rng rng(7);
  const std::size_t C = 3, L = 40, D = 4;
  const auto abar = test::uniform(rng, {C, L, D}, 0.5, 0.999);
  const auto bbar = test::randn(rng, {C, L, D});
  const auto c = test::randn(rng, {L, D});
  const auto x = test::randn(rng, {C, L});
  const auto a = selective_scan(abar, bbar, c, Tensor::zeros(DType::F32, {C}), x);
  const auto b = selective_scan(abar, bbar, c, Tensor::zeros(DType::F32, {C}), x, {},
                                Exec::Serial);
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.y, b.y);
  double drive = 0.0;
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d)
        drive = std::max(drive, std::abs(double(bbar.f32()[(i * L + t) * D + d]) *
                                         x.f32()[i * L + t]));
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d)
        EXPECT_LE(std::abs(a.h.f32()[(i * L + t) * D + d]), drive * double(t + 1) * (1 + 1e-6));
}

TEST(Scan, ShapeMismatch) {
  Rng rng(8);
  EXPECT_THROW(selective_scan(test::randn(rng, {2, 3, 4}), test::randn(rng, {2, 3, 4}),
                              test::randn(rng, {3, 5}), test::randn(rng, {2}),
                              test::randn(rng, {2, 3})),
               ShapeError);
}

TEST(ReverseTokens, BothLayouts) {
  const Tensor x({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(reverse_tokens(x).to_f32_vector(), (std::vector<float>{3, 2, 1, 6, 5, 4}));
  const Tensor h({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(reverse_tokens(h).to_f32_vector(), (std::vector<float>{3, 4, 1, 2}));
}

TEST(Bidirectional, PalindromeStaysPalindrome) {
  Rng rng(9);
  const auto p = random_params(rng, 3, 2);
  std::vector<float> v(3 * 5);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 3; ++t) {
      const auto val = static_cast<float>(rng.normal());
      v[c * 5 + t] = val;
      v[c * 5 + 4 - t] = val;
    }
  const Tensor x({3, 5}, std::move(v));
  const auto y = bidirectional_scan(x, p, p).y;
  EXPECT_EQ(reverse_tokens(y), y);
}

TEST(Bidirectional, ZeroBackwardReducesToForward) {
  Rng rng(10);
  const auto p = random_params(rng, 3, 4);
  auto q = p;
  q.w_b = Tensor::zeros(DType::F32, {4, 3});
  q.d_skip = Tensor::zeros(DType::F32, {3});
  const auto x = test::randn(rng, {3, 6});
  EXPECT_EQ(bidirectional_scan(x, p, q).y, ssm_forward(x, p).y);
}

TEST(Bidirectional, MatchesTwoExplicitScans) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto C = test::rand_int(rng, 1, 5), L = test::rand_int(rng, 1, 9),
               D = test::rand_int(rng, 1, 5);
    const auto pf = random_params(rng, C, D);
    const auto pb = random_params(rng, C, D);
    const auto x = test::randn(rng, {C, L});
    const auto got = bidirectional_scan(x, pf, pb);

    const auto f = ssm_forward(x, pf).y.to_f32_vector();
    std::vector<float> xr(C * L);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) xr[c * L + t] = x.f32()[c * L + L - 1 - t];
    const auto b = ssm_forward(Tensor({C, L}, xr), pb).y.to_f32_vector();
    std::vector<float> want(C * L);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < L; ++t) want[c * L + t] = f[c * L + t] + b[c * L + L - 1 - t];
    ASSERT_EQ(got.y.to_f32_vector(), want);
  }
}

TEST(SsmParams, Validate) {
  Rng rng(12);
  auto p = random_params(rng, 2, 3);
  EXPECT_NO_THROW(p.validate());
  p.a = Tensor({2, 3}, std::vector<float>{-1, -1, -1, -1, 0, -1});
  EXPECT_THROW(p.validate(), ShapeError);
}

}  // namespace
}  // namespace vimq
