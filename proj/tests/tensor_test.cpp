#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "test_support.hpp"
#include "vimq/tensor.hpp"

namespace vimq {
namespace {

using test::randn;

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{}, std::vector<float>{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 0}, std::vector<float>{}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_NO_THROW(Tensor(Shape{2, 3}, std::vector<float>(6)));
}

TEST(Tensor, TypedViewsCheckDtype) {
  const Tensor q({2}, std::vector<std::int8_t>{-128, 127});
  EXPECT_EQ(q.dtype(), DType::I8);
  EXPECT_THROW(q.f32(), ShapeError);
  EXPECT_THROW(q.i32(), ShapeError);
  EXPECT_EQ(q.i8()[0], -128);
  EXPECT_EQ(q.to_f32_vector(), (std::vector<float>{-128.0f, 127.0f}));
}

TEST(Tensor, DefaultIsScalarZero) {
  const Tensor t;
  EXPECT_EQ(t.dims(), Shape{1});
  EXPECT_EQ(t.f32()[0], 0.0f);
}

TEST(Tensor, Reshape) {
  const Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.dims(), (Shape{3, 2}));
  EXPECT_EQ(r.to_f32_vector(), t.to_f32_vector());
  EXPECT_THROW(t.reshaped({4}), ShapeError);
}

TEST(Elementwise, ScalarMul) {
  const Tensor a({3}, std::vector<float>{1, 2, 3});
  EXPECT_EQ(elementwise(BinaryOp::Mul, a, 2.0f).to_f32_vector(), (std::vector<float>{2, 4, 6}));
}

TEST(Elementwise, AddZerosIsIdentity) {
  Rng rng(3);
  const auto x = randn(rng, {4, 5});
  EXPECT_EQ(elementwise(BinaryOp::Add, x, Tensor::zeros(DType::F32, {4, 5})), x);
}

TEST(Elementwise, Exp) {
  const Tensor a({2}, std::vector<float>{0.0f, -0.5f});
  const auto e = exp(a).to_f32_vector();
  EXPECT_EQ(e[0], 1.0f);
  EXPECT_NEAR(e[1], 0.60653066, 1e-7);
  EXPECT_EQ(e[1], std::exp(-0.5f));
}

TEST(Elementwise, BroadcastAlongLastAndNamedAxis) {
  const Tensor a({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const Tensor last({3}, std::vector<float>{10, 20, 30});
  EXPECT_EQ(elementwise(BinaryOp::Add, a, last).to_f32_vector(),
            (std::vector<float>{11, 22, 33, 14, 25, 36}));
  const Tensor rows({2}, std::vector<float>{2, 3});
  EXPECT_EQ(elementwise(BinaryOp::Mul, a, rows, 0).to_f32_vector(),
            (std::vector<float>{2, 4, 6, 12, 15, 18}));
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  const Tensor a({2, 3}, std::vector<float>(6, 1.0f));
  const Tensor b({3, 2}, std::vector<float>(6, 1.0f));
  try {
    elementwise(BinaryOp::Add, a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3x2]"), std::string::npos) << msg;
  }
}

TEST(Elementwise, DivisionByZeroElementThrows) {
  const Tensor a({2}, std::vector<float>{1, 2});
  const Tensor b({2}, std::vector<float>{1, 0});
  EXPECT_THROW(elementwise(BinaryOp::Div, a, b), NumericError);
  EXPECT_THROW(elementwise(BinaryOp::Div, a, 0.0f), NumericError);
}

TEST(Elementwise, PowAndSub) {
  const Tensor a({2}, std::vector<float>{4, 9});
  EXPECT_EQ(elementwise(BinaryOp::Pow, a, 0.5f).to_f32_vector(), (std::vector<float>{2, 3}));
  EXPECT_EQ(elementwise(BinaryOp::Sub, a, a).to_f32_vector(), (std::vector<float>{0, 0}));
}

TEST(Contract, HandExample) {
  const Tensor c({2}, std::vector<float>{1, 0});
  const Tensor h({2, 2}, std::vector<float>{2, 3, 4, 5});
  // Contract C over D against h_t [C, D]: a row vector over h's last axis.
  EXPECT_EQ(contract(c, h, 0, 1).to_f32_vector(), (std::vector<float>{2, 4}));
}

TEST(Contract, OnesGiveRowSumsBasisGivesColumn) {
  Rng rng(11);
  const auto h = randn(rng, {3, 4});
  const auto hv = h.f32();
  const auto sums = contract(Tensor::full({4}, 1.0f), h, 0, 1).to_f32_vector();
  for (std::size_t r = 0; r < 3; ++r) {
    float s = 0.0f;
    for (std::size_t d = 0; d < 4; ++d) s += hv[r * 4 + d];
    EXPECT_EQ(sums[r], s);
  }
  const auto col = contract(Tensor({4}, std::vector<float>{0, 0, 1, 0}), h, 0, 1).to_f32_vector();
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(col[r], hv[r * 4 + 2]);
}

TEST(Contract, MatchesNaiveLoop) {
  Rng rng(5);
  const auto a = randn(rng, {3, 4, 5});
  const auto b = randn(rng, {6, 4});
  const auto got = contract(a, b, 1, 1);
  ASSERT_EQ(got.dims(), (Shape{3, 5, 6}));
  const auto av = a.f32(), bv = b.f32(), gv = got.f32();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t j = 0; j < 6; ++j) {
        float s = 0.0f;
        for (std::size_t r = 0; r < 4; ++r) s += av[(i * 4 + r) * 5 + k] * bv[j * 4 + r];
        EXPECT_EQ(gv[(i * 5 + k) * 6 + j], s);
      }
  EXPECT_THROW(contract(a, b, 0, 1), ShapeError);
}

std::vector<std::uint8_t> le32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
}

// Byte layout written out by hand.
std::vector<std::uint8_t> hand_encoded_2x3() {
  std::vector<std::uint8_t> b = {'Q', 'T', 'E', 'N'};
  auto push = [&](const std::vector<std::uint8_t>& v) { b.insert(b.end(), v.begin(), v.end()); };
  push(le32(1));
  b.push_back(0);
  b.push_back(2);
  push(le32(2));
  push(le32(3));
  for (float f : {1.0f, -2.0f, 0.5f, 3.25f, 0.0f, -0.125f}) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    push(le32(bits));
  }
  return b;
}

TEST(Qten, EncodesDocumentedLayout) {
  const Tensor t({2, 3}, std::vector<float>{1.0f, -2.0f, 0.5f, 3.25f, 0.0f, -0.125f});
  EXPECT_EQ(encode_qten(t), hand_encoded_2x3());
  EXPECT_EQ(decode_qten(hand_encoded_2x3()), t);
}

TEST(Qten, GoldenFile) {
  const auto t = read_qten(test::golden_dir() / "tensor_2x3.qten");
  EXPECT_EQ(t, Tensor({2, 3}, std::vector<float>{1.0f, -2.0f, 0.5f, 3.25f, 0.0f, -0.125f}));
  EXPECT_EQ(encode_qten(t), hand_encoded_2x3());
}

TEST(Qten, RewriteGivesIdenticalBytes) {
  const auto dir = test::scratch_dir("qten_rewrite");
  Rng rng(1);
  const auto t = randn(rng, {2, 3});
  write_qten(t, dir / "a.qten");
  write_qten(read_qten(dir / "a.qten"), dir / "b.qten");
  std::ifstream a(dir / "a.qten", std::ios::binary), b(dir / "b.qten", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Qten, I8Boundaries) {
  const Tensor q({4}, std::vector<std::int8_t>{-128, -1, 0, 127});
  EXPECT_EQ(decode_qten(encode_qten(q)), q);
}

QtenErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_qten(bytes);
  } catch (const QtenError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode did not throw";
  return QtenErrorKind::BadMagic;
}

TEST(Qten, DistinctErrors) {
  auto good = hand_encoded_2x3();

  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(decode_error(magic), QtenErrorKind::BadMagic);

  auto version = good;
  version[4] = 2;
  EXPECT_EQ(decode_error(version), QtenErrorKind::UnsupportedVersion);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(decode_error(truncated), QtenErrorKind::Truncated);
  EXPECT_EQ(decode_error({'Q', 'T', 'E', 'N', 1, 0}), QtenErrorKind::Truncated);

  auto extra = good;
  extra.push_back(0);
  EXPECT_EQ(decode_error(extra), QtenErrorKind::DimMismatch);

  auto dtype = good;
  dtype[8] = 7;
  EXPECT_EQ(decode_error(dtype), QtenErrorKind::BadDType);

  EXPECT_THROW(read_qten("/nonexistent/dir/x.qten"), IoError);
}

// Round trip is the identity for every dtype and rank up to 4.
TEST(QtenProperty, RoundTripRandomTensors) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto rank = test::rand_int(rng, 1, 4);
    Shape dims(rank);
    for (auto& d : dims) d = test::rand_int(rng, 1, 5);
    const auto n = numel(dims);
    Tensor t;
    switch (trial % 3) {
      case 0: t = Tensor(dims, test::randn_vec(rng, n, 10.0)); break;
      case 1: {
        std::vector<std::int8_t> v(n);
        for (auto& x : v) x = static_cast<std::int8_t>(static_cast<int>(rng.next() % 256) - 128);
        t = Tensor(dims, std::move(v));
        break;
      }
      default: {
        std::vector<std::int32_t> v(n);
        for (auto& x : v) x = static_cast<std::int32_t>(rng.next());
        t = Tensor(dims, std::move(v));
      }
    }
    const auto bytes = encode_qten(t);
    const auto back = decode_qten(bytes);
    ASSERT_EQ(back, t);
    ASSERT_EQ(encode_qten(back), bytes);
  }
}

}  // namespace
}  // namespace vimq
