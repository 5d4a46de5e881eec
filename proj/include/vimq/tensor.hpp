#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vimq/error.hpp"

namespace vimq {

enum class DType : std::uint8_t { F32 = 0, I8 = 1, I32 = 2 };

std::string to_string(DType dtype);

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& dims);
std::size_t numel(const Shape& dims);

// Dense row-major n-d array. Immutable once constructed: build the buffer as
// a std::vector and move it in.
class Tensor {
 public:
  // A single F32 zero, so aggregates holding tensors stay default-constructible.
  Tensor();
  Tensor(Shape dims, std::vector<float> data);
  Tensor(Shape dims, std::vector<std::int8_t> data);
  Tensor(Shape dims, std::vector<std::int32_t> data);

  static Tensor zeros(DType dtype, Shape dims);
  static Tensor full(Shape dims, float value);

  DType dtype() const noexcept { return dtype_; }
  const Shape& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t numel() const noexcept { return vimq::numel(dims_); }

  // Typed views; throw ShapeError on dtype mismatch.
  std::span<const float> f32() const;
  std::span<const std::int8_t> i8() const;
  std::span<const std::int32_t> i32() const;

  // Any dtype widened to float (I8/I32 converted exactly).
  std::vector<float> to_f32_vector() const;

  Tensor reshaped(Shape dims) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  DType dtype_ = DType::F32;
  Shape dims_;
  std::variant<std::vector<float>, std::vector<std::int8_t>,
               std::vector<std::int32_t>>
      data_;
};

enum class BinaryOp { Add, Sub, Mul, Div, Pow };

// Same-shape elementwise op, or b a 1-D vector broadcast along a's last axis.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
// b a 1-D vector broadcast along the named axis of a.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b,
                   std::size_t axis);
Tensor elementwise(BinaryOp op, const Tensor& a, float b);
Tensor exp(const Tensor& a);

// Sum-product of a and b over a[axis_a] x b[axis_b]. Result dims are the
// remaining dims of a followed by the remaining dims of b. Accumulation runs
// left to right in float so results are bit-reproducible.
Tensor contract(const Tensor& a, const Tensor& b, std::size_t axis_a,
                std::size_t axis_b);

// QTEN binary format, little-endian:
//   "QTEN" | u32 version=1 | u8 dtype | u8 ndim | ndim x u32 dims | raw data
enum class QtenErrorKind { BadMagic, UnsupportedVersion, Truncated, DimMismatch,
                           BadDType };

class QtenError : public IoError {
 public:
  QtenError(QtenErrorKind kind, const std::string& what)
      : IoError(what), kind_(kind) {}
  QtenErrorKind kind() const noexcept { return kind_; }

 private:
  QtenErrorKind kind_;
};

inline constexpr std::uint32_t kQtenVersion = 1;

std::vector<std::uint8_t> encode_qten(const Tensor& t);
Tensor decode_qten(std::span<const std::uint8_t> bytes);

void write_qten(const Tensor& t, const std::filesystem::path& path);
Tensor read_qten(const std::filesystem::path& path);

}  // namespace vimq
