#include "vimq/tensor.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace vimq {

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::I8: return "i8";
    case DType::I32: return "i32";
  }
  return "?";
}

std::string to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

void check_dims(const Shape& dims, std::size_t len) {
  if (dims.empty()) throw ShapeError("tensor dims must be non-empty");
  for (auto d : dims) {
    if (d == 0) throw ShapeError("tensor dim of 0 in " + to_string(dims));
  }
  if (numel(dims) != len) {
    throw ShapeError("tensor dims " + to_string(dims) + " hold " +
                     std::to_string(numel(dims)) + " elements, buffer has " +
                     std::to_string(len));
  }
}

}  // namespace

Tensor::Tensor() : dtype_(DType::F32), dims_{1}, data_(std::vector<float>{0.0f}) {}

Tensor::Tensor(Shape dims, std::vector<float> data)
    : dtype_(DType::F32), dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_, std::get<0>(data_).size());
}

Tensor::Tensor(Shape dims, std::vector<std::int8_t> data)
    : dtype_(DType::I8), dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_, std::get<1>(data_).size());
}

Tensor::Tensor(Shape dims, std::vector<std::int32_t> data)
    : dtype_(DType::I32), dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_, std::get<2>(data_).size());
}

Tensor Tensor::zeros(DType dtype, Shape dims) {
  const auto n = vimq::numel(dims);
  switch (dtype) {
    case DType::F32: return Tensor(std::move(dims), std::vector<float>(n, 0.0f));
    case DType::I8: return Tensor(std::move(dims), std::vector<std::int8_t>(n, 0));
    case DType::I32: return Tensor(std::move(dims), std::vector<std::int32_t>(n, 0));
  }
  throw ShapeError("unknown dtype");
}

Tensor Tensor::full(Shape dims, float value) {
  const auto n = vimq::numel(dims);
  return Tensor(std::move(dims), std::vector<float>(n, value));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(dims_));
  }
  return dims_[axis];
}

std::span<const float> Tensor::f32() const {
  if (dtype_ != DType::F32) throw ShapeError("expected f32 tensor, got " + to_string(dtype_));
  return std::get<0>(data_);
}

std::span<const std::int8_t> Tensor::i8() const {
  if (dtype_ != DType::I8) throw ShapeError("expected i8 tensor, got " + to_string(dtype_));
  return std::get<1>(data_);
}

std::span<const std::int32_t> Tensor::i32() const {
  if (dtype_ != DType::I32) throw ShapeError("expected i32 tensor, got " + to_string(dtype_));
  return std::get<2>(data_);
}

std::vector<float> Tensor::to_f32_vector() const {
  return std::visit(
      [](const auto& v) { return std::vector<float>(v.begin(), v.end()); }, data_);
}

Tensor Tensor::reshaped(Shape dims) const {
  Tensor out = *this;
  check_dims(dims, numel());
  out.dims_ = std::move(dims);
  return out;
}

namespace {

float apply(BinaryOp op, float a, float b) {
  switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div: return a / b;
    case BinaryOp::Pow: return std::pow(a, b);
  }
  return 0.0f;
}

void check_divisor(BinaryOp op, std::span<const float> b) {
  if (op != BinaryOp::Div) return;
  for (float v : b) {
    if (v == 0.0f) throw NumericError("division by a zero element");
  }
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const auto av = a.f32();
  const auto bv = b.f32();
  if (a.dims() == b.dims()) {
    check_divisor(op, bv);
    std::vector<float> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = apply(op, av[i], bv[i]);
    return Tensor(a.dims(), std::move(out));
  }
  if (b.rank() == 1 && b.dim(0) == a.dims().back()) {
    return elementwise(op, a, b, a.rank() - 1);
  }
  throw ShapeError("elementwise shape mismatch: " + to_string(a.dims()) + " vs " +
                   to_string(b.dims()));
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b, std::size_t axis) {
  const auto av = a.f32();
  const auto bv = b.f32();
  if (b.rank() != 1 || axis >= a.rank() || b.dim(0) != a.dim(axis)) {
    throw ShapeError("cannot broadcast " + to_string(b.dims()) + " along axis " +
                     std::to_string(axis) + " of " + to_string(a.dims()));
  }
  check_divisor(op, bv);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::size_t len = a.dim(axis);
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = apply(op, av[i], bv[(i / inner) % len]);
  }
  return Tensor(a.dims(), std::move(out));
}

Tensor elementwise(BinaryOp op, const Tensor& a, float b) {
  if (op == BinaryOp::Div && b == 0.0f) throw NumericError("division by zero scalar");
  const auto av = a.f32();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = apply(op, av[i], b);
  return Tensor(a.dims(), std::move(out));
}

Tensor exp(const Tensor& a) {
  const auto av = a.f32();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  return Tensor(a.dims(), std::move(out));
}

namespace {

struct Strides {
  std::size_t outer, len, inner;
};

Strides split(const Shape& dims, std::size_t axis) {
  Strides s{1, dims[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) s.inner *= dims[i];
  return s;
}

}  // namespace

Tensor contract(const Tensor& a, const Tensor& b, std::size_t axis_a,
                std::size_t axis_b) {
  const auto av = a.f32();
  const auto bv = b.f32();
  if (axis_a >= a.rank() || axis_b >= b.rank()) {
    throw ShapeError("contract axis out of range");
  }
  if (a.dim(axis_a) != b.dim(axis_b)) {
    throw ShapeError("contract length mismatch: " + to_string(a.dims()) + " axis " +
                     std::to_string(axis_a) + " vs " + to_string(b.dims()) + " axis " +
                     std::to_string(axis_b));
  }
  const auto sa = split(a.dims(), axis_a);
  const auto sb = split(b.dims(), axis_b);

  Shape out_dims;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis_a) out_dims.push_back(a.dim(i));
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (i != axis_b) out_dims.push_back(b.dim(i));
  if (out_dims.empty()) out_dims.push_back(1);

  const std::size_t a_free = sa.outer * sa.inner;
  const std::size_t b_free = sb.outer * sb.inner;
  std::vector<float> out(a_free * b_free);
  for (std::size_t ao = 0; ao < sa.outer; ++ao)
    for (std::size_t ai = 0; ai < sa.inner; ++ai)
      for (std::size_t bo = 0; bo < sb.outer; ++bo)
        for (std::size_t bi = 0; bi < sb.inner; ++bi) {
          float acc = 0.0f;
          for (std::size_t k = 0; k < sa.len; ++k) {
            acc += av[(ao * sa.len + k) * sa.inner + ai] *
                   bv[(bo * sb.len + k) * sb.inner + bi];
          }
          out[(ao * sa.inner + ai) * b_free + bo * sb.inner + bi] = acc;
        }
  return Tensor(std::move(out_dims), std::move(out));
}

}  // namespace vimq
