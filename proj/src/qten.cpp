#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vimq/tensor.hpp"

namespace vimq {
namespace {

constexpr std::uint8_t kMagic[4] = {'Q', 'T', 'E', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::size_t elem_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::I8: return 1;
    case DType::I32: return 4;
  }
  return 0;
}

}  // namespace

std::vector<std::uint8_t> encode_qten(const Tensor& t) {
  if (t.rank() > 255) throw ShapeError("QTEN supports at most 255 dims");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kQtenVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) {
    if (d > 0xFFFFFFFFu) throw ShapeError("QTEN dim exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.numel() * elem_size(t.dtype()));
  switch (t.dtype()) {
    case DType::F32:
      for (float v : t.f32()) put_u32(out, std::bit_cast<std::uint32_t>(v));
      break;
    case DType::I8:
      for (auto v : t.i8()) out.push_back(static_cast<std::uint8_t>(v));
      break;
    case DType::I32:
      for (auto v : t.i32()) put_u32(out, static_cast<std::uint32_t>(v));
      break;
  }
  return out;
}

Tensor decode_qten(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw QtenError(QtenErrorKind::BadMagic, "QTEN: bad magic");
  }
  if (bytes.size() < 10) throw QtenError(QtenErrorKind::Truncated, "QTEN: truncated header");
  const auto version = get_u32(bytes.data() + 4);
  if (version != kQtenVersion) {
    throw QtenError(QtenErrorKind::UnsupportedVersion,
                    "QTEN: unsupported version " + std::to_string(version));
  }
  const auto raw_dtype = bytes[8];
  if (raw_dtype > 2) {
    throw QtenError(QtenErrorKind::BadDType, "QTEN: unknown dtype " + std::to_string(raw_dtype));
  }
  const auto dtype = static_cast<DType>(raw_dtype);
  const std::size_t ndim = bytes[9];
  if (ndim == 0) throw QtenError(QtenErrorKind::DimMismatch, "QTEN: zero dims");
  std::size_t pos = 10;
  if (bytes.size() < pos + 4 * ndim) {
    throw QtenError(QtenErrorKind::Truncated, "QTEN: truncated dims");
  }
  Shape dims(ndim);
  std::size_t n = 1;
  for (std::size_t i = 0; i < ndim; ++i, pos += 4) {
    dims[i] = get_u32(bytes.data() + pos);
    if (dims[i] == 0) throw QtenError(QtenErrorKind::DimMismatch, "QTEN: dim of 0");
    n *= dims[i];
  }
  const std::size_t payload = n * elem_size(dtype);
  if (bytes.size() - pos < payload) {
    throw QtenError(QtenErrorKind::Truncated, "QTEN: truncated payload");
  }
  if (bytes.size() - pos > payload) {
    throw QtenError(QtenErrorKind::DimMismatch,
                    "QTEN: payload longer than dims " + to_string(dims) + " allow");
  }
  const std::uint8_t* p = bytes.data() + pos;
  switch (dtype) {
    case DType::F32: {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(get_u32(p + 4 * i));
      return Tensor(std::move(dims), std::move(v));
    }
    case DType::I8: {
      std::vector<std::int8_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int8_t>(p[i]);
      return Tensor(std::move(dims), std::move(v));
    }
    case DType::I32: {
      std::vector<std::int32_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int32_t>(get_u32(p + 4 * i));
      return Tensor(std::move(dims), std::move(v));
    }
  }
  throw QtenError(QtenErrorKind::BadDType, "QTEN: unknown dtype");
}

void write_qten(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_qten(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Tensor read_qten(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_qten(bytes);
}

}  // namespace vimq
