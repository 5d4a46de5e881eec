#pragma once

// Per-row bodies shared by the serial and OpenMP kernels so the two builds
// execute the same floating-point operations in the same order.

#include <cstddef>
#include <optional>
#include <span>

#include "vimq/kernels.hpp"

namespace vimq::kernels::detail {

inline void matmul_row(std::span<const float> w, std::span<const float> x,
                       std::span<float> out, std::size_t row, std::size_t k,
                       std::size_t n) {
  float* o = out.data() + row * n;
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      acc += static_cast<double>(w[row * k + p]) * x[p * n + j];
    }
    o[j] = static_cast<float>(acc);
  }
}

inline void scan_channel(std::span<const float> abar, std::span<const float> bbar,
                         std::span<const float> cmat, std::span<const float> x,
                         ScanDims dims, std::optional<HiddenQuant> hq,
                         std::span<float> h, std::span<float> y, std::size_t c) {
  const std::size_t L = dims.tokens, D = dims.state;
  const float* prev = nullptr;
  for (std::size_t t = 0; t < L; ++t) {
    const std::size_t base = (c * L + t) * D;
    const float xt = x[c * L + t];
    double acc = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      float v = bbar[base + d] * xt;
      if (prev) v = abar[base + d] * prev[d] + v;
      if (hq) v = fake_quant_value(v, hq->scale, hq->bits);
      h[base + d] = v;
      acc += static_cast<double>(cmat[t * D + d]) * v;
    }
    y[c * L + t] = static_cast<float>(acc);
    prev = h.data() + base;
  }
}

}  // namespace vimq::kernels::detail
