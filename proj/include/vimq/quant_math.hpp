#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace vimq {

enum class SimilarityMetric { Cosine, NegL1, NegL2 };

// Symmetric integer range of a b-bit quantizer: [-2^(b-1), 2^(b-1)-1].
constexpr std::int32_t qmin(int bits) { return -(std::int32_t{1} << (bits - 1)); }
constexpr std::int32_t qmax(int bits) { return (std::int32_t{1} << (bits - 1)) - 1; }

// round-half-to-even of x/s, clamped. The quotient is taken in double so the
// result only depends on the two float inputs.
inline std::int32_t quantize_value(float x, float scale, int bits) {
  const double r = std::nearbyint(static_cast<double>(x) / static_cast<double>(scale));
  if (r <= qmin(bits)) return qmin(bits);
  if (r >= qmax(bits)) return qmax(bits);
  return static_cast<std::int32_t>(r);
}

inline float dequantize_value(std::int32_t q, float scale) {
  return static_cast<float>(q) * scale;
}

inline float fake_quant_value(float x, float scale, int bits) {
  return dequantize_value(quantize_value(x, scale, bits), scale);
}

// sim(y, Q(y|s)*s) for one candidate. Accumulates in double, left to right.
// A candidate that dequantizes to all zeros scores -inf under Cosine.
inline double candidate_score(std::span<const float> y, float scale, int bits,
                              SimilarityMetric metric) {
  double dot = 0.0, ny = 0.0, nq = 0.0, l1 = 0.0, l2 = 0.0;
  for (float v : y) {
    const double a = v;
    const double b = fake_quant_value(v, scale, bits);
    switch (metric) {
      case SimilarityMetric::Cosine:
        dot += a * b;
        ny += a * a;
        nq += b * b;
        break;
      case SimilarityMetric::NegL1: l1 += std::abs(a - b); break;
      case SimilarityMetric::NegL2: l2 += (a - b) * (a - b); break;
    }
  }
  switch (metric) {
    case SimilarityMetric::Cosine:
      if (ny == 0.0 || nq == 0.0) return -std::numeric_limits<double>::infinity();
      return dot / (std::sqrt(ny) * std::sqrt(nq));
    case SimilarityMetric::NegL1: return -l1;
    case SimilarityMetric::NegL2: return -std::sqrt(l2);
  }
  return 0.0;
}

}  // namespace vimq
