#pragma once

// Hot loops in two builds: `serial` is the reference implementation kept for
// testing and benchmarking, `omp` is the OpenMP version used by default. Both
// produce bit-identical results: parallelism is only over independent output
// elements, never inside a reduction.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vimq/quant_math.hpp"

namespace vimq::kernels {

enum class Exec { Serial, Parallel };

struct HiddenQuant {
  float scale;
  int bits;
};

// Dims of one selective-scan problem: channels x tokens x state size.
struct ScanDims {
  std::size_t channels, tokens, state;
};

namespace serial {
// out[m x n] = w[m x k] . x[k x n]
void matmul(std::span<const float> w, std::span<const float> x,
            std::span<float> out, std::size_t m, std::size_t k, std::size_t n);
void quantize(std::span<const float> x, float scale, int bits,
              std::span<std::int8_t> out);
void fake_quant(std::span<const float> x, float scale, int bits,
                std::span<float> out);
// One score per candidate scale, see candidate_score().
std::vector<double> candidate_scores(std::span<const float> y,
                                     std::span<const float> space, int bits,
                                     SimilarityMetric metric);
// abar, bbar, h: C x L x D; cmat: L x D; x, y: C x L. y excludes the skip term.
// With hq set, every h_t is fake-quantized before it feeds step t+1.
void scan(std::span<const float> abar, std::span<const float> bbar,
          std::span<const float> cmat, std::span<const float> x, ScanDims dims,
          std::optional<HiddenQuant> hq, std::span<float> h, std::span<float> y);
}  // namespace serial

namespace omp {
// Same contracts as serial::, parallel over independent outputs.
void matmul(std::span<const float> w, std::span<const float> x,
            std::span<float> out, std::size_t m, std::size_t k, std::size_t n);
void quantize(std::span<const float> x, float scale, int bits,
              std::span<std::int8_t> out);
void fake_quant(std::span<const float> x, float scale, int bits,
                std::span<float> out);
std::vector<double> candidate_scores(std::span<const float> y,
                                     std::span<const float> space, int bits,
                                     SimilarityMetric metric);
void scan(std::span<const float> abar, std::span<const float> bbar,
          std::span<const float> cmat, std::span<const float> x, ScanDims dims,
          std::optional<HiddenQuant> hq, std::span<float> h, std::span<float> y);
}  // namespace omp

}  // namespace vimq::kernels
