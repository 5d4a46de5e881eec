#pragma once

#include <vector>

#include "vimq/kernels.hpp"
#include "vimq/quant_math.hpp"
#include "vimq/tensor.hpp"

namespace vimq {

// Per-tensor symmetric quantizer for one site.
struct QuantParams {
  float scale = 1.0f;
  int bits = 8;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

class AllZeroInput : public NumericError {
 public:
  AllZeroInput() : NumericError("all-zero tensor has no MinMax scale") {}
};

void check_bits(int bits);

// max|x| / (2^(b-1) - 1).
float minmax_scale(const Tensor& x, int bits);
// Same, but an all-zero tensor yields 1.0 with a warning.
float minmax_scale_or_unit(const Tensor& x, int bits);

Tensor quantize_at(const Tensor& x, float scale, int bits,
                   kernels::Exec exec = kernels::Exec::Parallel);
Tensor dequantize(const Tensor& q, float scale);
// quantize_at followed by dequantize, staying in F32.
Tensor fake_quantize(const Tensor& x, float scale, int bits,
                     kernels::Exec exec = kernels::Exec::Parallel);

// Higher is better for every metric; NegL1/NegL2 are negated distances.
double similarity(const Tensor& a, const Tensor& b, SimilarityMetric metric);

struct SearchSpaceOptions {
  int n_points = 100;
  float lo_frac = 0.2f;
  float hi_frac = 1.2f;
};

// n_points scales spaced linearly over [lo_frac, hi_frac] x minmax_scale(y).
// Both endpoints are exact multiples of the MinMax scale.
std::vector<float> build_search_space(const Tensor& y, int bits,
                                      const SearchSpaceOptions& opts = {});

struct ScaleSearchResult {
  float scale;
  double score;
};

// argmax over the space of sim(y, Q(y|s) * s); equal scores go to the larger
// scale.
ScaleSearchResult search_scale(const Tensor& y, int bits, const std::vector<float>& space,
                               SimilarityMetric metric = SimilarityMetric::Cosine,
                               kernels::Exec exec = kernels::Exec::Parallel);

// build_search_space + search_scale.
ScaleSearchResult similarity_scale(const Tensor& y, int bits,
                                   SimilarityMetric metric = SimilarityMetric::Cosine,
                                   const SearchSpaceOptions& opts = {});

std::string to_string(SimilarityMetric metric);
SimilarityMetric parse_metric(const std::string& name);

}  // namespace vimq
