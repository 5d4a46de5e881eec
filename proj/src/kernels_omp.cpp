#include <cstdint>

#include "kernel_rows.hpp"
#include "vimq/kernels.hpp"

namespace vimq::kernels::omp {

namespace {
using Index = std::int64_t;
}

void matmul(std::span<const float> w, std::span<const float> x, std::span<float> out,
            std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i)
    detail::matmul_row(w, x, out, static_cast<std::size_t>(i), k, n);
}

void quantize(std::span<const float> x, float scale, int bits,
              std::span<std::int8_t> out) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(x.size()); ++i)
    out[i] = static_cast<std::int8_t>(quantize_value(x[i], scale, bits));
}

void fake_quant(std::span<const float> x, float scale, int bits, std::span<float> out) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(x.size()); ++i)
    out[i] = fake_quant_value(x[i], scale, bits);
}

std::vector<double> candidate_scores(std::span<const float> y,
                                     std::span<const float> space, int bits,
                                     SimilarityMetric metric) {
  std::vector<double> scores(space.size());
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < static_cast<Index>(space.size()); ++i)
    scores[i] = candidate_score(y, space[i], bits, metric);
  return scores;
}

void scan(std::span<const float> abar, std::span<const float> bbar,
          std::span<const float> cmat, std::span<const float> x, ScanDims dims,
          std::optional<HiddenQuant> hq, std::span<float> h, std::span<float> y) {
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < static_cast<Index>(dims.channels); ++c)
    detail::scan_channel(abar, bbar, cmat, x, dims, hq, h, y, static_cast<std::size_t>(c));
}

}  // namespace vimq::kernels::omp
