#include "kernel_rows.hpp"
#include "vimq/kernels.hpp"

namespace vimq::kernels::serial {

void matmul(std::span<const float> w, std::span<const float> x, std::span<float> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) detail::matmul_row(w, x, out, i, k, n);
}

void quantize(std::span<const float> x, float scale, int bits,
              std::span<std::int8_t> out) {
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<std::int8_t>(quantize_value(x[i], scale, bits));
}

void fake_quant(std::span<const float> x, float scale, int bits, std::span<float> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fake_quant_value(x[i], scale, bits);
}

std::vector<double> candidate_scores(std::span<const float> y,
                                     std::span<const float> space, int bits,
                                     SimilarityMetric metric) {
  std::vector<double> scores(space.size());
  for (std::size_t i = 0; i < space.size(); ++i)
    scores[i] = candidate_score(y, space[i], bits, metric);
  return scores;
}

void scan(std::span<const float> abar, std::span<const float> bbar,
          std::span<const float> cmat, std::span<const float> x, ScanDims dims,
          std::optional<HiddenQuant> hq, std::span<float> h, std::span<float> y) {
  for (std::size_t c = 0; c < dims.channels; ++c)
    detail::scan_channel(abar, bbar, cmat, x, dims, hq, h, y, c);
}

}  // namespace vimq::kernels::serial
