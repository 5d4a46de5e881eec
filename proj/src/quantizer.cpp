#include "vimq/quantizer.hpp"

#include <cmath>

#include "vimq/log.hpp"

namespace vimq {

void check_bits(int bits) {
  if (bits < 2 || bits > 8) {
    throw ConfigError("bitwidth must be in [2, 8], got " + std::to_string(bits));
  }
}

namespace {

void check_scale(float scale) {
  if (!(scale > 0.0f) || !std::isfinite(scale)) {
    throw NumericError("quantization scale must be positive and finite");
  }
}

float max_abs(std::span<const float> v) {
  float m = 0.0f;
  for (float x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

float minmax_scale(const Tensor& x, int bits) {
  check_bits(bits);
  const float m = max_abs(x.f32());
  if (m == 0.0f) throw AllZeroInput();
  if (!std::isfinite(m)) throw NumericError("non-finite value in MinMax calibration");
  return m / static_cast<float>(qmax(bits));
}

float minmax_scale_or_unit(const Tensor& x, int bits) {
  try {
    return minmax_scale(x, bits);
  } catch (const AllZeroInput&) {
    log::warn("all-zero calibration tensor, falling back to scale 1.0");
    return 1.0f;
  }
}

Tensor quantize_at(const Tensor& x, float scale, int bits, kernels::Exec exec) {
  check_bits(bits);
  check_scale(scale);
  const auto xv = x.f32();
  for (float v : xv) {
    if (!std::isfinite(v)) throw NumericError("non-finite element in quantize_at input");
  }
  std::vector<std::int8_t> out(xv.size());
  if (exec == kernels::Exec::Serial)
    kernels::serial::quantize(xv, scale, bits, out);
  else
    kernels::omp::quantize(xv, scale, bits, out);
  return Tensor(x.dims(), std::move(out));
}

Tensor dequantize(const Tensor& q, float scale) {
  std::vector<float> out(q.numel());
  if (q.dtype() == DType::I8) {
    const auto v = q.i8();
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = dequantize_value(v[i], scale);
  } else if (q.dtype() == DType::I32) {
    const auto v = q.i32();
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = dequantize_value(v[i], scale);
  } else {
    throw ShapeError("dequantize expects an integer tensor");
  }
  return Tensor(q.dims(), std::move(out));
}

Tensor fake_quantize(const Tensor& x, float scale, int bits, kernels::Exec exec) {
  check_bits(bits);
  check_scale(scale);
  const auto xv = x.f32();
  std::vector<float> out(xv.size());
  if (exec == kernels::Exec::Serial)
    kernels::serial::fake_quant(xv, scale, bits, out);
  else
    kernels::omp::fake_quant(xv, scale, bits, out);
  return Tensor(x.dims(), std::move(out));
}

double similarity(const Tensor& a, const Tensor& b, SimilarityMetric metric) {
  if (a.dims() != b.dims()) {
    throw ShapeError("similarity shape mismatch: " + to_string(a.dims()) + " vs " +
                     to_string(b.dims()));
  }
  const auto av = a.f32();
  const auto bv = b.f32();
  double dot = 0.0, na = 0.0, nb = 0.0, l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i], y = bv[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
    l1 += std::abs(x - y);
    l2 += (x - y) * (x - y);
  }
  switch (metric) {
    case SimilarityMetric::Cosine:
      if (na == 0.0 || nb == 0.0) throw NumericError("cosine similarity of a zero-norm tensor");
      return dot / (std::sqrt(na) * std::sqrt(nb));
    case SimilarityMetric::NegL1: return -l1;
    case SimilarityMetric::NegL2: return -std::sqrt(l2);
  }
  return 0.0;
}

std::vector<float> build_search_space(const Tensor& y, int bits,
                                      const SearchSpaceOptions& opts) {
  if (opts.n_points < 2) throw ConfigError("search space needs at least 2 points");
  if (!(opts.lo_frac > 0.0f) || !(opts.lo_frac < opts.hi_frac)) {
    throw ConfigError("search space requires 0 < lo_frac < hi_frac");
  }
  const double base = minmax_scale(y, bits);
  const auto n = opts.n_points;
  std::vector<float> space(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double w = static_cast<double>(i) / (n - 1);
    const double frac = (i == 0)       ? opts.lo_frac
                        : (i == n - 1) ? opts.hi_frac
                                       : opts.lo_frac * (1.0 - w) + opts.hi_frac * w;
    space[static_cast<std::size_t>(i)] = static_cast<float>(base * frac);
  }
  return space;
}

ScaleSearchResult search_scale(const Tensor& y, int bits, const std::vector<float>& space,
                               SimilarityMetric metric, kernels::Exec exec) {
  check_bits(bits);
  if (space.empty()) throw ConfigError("empty scale search space");
  for (float s : space) check_scale(s);
  const auto yv = y.f32();
  const auto scores = exec == kernels::Exec::Serial
                          ? kernels::serial::candidate_scores(yv, space, bits, metric)
                          : kernels::omp::candidate_scores(yv, space, bits, metric);
  ScaleSearchResult best{space[0], scores[0]};
  for (std::size_t i = 1; i < space.size(); ++i) {
    if (scores[i] > best.score || (scores[i] == best.score && space[i] > best.scale)) {
      best = {space[i], scores[i]};
    }
  }
  return best;
}

ScaleSearchResult similarity_scale(const Tensor& y, int bits, SimilarityMetric metric,
                                   const SearchSpaceOptions& opts) {
  return search_scale(y, bits, build_search_space(y, bits, opts), metric);
}

std::string to_string(SimilarityMetric metric) {
  switch (metric) {
    case SimilarityMetric::Cosine: return "cosine";
    case SimilarityMetric::NegL1: return "l1";
    case SimilarityMetric::NegL2: return "l2";
  }
  return "?";
}

SimilarityMetric parse_metric(const std::string& name) {
  if (name == "cosine") return SimilarityMetric::Cosine;
  if (name == "l1") return SimilarityMetric::NegL1;
  if (name == "l2") return SimilarityMetric::NegL2;
  throw ConfigError("unknown similarity metric '" + name + "'");
}

}  // namespace vimq
