#include "vimq/ssm.hpp"

#include <cmath>

namespace vimq {

void SsmParams::validate() const {
  if (a.rank() != 2) throw ShapeError("SSM A must be [C, D], got " + to_string(a.dims()));
  const auto C = a.dim(0), D = a.dim(1);
  if (w_delta.dims() != Shape{C, C})
    throw ShapeError("SSM W_delta must be [C, C], got " + to_string(w_delta.dims()));
  if (w_b.dims() != Shape{D, C})
    throw ShapeError("SSM W_B must be [D, C], got " + to_string(w_b.dims()));
  if (w_c.dims() != Shape{D, C})
    throw ShapeError("SSM W_C must be [D, C], got " + to_string(w_c.dims()));
  if (d_skip.dims() != Shape{C})
    throw ShapeError("SSM D must be [C], got " + to_string(d_skip.dims()));
  for (float v : a.f32()) {
    if (!(v < 0.0f)) throw ShapeError("SSM A must be strictly negative");
  }
}

Tensor softplus(const Tensor& x) {
  const auto v = x.f32();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Beyond 20, log1p(exp(x)) == x in float.
    out[i] = v[i] > 20.0f ? v[i] : std::log1p(std::exp(v[i]));
  }
  return Tensor(x.dims(), std::move(out));
}

namespace {

std::vector<float> matmul(const Tensor& w, const Tensor& x, kernels::Exec exec) {
  const auto m = w.dim(0), k = w.dim(1), n = x.dim(1);
  std::vector<float> out(m * n);
  if (exec == kernels::Exec::Serial)
    kernels::serial::matmul(w.f32(), x.f32(), out, m, k, n);
  else
    kernels::omp::matmul(w.f32(), x.f32(), out, m, k, n);
  return out;
}

Tensor transposed(std::vector<float> v, std::size_t rows, std::size_t cols) {
  std::vector<float> t(v.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = v[r * cols + c];
  return Tensor({cols, rows}, std::move(t));
}

}  // namespace

Projections project_delta_b_c(const Tensor& x, const SsmParams& p, kernels::Exec exec) {
  p.validate();
  if (x.rank() != 2 || x.dim(0) != p.channels()) {
    throw ShapeError("SSM input must be [" + std::to_string(p.channels()) + ", L], got " +
                     to_string(x.dims()));
  }
  const auto C = p.channels(), D = p.state(), L = x.dim(1);
  Projections out;
  out.delta = softplus(Tensor({C, L}, matmul(p.w_delta, x, exec)));
  out.b = transposed(matmul(p.w_b, x, exec), D, L);
  out.c = transposed(matmul(p.w_c, x, exec), D, L);
  return out;
}

Discretized discretize(const Tensor& delta, const Tensor& a, const Tensor& b,
                       Discretization mode) {
  if (delta.rank() != 2 || a.rank() != 2 || b.rank() != 2 || delta.dim(0) != a.dim(0) ||
      b.dim(0) != delta.dim(1) || b.dim(1) != a.dim(1)) {
    throw ShapeError("discretize shapes: delta " + to_string(delta.dims()) + ", A " +
                     to_string(a.dims()) + ", B " + to_string(b.dims()));
  }
  const auto C = a.dim(0), D = a.dim(1), L = delta.dim(1);
  const auto dv = delta.f32();
  const auto av = a.f32();
  const auto bv = b.f32();
  std::vector<float> abar(C * L * D), bbar(C * L * D);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t l = 0; l < L; ++l) {
      const float dt = dv[c * L + l];
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = (c * L + l) * D + d;
        const float ad = av[c * D + d];
        abar[i] = std::exp(dt * ad);
        if (mode == Discretization::Simplified) {
          bbar[i] = dt * bv[l * D + d];
        } else {
          bbar[i] = std::expm1(dt * ad) / ad * bv[l * D + d];
        }
      }
    }
  return {Tensor({C, L, D}, std::move(abar)), Tensor({C, L, D}, std::move(bbar))};
}

ScanTrace selective_scan(const Tensor& abar, const Tensor& bbar, const Tensor& c,
                         const Tensor& d_skip, const Tensor& x,
                         std::optional<kernels::HiddenQuant> hq, kernels::Exec exec) {
  if (abar.rank() != 3 || bbar.dims() != abar.dims()) {
    throw ShapeError("scan: abar " + to_string(abar.dims()) + " vs bbar " +
                     to_string(bbar.dims()));
  }
  const kernels::ScanDims dims{abar.dim(0), abar.dim(1), abar.dim(2)};
  if (c.dims() != Shape{dims.tokens, dims.state})
    throw ShapeError("scan: C must be [L, D], got " + to_string(c.dims()));
  if (x.dims() != Shape{dims.channels, dims.tokens})
    throw ShapeError("scan: x must be [C, L], got " + to_string(x.dims()));
  if (d_skip.dims() != Shape{dims.channels})
    throw ShapeError("scan: D must be [C], got " + to_string(d_skip.dims()));

  std::vector<float> h(abar.numel()), y(x.numel());
  if (exec == kernels::Exec::Serial)
    kernels::serial::scan(abar.f32(), bbar.f32(), c.f32(), x.f32(), dims, hq, h, y);
  else
    kernels::omp::scan(abar.f32(), bbar.f32(), c.f32(), x.f32(), dims, hq, h, y);

  const auto xv = x.f32();
  const auto dv = d_skip.f32();
  for (std::size_t ch = 0; ch < dims.channels; ++ch)
    for (std::size_t t = 0; t < dims.tokens; ++t) {
      y[ch * dims.tokens + t] += dv[ch] * xv[ch * dims.tokens + t];
    }
  return {Tensor(abar.dims(), std::move(h)), Tensor(x.dims(), std::move(y))};
}

ScanTrace ssm_forward(const Tensor& x, const SsmParams& p, const SsmOptions& opts) {
  const auto proj = project_delta_b_c(x, p, opts.exec);
  const auto disc = discretize(proj.delta, p.a, proj.b, opts.discretization);
  return selective_scan(disc.abar, disc.bbar, proj.c, p.d_skip, x, opts.hidden_quant,
                        opts.exec);
}

Tensor reverse_tokens(const Tensor& t) {
  const auto v = t.f32();
  std::size_t outer, L, inner;
  if (t.rank() == 2) {
    outer = t.dim(0), L = t.dim(1), inner = 1;
  } else if (t.rank() == 3) {
    outer = t.dim(0), L = t.dim(1), inner = t.dim(2);
  } else {
    throw ShapeError("reverse_tokens expects [C, L] or [C, L, D], got " + to_string(t.dims()));
  }
  std::vector<float> out(v.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t i = 0; i < inner; ++i)
        out[(o * L + l) * inner + i] = v[(o * L + (L - 1 - l)) * inner + i];
  return Tensor(t.dims(), std::move(out));
}

BidirectionalTrace bidirectional_scan(const Tensor& x, const SsmParams& fwd,
                                      const SsmParams& bwd, const SsmOptions& opts) {
  if (fwd.a.dims() != bwd.a.dims()) {
    throw ShapeError("bidirectional scan: forward A " + to_string(fwd.a.dims()) +
                     " vs backward A " + to_string(bwd.a.dims()));
  }
  BidirectionalTrace out;
  out.fwd = ssm_forward(x, fwd, opts);
  out.bwd = ssm_forward(reverse_tokens(x), bwd, opts);
  out.y = elementwise(BinaryOp::Add, out.fwd.y, reverse_tokens(out.bwd.y));
  return out;
}

}  // namespace vimq
