#include "vimq/vim_model.hpp"

#include <algorithm>
#include <cmath>

#include "vimq/kernels.hpp"
#include "vimq/rng.hpp"

namespace vimq {

std::string to_string(OutlierProfile p) {
  switch (p) {
    case OutlierProfile::None: return "none";
    case OutlierProfile::MiddleTokens: return "middle-tokens";
    case OutlierProfile::HeavyChannels: return "heavy-channels";
  }
  return "?";
}

OutlierProfile parse_outlier_profile(const std::string& name) {
  if (name == "none") return OutlierProfile::None;
  if (name == "middle-tokens") return OutlierProfile::MiddleTokens;
  if (name == "heavy-channels") return OutlierProfile::HeavyChannels;
  throw ConfigError("unknown outlier profile '" + name + "'");
}

const std::vector<std::string>& activation_sites() {
  static const std::vector<std::string> ids = {sites::kInProj,    sites::kConv,
                                               sites::kHiddenFwd, sites::kHiddenBwd,
                                               sites::kSsmOut,    sites::kOutProj};
  return ids;
}

const std::vector<std::string>& weight_sites() {
  static const std::vector<std::string> ids = {
      "in_proj.weight",  "conv1d.weight",  "ssm_fwd.w_delta", "ssm_fwd.w_b", "ssm_fwd.w_c",
      "ssm_bwd.w_delta", "ssm_bwd.w_b",    "ssm_bwd.w_c",     "out_proj.weight"};
  return ids;
}

std::map<std::string, Tensor> VimBlock::named_tensors() const {
  std::map<std::string, Tensor> t;
  t["norm.weight"] = norm_weight;
  t["in_proj.weight"] = in_proj;
  t["conv1d.weight"] = conv_weight;
  t["token_scale"] = token_scale;
  t["out_proj.weight"] = out_proj;
  for (const auto& [prefix, p] : {std::pair{"ssm_fwd", &ssm_fwd}, std::pair{"ssm_bwd", &ssm_bwd}}) {
    const std::string pre = prefix;
    t[pre + ".a"] = p->a;
    t[pre + ".w_delta"] = p->w_delta;
    t[pre + ".w_b"] = p->w_b;
    t[pre + ".w_c"] = p->w_c;
    t[pre + ".d_skip"] = p->d_skip;
  }
  return t;
}

void VimBlock::validate() const {
  const auto C = dims.channels, L = dims.tokens, D = dims.state;
  auto expect = [](const Tensor& t, const Shape& s, const char* name) {
    if (t.dims() != s) {
      throw ShapeError(std::string(name) + " must be " + to_string(s) + ", got " +
                       to_string(t.dims()));
    }
  };
  expect(norm_weight, {C}, "norm.weight");
  expect(in_proj, {2 * C, C}, "in_proj.weight");
  expect(conv_weight, {C, kConvWidth}, "conv1d.weight");
  expect(token_scale, {L}, "token_scale");
  expect(out_proj, {C, C}, "out_proj.weight");
  for (const auto* p : {&ssm_fwd, &ssm_bwd}) {
    p->validate();
    if (p->channels() != C || p->state() != D) throw ShapeError("SSM dims do not match block dims");
  }
}

namespace {

Tensor randn(Rng& rng, Shape dims, double stddev, double mean = 0.0) {
  std::vector<float> v(numel(dims));
  for (auto& x : v) x = static_cast<float>(rng.normal(mean, stddev));
  return Tensor(std::move(dims), std::move(v));
}

SsmParams synthetic_ssm(Rng& rng, std::size_t C, std::size_t D) {
  SsmParams p;
  std::vector<float> a(C * D);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t d = 0; d < D; ++d) a[c * D + d] = -static_cast<float>(d + 1);
  p.a = Tensor({C, D}, std::move(a));
  const double s = 1.0 / std::sqrt(static_cast<double>(C));
  p.w_delta = randn(rng, {C, C}, 0.5 * s, -1.5 * s);
  p.w_b = randn(rng, {D, C}, s);
  p.w_c = randn(rng, {D, C}, s);
  p.d_skip = Tensor::full({C}, 0.25f);
  return p;
}

Tensor scale_rows(const Tensor& w, const std::vector<std::size_t>& rows, float factor) {
  auto v = w.to_f32_vector();
  const auto cols = w.dim(1);
  for (auto r : rows)
    for (std::size_t j = 0; j < cols; ++j) v[r * cols + j] *= factor;
  return Tensor(w.dims(), std::move(v));
}

}  // namespace

VimBlock build_synthetic(std::uint64_t seed, BlockDims dims, OutlierProfile profile) {
  if (dims.channels == 0 || dims.tokens == 0 || dims.state == 0) {
    throw ShapeError("block dims must be positive");
  }
  const auto C = dims.channels, L = dims.tokens, D = dims.state;
  Rng rng(seed);
  VimBlock m;
  m.dims = dims;
  m.seed = seed;
  m.profile = profile;
  const double s = 1.0 / std::sqrt(static_cast<double>(C));
  m.norm_weight = Tensor::full({C}, 1.0f);
  m.in_proj = randn(rng, {2 * C, C}, s);
  m.conv_weight = randn(rng, {C, kConvWidth}, 0.3);
  m.ssm_fwd = synthetic_ssm(rng, C, D);
  m.ssm_bwd = synthetic_ssm(rng, C, D);
  m.out_proj = randn(rng, {C, C}, s);

  std::vector<float> gain(L, 1.0f);
  const std::vector<std::size_t> heavy = {C / 4, (3 * C) / 4};
  switch (profile) {
    case OutlierProfile::None: break;
    case OutlierProfile::MiddleTokens:
      for (std::size_t l = L / 3; l < (2 * L + 2) / 3; ++l) gain[l] = 128.0f;
      break;
    case OutlierProfile::HeavyChannels:
      m.conv_weight = scale_rows(m.conv_weight, heavy, 16.0f);
      m.out_proj = scale_rows(m.out_proj, heavy, 16.0f);
      break;
  }
  m.token_scale = Tensor({L}, std::move(gain));
  m.validate();
  return m;
}

namespace {

Tensor rmsnorm(const Tensor& x, const Tensor& w) {
  const auto C = x.dim(0), L = x.dim(1);
  const auto xv = x.f32();
  const auto wv = w.f32();
  std::vector<float> out(xv.size());
  for (std::size_t l = 0; l < L; ++l) {
    double ss = 0.0;
    for (std::size_t c = 0; c < C; ++c) ss += static_cast<double>(xv[c * L + l]) * xv[c * L + l];
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(C) + 1e-5));
    for (std::size_t c = 0; c < C; ++c) out[c * L + l] = xv[c * L + l] * inv * wv[c];
  }
  return Tensor(x.dims(), std::move(out));
}

Tensor linear(const Tensor& w, const Tensor& x) {
  const auto m = w.dim(0), k = w.dim(1), n = x.dim(1);
  if (x.dim(0) != k) {
    throw ShapeError("linear: W " + to_string(w.dims()) + " vs x " + to_string(x.dims()));
  }
  std::vector<float> out(m * n);
  kernels::omp::matmul(w.f32(), x.f32(), out, m, k, n);
  return Tensor({m, n}, std::move(out));
}

std::pair<Tensor, Tensor> split_rows(const Tensor& t, std::size_t rows) {
  const auto v = t.f32();
  const auto cols = t.dim(1);
  std::vector<float> a(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rows * cols));
  std::vector<float> b(v.begin() + static_cast<std::ptrdiff_t>(rows * cols), v.end());
  return {Tensor({rows, cols}, std::move(a)), Tensor({t.dim(0) - rows, cols}, std::move(b))};
}

Tensor conv1d_causal(const Tensor& x, const Tensor& w) {
  const auto C = x.dim(0), L = x.dim(1), K = w.dim(1);
  const auto xv = x.f32();
  const auto wv = w.f32();
  std::vector<float> out(xv.size(), 0.0f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t l = 0; l < L; ++l) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < K; ++k) {
        // Tap k reads token l - (K - 1) + k; earlier tokens are zero padding.
        if (l + k + 1 >= K) acc += wv[c * K + k] * xv[c * L + l + k + 1 - K];
      }
      out[c * L + l] = acc;
    }
  return Tensor(x.dims(), std::move(out));
}

Tensor silu(const Tensor& x) {
  const auto v = x.f32();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / (1.0f + std::exp(-v[i]));
  return Tensor(x.dims(), std::move(out));
}

Tensor gate(const Tensor& s, const Tensor& z, const Tensor& token_scale) {
  const auto sz = silu(z);
  return elementwise(BinaryOp::Mul, elementwise(BinaryOp::Mul, s, sz), token_scale, 1);
}

void check_input(const VimBlock& m, const Tensor& x) {
  if (x.dims() != Shape{m.dims.channels, m.dims.tokens}) {
    throw ShapeError("block input must be " + to_string(Shape{m.dims.channels, m.dims.tokens}) +
                     ", got " + to_string(x.dims()));
  }
}

}  // namespace

ForwardResult forward_fp(const VimBlock& m, const Tensor& x) {
  check_input(m, x);
  const auto C = m.dims.channels;
  ForwardResult r;
  const auto in = linear(m.in_proj, rmsnorm(x, m.norm_weight));
  r.taps[sites::kInProj] = in;
  const auto [xs, z] = split_rows(in, C);
  const auto v = conv1d_causal(xs, m.conv_weight);
  r.taps[sites::kConv] = v;
  const auto bi = bidirectional_scan(silu(v), m.ssm_fwd, m.ssm_bwd);
  r.taps[sites::kHiddenFwd] = bi.fwd.h;
  r.taps[sites::kHiddenBwd] = bi.bwd.h;
  r.taps[sites::kSsmOut] = bi.y;
  const auto o = linear(m.out_proj, gate(bi.y, z, m.token_scale));
  r.taps[sites::kOutProj] = o;
  r.y = elementwise(BinaryOp::Add, x, o);
  return r;
}

namespace {

Tensor qweight(const QuantConfig& qc, const std::string& id, const Tensor& w) {
  return apply_site(qc.weight(id), w);
}

struct QuantScan {
  Tensor y;
  Tensor h;  // h coordinates
};

QuantScan quant_scan(const Tensor& u, const SsmParams& p, const std::string& prefix,
                     const SiteQuant& site, const QuantConfig& qc) {
  SsmParams q = p;
  std::optional<ReparamFactors> factors;
  std::optional<QuantParams> hq;
  if (const auto* hs = std::get_if<HiddenStateSite>(&site)) {
    hq = hs->q;
    factors = hs->reparam;
  } else if (!std::holds_alternative<PassThroughSite>(site)) {
    throw ConfigError("site " + prefix + ".h must be a hidden-state or pass-through entry");
  }
  if (factors) q = fold_params(p, factors->r_d);
  q.w_delta = qweight(qc, prefix + ".w_delta", q.w_delta);
  q.w_b = qweight(qc, prefix + ".w_b", q.w_b);
  q.w_c = qweight(qc, prefix + ".w_c", q.w_c);

  if (factors) {
    auto t = reparam_scan(u, q, *factors, hq);
    return {std::move(t.y), recover_hidden(t.h_star, *factors)};
  }
  SsmOptions opts;
  if (hq) opts.hidden_quant = kernels::HiddenQuant{hq->scale, hq->bits};
  auto t = ssm_forward(u, q, opts);
  return {std::move(t.y), std::move(t.h)};
}

}  // namespace

ForwardResult forward_quant(const VimBlock& m, const QuantConfig& qc, const Tensor& x) {
  check_input(m, x);
  for (const auto& id : activation_sites()) qc.site(id);
  for (const auto& id : weight_sites()) qc.weight(id);
  for (const auto& [id, s] : qc.sites) {
    (void)s;
    if (std::find(activation_sites().begin(), activation_sites().end(), id) ==
        activation_sites().end()) {
      throw ConfigError("quant config names unknown site '" + id + "'");
    }
  }
  const auto C = m.dims.channels;
  ForwardResult r;
  auto in = linear(qweight(qc, "in_proj.weight", m.in_proj), rmsnorm(x, m.norm_weight));
  in = apply_site(qc.site(sites::kInProj), in);
  r.taps[sites::kInProj] = in;
  const auto [xs, z] = split_rows(in, C);
  auto v = conv1d_causal(xs, qweight(qc, "conv1d.weight", m.conv_weight));
  v = apply_site(qc.site(sites::kConv), v);
  r.taps[sites::kConv] = v;

  const auto u = silu(v);
  const auto fwd = quant_scan(u, m.ssm_fwd, "ssm_fwd", qc.site(sites::kHiddenFwd), qc);
  const auto bwd =
      quant_scan(reverse_tokens(u), m.ssm_bwd, "ssm_bwd", qc.site(sites::kHiddenBwd), qc);
  r.taps[sites::kHiddenFwd] = fwd.h;
  r.taps[sites::kHiddenBwd] = bwd.h;
  auto s = elementwise(BinaryOp::Add, fwd.y, reverse_tokens(bwd.y));
  s = apply_site(qc.site(sites::kSsmOut), s);
  r.taps[sites::kSsmOut] = s;

  auto o = linear(qweight(qc, "out_proj.weight", m.out_proj), gate(s, z, m.token_scale));
  o = apply_site(qc.site(sites::kOutProj), o);
  r.taps[sites::kOutProj] = o;
  r.y = elementwise(BinaryOp::Add, x, o);
  return r;
}

CalibrationSet make_inputs(const VimBlock& m, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("calibration set needs at least one sample");
  Rng rng(seed);
  CalibrationSet cs;
  cs.seed = seed;
  cs.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    cs.samples.push_back(randn(rng, {m.dims.channels, m.dims.tokens}, 1.0));
  }
  return cs;
}

}  // namespace vimq
