#include "vimq/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vimq {

std::string to_string(const RepFn& rep) {
  switch (rep.kind) {
    case RepKind::Max: return "max";
    case RepKind::Mean: return "mean";
    case RepKind::Median: return "median";
    case RepKind::Percentile: return "percentile";
    case RepKind::Quantile: return "quantile";
  }
  return "?";
}

std::string to_string(DispKind disp) {
  switch (disp) {
    case DispKind::Same: return "same";
    case DispKind::Std: return "std";
    case DispKind::Var: return "var";
    case DispKind::Range: return "range";
  }
  return "?";
}

RepFn parse_rep(const std::string& name) {
  const auto colon = name.find(':');
  const auto head = name.substr(0, colon);
  std::optional<double> param;
  if (colon != std::string::npos) {
    try {
      param = std::stod(name.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad representative parameter in '" + name + "'");
    }
  }
  if (head == "max") return RepFn::max();
  if (head == "mean") return RepFn::mean();
  if (head == "median") return RepFn::median();
  if (head == "percentile") {
    const double p = param.value_or(99.0);
    if (!(p > 0.0 && p <= 100.0)) throw ConfigError("percentile must be in (0, 100]");
    return RepFn::percentile(p);
  }
  if (head == "quantile") {
    const double q = param.value_or(0.75);
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("quantile must be in (0, 1]");
    return RepFn::quantile(q);
  }
  throw ConfigError("unknown representative function '" + name + "'");
}

DispKind parse_disp(const std::string& name) {
  if (name == "same") return DispKind::Same;
  if (name == "std") return DispKind::Std;
  if (name == "var") return DispKind::Var;
  if (name == "range") return DispKind::Range;
  throw ConfigError("unknown dispersion function '" + name + "'");
}

ReparamFactors ReparamFactors::ones(std::size_t C, std::size_t L, std::size_t D) {
  ReparamFactors f;
  f.r_c.assign(C, 1.0f);
  f.r_l.assign(L, 1.0f);
  f.r_d.assign(D, 1.0f);
  return f;
}

namespace {

// Linear interpolation between order statistics, q in [0, 1].
double quantile_of(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

double representative(std::vector<double>& v, const RepFn& rep) {
  switch (rep.kind) {
    case RepKind::Max: return *std::max_element(v.begin(), v.end());
    case RepKind::Mean: {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    }
    case RepKind::Median: return quantile_of(v, 0.5);
    case RepKind::Percentile: return quantile_of(v, rep.param / 100.0);
    case RepKind::Quantile: return quantile_of(v, rep.param);
  }
  return 0.0;
}

double dispersion(const std::vector<float>& v, DispKind disp) {
  if (disp == DispKind::Same) return 1.0;
  if (disp == DispKind::Range) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return static_cast<double>(*hi) - static_cast<double>(*lo);
  }
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (float x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return disp == DispKind::Var ? var : std::sqrt(var);
}

float floored(double v) { return std::max(kFactorFloor, static_cast<float>(v)); }

void check_factors(const Tensor& t, const ReparamFactors& f) {
  if (t.rank() != 3 || f.r_c.size() != t.dim(0) || f.r_l.size() != t.dim(1) ||
      f.r_d.size() != t.dim(2)) {
    throw ShapeError("reparameterization factors [" + std::to_string(f.r_c.size()) + ", " +
                     std::to_string(f.r_l.size()) + ", " + std::to_string(f.r_d.size()) +
                     "] do not match " + to_string(t.dims()));
  }
}

}  // namespace

InitialFactors rep_initial(const Tensor& h, const RepFn& rep) {
  if (h.rank() != 3) throw ShapeError("hidden state must be [C, L, D], got " + to_string(h.dims()));
  const auto C = h.dim(0), L = h.dim(1), D = h.dim(2);
  const auto v = h.f32();
  bool nonzero = false;
  for (float x : v) nonzero = nonzero || x != 0.0f;
  if (!nonzero) throw NumericError("cannot derive reparameterization factors from all-zero h");

  auto abs_at = [&](std::size_t c, std::size_t l, std::size_t d) {
    return static_cast<double>(std::abs(v[(c * L + l) * D + d]));
  };
  InitialFactors r0;
  std::vector<double> buf;
  for (std::size_t c = 0; c < C; ++c) {
    buf.clear();
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t d = 0; d < D; ++d) buf.push_back(abs_at(c, l, d));
    r0.r_c.push_back(floored(representative(buf, rep)));
  }
  for (std::size_t l = 0; l < L; ++l) {
    buf.clear();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t d = 0; d < D; ++d) buf.push_back(abs_at(c, l, d));
    r0.r_l.push_back(floored(representative(buf, rep)));
  }
  for (std::size_t d = 0; d < D; ++d) {
    buf.clear();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t l = 0; l < L; ++l) buf.push_back(abs_at(c, l, d));
    r0.r_d.push_back(floored(representative(buf, rep)));
  }
  return r0;
}

ReparamFactors disp_weight(const InitialFactors& r0, DispKind disp, const RepFn& rep) {
  const double dc = dispersion(r0.r_c, disp);
  const double dl = dispersion(r0.r_l, disp);
  const double dd = dispersion(r0.r_d, disp);
  const double sum = dc + dl + dd;

  ReparamFactors f;
  f.rep = rep;
  f.disp = disp;
  if (sum > 0.0) {
    f.e_c = dc / sum;
    f.e_l = dl / sum;
    f.e_d = dd / sum;
  }
  auto apply = [](const std::vector<float>& base, double e) {
    std::vector<float> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      out[i] = floored(std::pow(static_cast<double>(base[i]), e));
    }
    return out;
  };
  f.r_c = apply(r0.r_c, f.e_c);
  f.r_l = apply(r0.r_l, f.e_l);
  f.r_d = apply(r0.r_d, f.e_d);
  return f;
}

Tensor reparam_a(const Tensor& abar, const std::vector<float>& r_l) {
  if (abar.rank() != 3 || r_l.size() != abar.dim(1)) {
    throw ShapeError("reparam_a: r_L of length " + std::to_string(r_l.size()) + " vs " +
                     to_string(abar.dims()));
  }
  const auto C = abar.dim(0), L = abar.dim(1), D = abar.dim(2);
  const auto v = abar.f32();
  std::vector<float> out(v.begin(), v.end());
  for (std::size_t l = 1; l < L; ++l) {
    const float ratio = r_l[l - 1] / r_l[l];
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t d = 0; d < D; ++d) out[(c * L + l) * D + d] *= ratio;
  }
  return Tensor(abar.dims(), std::move(out));
}

Tensor reparam_b(const Tensor& bbar, const ReparamFactors& f, bool folded) {
  check_factors(bbar, f);
  const auto C = bbar.dim(0), L = bbar.dim(1), D = bbar.dim(2);
  const auto v = bbar.f32();
  std::vector<float> out(v.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t l = 0; l < L; ++l) {
      const float cl = f.r_c[c] * f.r_l[l];
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = (c * L + l) * D + d;
        out[i] = folded ? v[i] / cl : v[i] / (cl * f.r_d[d]);
      }
    }
  return Tensor(bbar.dims(), std::move(out));
}

Tensor reparam_c(const Tensor& c, const ReparamFactors& f, bool folded) {
  if (c.rank() != 2 || c.dim(0) != f.r_l.size() || c.dim(1) != f.r_d.size()) {
    throw ShapeError("reparam_c: C " + to_string(c.dims()) + " vs factors [" +
                     std::to_string(f.r_l.size()) + ", " + std::to_string(f.r_d.size()) + "]");
  }
  const auto L = c.dim(0), D = c.dim(1);
  const auto v = c.f32();
  std::vector<float> out(v.size());
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t d = 0; d < D; ++d) {
      const std::size_t i = l * D + d;
      out[i] = folded ? v[i] * f.r_l[l] : v[i] * (f.r_l[l] * f.r_d[d]);
    }
  return Tensor(c.dims(), std::move(out));
}

std::pair<Tensor, Tensor> fold_weights(const Tensor& w_b, const Tensor& w_c,
                                       const std::vector<float>& r_d) {
  if (w_b.rank() != 2 || w_c.rank() != 2 || w_b.dim(0) != r_d.size() ||
      w_c.dim(0) != r_d.size()) {
    throw ShapeError("fold_weights: r_D of length " + std::to_string(r_d.size()) +
                     " vs W_B " + to_string(w_b.dims()) + ", W_C " + to_string(w_c.dims()));
  }
  const Tensor rd({r_d.size()}, std::vector<float>(r_d));
  return {elementwise(BinaryOp::Div, w_b, rd, 0), elementwise(BinaryOp::Mul, w_c, rd, 0)};
}

SsmParams fold_params(const SsmParams& p, const std::vector<float>& r_d) {
  SsmParams out = p;
  std::tie(out.w_b, out.w_c) = fold_weights(p.w_b, p.w_c, r_d);
  return out;
}

namespace {

ReparamTrace run_reparam(const Tensor& abar_star, const Tensor& bbar_star,
                         const Tensor& c_star, const Tensor& d_skip, const Tensor& x,
                         const ReparamFactors& f, std::optional<QuantParams> hq,
                         kernels::Exec exec) {
  std::optional<kernels::HiddenQuant> khq;
  if (hq) {
    check_bits(hq->bits);
    khq = kernels::HiddenQuant{hq->scale, hq->bits};
  }
  const auto zero_skip = Tensor::zeros(DType::F32, d_skip.dims());
  auto trace = selective_scan(abar_star, bbar_star, c_star, zero_skip, x, khq, exec);

  const auto C = x.dim(0), L = x.dim(1);
  const auto ys = trace.y.f32();
  const auto xv = x.f32();
  const auto dv = d_skip.f32();
  std::vector<float> y(ys.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t i = c * L + t;
      y[i] = ys[i] * f.r_c[c] + dv[c] * xv[i];
    }
  return {std::move(trace.h), Tensor(x.dims(), std::move(y))};
}

}  // namespace

ReparamTrace reparam_scan(const Tensor& x, const SsmParams& folded, const ReparamFactors& f,
                          std::optional<QuantParams> hq, const SsmOptions& opts) {
  const auto proj = project_delta_b_c(x, folded, opts.exec);
  const auto disc = discretize(proj.delta, folded.a, proj.b, opts.discretization);
  check_factors(disc.abar, f);
  return run_reparam(reparam_a(disc.abar, f.r_l), reparam_b(disc.bbar, f, true),
                     reparam_c(proj.c, f, true), folded.d_skip, x, f, hq, opts.exec);
}

ReparamTrace reparam_scan_discretized(const Tensor& abar, const Tensor& bbar, const Tensor& c,
                                      const Tensor& d_skip, const Tensor& x,
                                      const ReparamFactors& f, std::optional<QuantParams> hq,
                                      kernels::Exec exec) {
  check_factors(abar, f);
  return run_reparam(reparam_a(abar, f.r_l), reparam_b(bbar, f, false), reparam_c(c, f, false),
                     d_skip, x, f, hq, exec);
}

ReparamFactors factors_from_calibration(const std::vector<Tensor>& h_traces, const RepFn& rep,
                                        DispKind disp) {
  if (h_traces.empty()) throw ConfigError("no hidden-state traces to calibrate factors on");
  std::vector<double> sc, sl, sd;
  for (const auto& h : h_traces) {
    const auto r0 = rep_initial(h, rep);
    if (sc.empty()) {
      sc.assign(r0.r_c.size(), 0.0);
      sl.assign(r0.r_l.size(), 0.0);
      sd.assign(r0.r_d.size(), 0.0);
    } else if (sc.size() != r0.r_c.size() || sl.size() != r0.r_l.size() ||
               sd.size() != r0.r_d.size()) {
      throw ShapeError("calibration traces differ in shape");
    }
    for (std::size_t i = 0; i < sc.size(); ++i) sc[i] += r0.r_c[i];
    for (std::size_t i = 0; i < sl.size(); ++i) sl[i] += r0.r_l[i];
    for (std::size_t i = 0; i < sd.size(); ++i) sd[i] += r0.r_d[i];
  }
  const double n = static_cast<double>(h_traces.size());
  auto mean = [n](const std::vector<double>& s) {
    std::vector<float> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = floored(s[i] / n);
    return out;
  };
  return disp_weight({mean(sc), mean(sl), mean(sd)}, disp, rep);
}

Tensor recover_hidden(const Tensor& h_star, const ReparamFactors& f) {
  check_factors(h_star, f);
  const auto C = h_star.dim(0), L = h_star.dim(1), D = h_star.dim(2);
  const auto v = h_star.f32();
  std::vector<float> out(v.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t l = 0; l < L; ++l) {
      const float cl = f.r_c[c] * f.r_l[l];
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = (c * L + l) * D + d;
        out[i] = v[i] * (cl * f.r_d[d]);
      }
    }
  return Tensor(h_star.dims(), std::move(out));
}

std::vector<double> hidden_error_curve(const Tensor& h, const Tensor& approx) {
  if (h.rank() != 3 || h.dims() != approx.dims()) {
    throw ShapeError("hidden_error_curve: " + to_string(h.dims()) + " vs " +
                     to_string(approx.dims()));
  }
  const auto C = h.dim(0), L = h.dim(1), D = h.dim(2);
  const auto a = h.f32();
  const auto b = approx.f32();
  std::vector<double> curve(L, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = (c * L + l) * D + d;
        const double e = static_cast<double>(a[i]) - b[i];
        curve[l] += e * e;
      }
  for (auto& e : curve) e = std::sqrt(e);
  return curve;
}

double dynamic_range(const Tensor& h) {
  const auto v = h.f32();
  std::vector<double> mags(v.begin(), v.end());
  for (auto& m : mags) m = std::abs(m);
  const double mx = *std::max_element(mags.begin(), mags.end());
  const double med = quantile_of(mags, 0.5);
  if (med == 0.0) return std::numeric_limits<double>::infinity();
  return mx / med;
}

}  // namespace vimq
