#include <algorithm>
#include <cmath>

#include "vimq/log.hpp"
#include "vimq/vim_model.hpp"

namespace vimq {

CalibrationPolicy CalibrationPolicy::named(const std::string& name) {
  CalibrationPolicy p;
  p.name = name;
  if (name == "ours") return p;
  if (name == "ours-noreparam") {
    p.reparam = false;
    return p;
  }
  if (name == "baseline") {
    p.linear = LinearMethod::MinMax;
    p.reparam = false;
    return p;
  }
  if (name == "similarity") {
    p.linear = LinearMethod::Similarity;
    p.reparam = false;
    return p;
  }
  if (name == "kscaled") {
    p.linear = LinearMethod::KScaled;
    p.reparam = false;
    return p;
  }
  if (name == "passthrough") {
    p.passthrough = true;
    p.reparam = false;
    return p;
  }
  throw ConfigError("unknown calibration policy '" + name + "'");
}

namespace {

// Stacks equally-shaped tensors into [N, ...].
Tensor stack(const std::vector<Tensor>& ts) {
  Shape dims = ts.front().dims();
  dims.insert(dims.begin(), ts.size());
  std::vector<float> v;
  v.reserve(numel(dims));
  for (const auto& t : ts) {
    if (t.dims() != ts.front().dims()) throw ShapeError("cannot stack differently shaped tensors");
    const auto s = t.f32();
    v.insert(v.end(), s.begin(), s.end());
  }
  return Tensor(std::move(dims), std::move(v));
}

MinMaxSite minmax_site(const Tensor& data, int bits) {
  return {QuantParams{minmax_scale_or_unit(data, bits), bits}};
}

SiteQuant linear_site(const Tensor& stacked, KAxis axis, const CalibrationPolicy& p) {
  switch (p.linear) {
    case LinearMethod::MinMax: return minmax_site(stacked, p.act_bits);
    case LinearMethod::Similarity: {
      const auto r = similarity_scale(stacked, p.act_bits, p.metric);
      return SimilaritySite{QuantParams{r.scale, p.act_bits}, p.metric, r.score};
    }
    case LinearMethod::KScaled:
    case LinearMethod::Both: {
      KScaledOptions o;
      o.k = p.k;
      o.bits = p.act_bits;
      o.metric = p.metric;
      o.cluster_scale =
          p.linear == LinearMethod::Both ? ClusterScale::Similarity : ClusterScale::MinMax;
      return KScaledSite{calibrate_kscaled(stacked, axis, o)};
    }
  }
  throw ConfigError("unknown linear method");
}

Tensor silu_of(const Tensor& v) {
  const auto s = v.f32();
  std::vector<float> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] / (1.0f + std::exp(-s[i]));
  return Tensor(v.dims(), std::move(out));
}

struct HiddenCalibration {
  HiddenStateSite site;
  SsmParams deployed;  // folded when reparameterized
};

HiddenCalibration calibrate_hidden(const SsmParams& ssm, const std::vector<Tensor>& inputs,
                                   const std::vector<Tensor>& h_traces,
                                   const CalibrationPolicy& p) {
  if (!p.reparam) {
    return {HiddenStateSite{QuantParams{minmax_scale_or_unit(stack(h_traces), p.hidden_bits),
                                        p.hidden_bits},
                            std::nullopt},
            ssm};
  }
  auto factors = factors_from_calibration(h_traces, p.rep, p.disp);
  const auto folded = fold_params(ssm, factors.r_d);
  std::vector<Tensor> smoothed;
  smoothed.reserve(inputs.size());
  for (const auto& u : inputs) smoothed.push_back(reparam_scan(u, folded, factors).h_star);
  const auto hs = stack(smoothed);
  QuantParams q{1.0f, p.hidden_bits};
  try {
    q.scale = similarity_scale(hs, p.hidden_bits, p.metric).scale;
  } catch (const AllZeroInput&) {
    log::warn("all-zero smoothed hidden state, falling back to scale 1.0");
  }
  return {HiddenStateSite{q, std::move(factors)}, folded};
}

}  // namespace

QuantConfig calibrate(const VimBlock& m, const CalibrationSet& cs,
                      const CalibrationPolicy& policy) {
  if (cs.samples.empty()) throw ConfigError("calibration set is empty");
  check_bits(policy.weight_bits);
  check_bits(policy.act_bits);
  check_bits(policy.hidden_bits);
  if (cs.samples.size() < 8) {
    log::warn("calibrating on only " + std::to_string(cs.samples.size()) + " sample(s)");
  }

  QuantConfig qc;
  qc.policy = policy.name;
  qc.weight_bits = policy.weight_bits;
  qc.act_bits = policy.act_bits;
  if (policy.passthrough) {
    for (const auto& id : activation_sites()) qc.sites[id] = PassThroughSite{};
    for (const auto& id : weight_sites()) qc.weights[id] = PassThroughSite{};
    return qc;
  }

  std::map<std::string, std::vector<Tensor>> taps;
  for (const auto& x : cs.samples) {
    auto r = forward_fp(m, x);
    for (auto& [id, t] : r.taps) taps[id].push_back(std::move(t));
  }

  const int ab = policy.act_bits;
  qc.sites[sites::kInProj] = minmax_site(stack(taps[sites::kInProj]), ab);
  qc.sites[sites::kSsmOut] = minmax_site(stack(taps[sites::kSsmOut]), ab);
  qc.sites[sites::kConv] = linear_site(stack(taps[sites::kConv]), KAxis::Channel, policy);
  qc.sites[sites::kOutProj] = linear_site(stack(taps[sites::kOutProj]), KAxis::Token, policy);

  std::vector<Tensor> u_fwd, u_bwd;
  for (const auto& v : taps[sites::kConv]) {
    u_fwd.push_back(silu_of(v));
    u_bwd.push_back(reverse_tokens(u_fwd.back()));
  }
  auto fwd = calibrate_hidden(m.ssm_fwd, u_fwd, taps[sites::kHiddenFwd], policy);
  auto bwd = calibrate_hidden(m.ssm_bwd, u_bwd, taps[sites::kHiddenBwd], policy);
  qc.sites[sites::kHiddenFwd] = fwd.site;
  qc.sites[sites::kHiddenBwd] = bwd.site;

  const int wb = policy.weight_bits;
  auto w = [&](const std::string& id, const Tensor& t) { qc.weights[id] = minmax_site(t, wb); };
  w("in_proj.weight", m.in_proj);
  w("conv1d.weight", m.conv_weight);
  w("out_proj.weight", m.out_proj);
  for (const auto& [prefix, deployed] :
       {std::pair<std::string, const SsmParams*>{"ssm_fwd", &fwd.deployed},
        std::pair<std::string, const SsmParams*>{"ssm_bwd", &bwd.deployed}}) {
    w(prefix + ".w_delta", deployed->w_delta);
    w(prefix + ".w_b", deployed->w_b);
    w(prefix + ".w_c", deployed->w_c);
  }
  return qc;
}

}  // namespace vimq
