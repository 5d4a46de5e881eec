#pragma once

// Rank-1 smoothing of the SSM hidden state.
//
// The hidden state h [C, L, D] is divided by r_C (x) r_L (x) r_D so the scan
// runs on a flatter h*. The division is never executed per step: it is folded
// into abar (token ratios), bbar (all three factors) and C (r_L, r_D), and r_D
// can be pushed further into the W_B / W_C projection weights. The true output
// is recovered by multiplying the per-step outputs by r_C.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vimq/quantizer.hpp"
#include "vimq/ssm.hpp"

namespace vimq {

enum class RepKind { Max, Mean, Median, Percentile, Quantile };
enum class DispKind { Same, Std, Var, Range };

struct RepFn {
  RepKind kind = RepKind::Mean;
  // Percentile: p in (0, 100]; Quantile: q in (0, 1]. Unused otherwise.
  double param = 0.0;

  static RepFn max() { return {RepKind::Max, 0.0}; }
  static RepFn mean() { return {RepKind::Mean, 0.0}; }
  static RepFn median() { return {RepKind::Median, 0.0}; }
  static RepFn percentile(double p = 99.0) { return {RepKind::Percentile, p}; }
  static RepFn quantile(double q = 0.75) { return {RepKind::Quantile, q}; }

  friend bool operator==(const RepFn&, const RepFn&) = default;
};

std::string to_string(const RepFn& rep);
std::string to_string(DispKind disp);
// "max", "mean", "median", "percentile[:p]", "quantile[:q]".
RepFn parse_rep(const std::string& name);
DispKind parse_disp(const std::string& name);

inline constexpr float kFactorFloor = 1e-6f;

struct InitialFactors {
  std::vector<float> r_c, r_l, r_d;
};

struct ReparamFactors {
  std::vector<float> r_c, r_l, r_d;
  RepFn rep;
  DispKind disp = DispKind::Std;
  // Exponents applied to the initial representatives (sum to 1).
  double e_c = 1.0 / 3, e_l = 1.0 / 3, e_d = 1.0 / 3;

  static ReparamFactors ones(std::size_t C, std::size_t L, std::size_t D);

  friend bool operator==(const ReparamFactors&, const ReparamFactors&) = default;
};

// Rep of |h| over the two complementary axes, floored at kFactorFloor.
InitialFactors rep_initial(const Tensor& h, const RepFn& rep);

// r_X = r_X0 ^ (Disp(r_X0) / sum of the three dispersions).
ReparamFactors disp_weight(const InitialFactors& r0, DispKind disp, const RepFn& rep = {});

// Token t >= 1 scaled by r_L[t-1] / r_L[t].
Tensor reparam_a(const Tensor& abar, const std::vector<float>& r_l);
// bbar / (r_C (x) r_L (x) r_D); with folded the r_D division is skipped.
Tensor reparam_b(const Tensor& bbar, const ReparamFactors& f, bool folded);
// C * (r_L (x) r_D); with folded only r_L is applied.
Tensor reparam_c(const Tensor& c, const ReparamFactors& f, bool folded);

// W_B / r_D and W_C * r_D, row-wise (rows index the state dim).
std::pair<Tensor, Tensor> fold_weights(const Tensor& w_b, const Tensor& w_c,
                                       const std::vector<float>& r_d);
// Copy of p with W_B / W_C folded.
SsmParams fold_params(const SsmParams& p, const std::vector<float>& r_d);

struct ReparamTrace {
  Tensor h_star;  // [C, L, D], the smoothed state actually carried by the scan
  Tensor y;       // [C, L], recovered output including the skip term
};

// Scan with reparameterized abar/bbar/C. `folded` must already carry r_D in
// its W_B / W_C (see fold_params). With hq set, every h*_t is fake-quantized
// before it is used.
ReparamTrace reparam_scan(const Tensor& x, const SsmParams& folded, const ReparamFactors& f,
                          std::optional<QuantParams> hq = std::nullopt,
                          const SsmOptions& opts = {});

// Lower-level form on already-discretized, unfolded operands.
ReparamTrace reparam_scan_discretized(const Tensor& abar, const Tensor& bbar, const Tensor& c,
                                      const Tensor& d_skip, const Tensor& x,
                                      const ReparamFactors& f,
                                      std::optional<QuantParams> hq = std::nullopt,
                                      kernels::Exec exec = kernels::Exec::Parallel);

// Representatives per trace, averaged, then dispersion-weighted.
ReparamFactors factors_from_calibration(const std::vector<Tensor>& h_traces, const RepFn& rep,
                                        DispKind disp);

// h* (x) r_C (x) r_L (x) r_D, mapping a smoothed state back to h.
Tensor recover_hidden(const Tensor& h_star, const ReparamFactors& f);

// ||h_t - approx_t||_F over the [C, D] slice of every step t.
std::vector<double> hidden_error_curve(const Tensor& h, const Tensor& approx);

// max|h| / median|h|.
double dynamic_range(const Tensor& h);

}  // namespace vimq
