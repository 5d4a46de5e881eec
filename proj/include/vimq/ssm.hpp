#pragma once

// Selective state-space scan.
//
// Shapes: x, y, delta are [C, L] (channels x tokens); B and C projections are
// [L, D]; A is [C, D]; discretized A/B and the hidden state are [C, L, D].

#include <optional>

#include "vimq/kernels.hpp"
#include "vimq/tensor.hpp"

namespace vimq {

struct SsmParams {
  Tensor a;        // [C, D], strictly negative
  Tensor w_delta;  // [C, C]
  Tensor w_b;      // [D, C]
  Tensor w_c;      // [D, C]
  Tensor d_skip;   // [C]

  std::size_t channels() const { return a.dim(0); }
  std::size_t state() const { return a.dim(1); }
  // Throws ShapeError on inconsistent weights or a non-negative A entry.
  void validate() const;

  friend bool operator==(const SsmParams&, const SsmParams&) = default;
};

// log(1 + exp(x)), returning x itself once exp(x) would swamp the 1.
Tensor softplus(const Tensor& x);

struct Projections {
  Tensor delta;  // [C, L], softplus(W_delta . x)
  Tensor b;      // [L, D], (W_B . x)^T
  Tensor c;      // [L, D], (W_C . x)^T
};

Projections project_delta_b_c(const Tensor& x, const SsmParams& p,
                              kernels::Exec exec = kernels::Exec::Parallel);

enum class Discretization {
  // bbar = delta * B, the form the reparameterization algebra folds through.
  Simplified,
  // Exact zero-order hold for diagonal A: bbar = (exp(delta*A) - 1) / A * B.
  ZeroOrderHold,
};

struct Discretized {
  Tensor abar;  // [C, L, D]
  Tensor bbar;  // [C, L, D]
};

Discretized discretize(const Tensor& delta, const Tensor& a, const Tensor& b,
                       Discretization mode = Discretization::Simplified);

struct ScanTrace {
  Tensor h;  // [C, L, D]
  Tensor y;  // [C, L]
};

// h_t = abar_t * h_{t-1} + bbar_t * x_t with h_0 = 0,
// y_t = C_t . h_t + d_skip * x_t.
// With hq set, each h_t is fake-quantized before it is used.
ScanTrace selective_scan(const Tensor& abar, const Tensor& bbar, const Tensor& c,
                         const Tensor& d_skip, const Tensor& x,
                         std::optional<kernels::HiddenQuant> hq = std::nullopt,
                         kernels::Exec exec = kernels::Exec::Parallel);

struct SsmOptions {
  Discretization discretization = Discretization::Simplified;
  std::optional<kernels::HiddenQuant> hidden_quant;
  kernels::Exec exec = kernels::Exec::Parallel;
};

// project -> discretize -> scan.
ScanTrace ssm_forward(const Tensor& x, const SsmParams& p, const SsmOptions& opts = {});

// Reverse the token axis (last axis of [C, L], middle axis of [C, L, D]).
Tensor reverse_tokens(const Tensor& t);

struct BidirectionalTrace {
  ScanTrace fwd;
  // Scan of the token-reversed input, in its own (reversed) time order.
  ScanTrace bwd;
  Tensor y;  // fwd.y + reverse_tokens(bwd.y)
};

BidirectionalTrace bidirectional_scan(const Tensor& x, const SsmParams& fwd,
                                      const SsmParams& bwd, const SsmOptions& opts = {});

}  // namespace vimq
