#pragma once

// Desk-scale Vision Mamba block over pre-embedded tokens x [C, L]:
//
//   xn   = rmsnorm(x)                        per token, over channels
//   in   = W_in . xn                         [2C, L]  -> site in_proj.out
//   xs,z = split(in)
//   v    = depthwise causal conv1d(xs)       [C, L]   -> site conv1d.out
//   u    = silu(v)
//   s    = ssm_fwd(u) + flip(ssm_bwd(flip(u)))        -> sites ssm_fwd.h, ssm_bwd.h, ssm.y
//   g    = s * silu(z) * token_scale
//   o    = W_out . g                         [C, L]   -> site out_proj.out
//   out  = x + o

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vimq/quant_config.hpp"
#include "vimq/ssm.hpp"
#include "vimq/tensor.hpp"

namespace vimq {

enum class OutlierProfile { None, MiddleTokens, HeavyChannels };

std::string to_string(OutlierProfile p);
OutlierProfile parse_outlier_profile(const std::string& name);

struct BlockDims {
  std::size_t channels = 8;
  std::size_t tokens = 64;
  std::size_t state = 8;

  friend bool operator==(const BlockDims&, const BlockDims&) = default;
};

inline constexpr std::size_t kConvWidth = 4;

struct VimBlock {
  BlockDims dims;
  std::uint64_t seed = 0;
  OutlierProfile profile = OutlierProfile::None;

  Tensor norm_weight;  // [C]
  Tensor in_proj;      // [2C, C]
  Tensor conv_weight;  // [C, kConvWidth]
  SsmParams ssm_fwd;
  SsmParams ssm_bwd;
  Tensor token_scale;  // [L], fixed per-position gain ahead of out_proj
  Tensor out_proj;     // [C, C]

  // Named tensors in a fixed order (model files, weight sites).
  std::map<std::string, Tensor> named_tensors() const;
  void validate() const;

  friend bool operator==(const VimBlock&, const VimBlock&) = default;
};

namespace sites {
inline constexpr const char* kInProj = "in_proj.out";
inline constexpr const char* kConv = "conv1d.out";
inline constexpr const char* kHiddenFwd = "ssm_fwd.h";
inline constexpr const char* kHiddenBwd = "ssm_bwd.h";
inline constexpr const char* kSsmOut = "ssm.y";
inline constexpr const char* kOutProj = "out_proj.out";
}  // namespace sites

// Activation site ids, in forward order.
const std::vector<std::string>& activation_sites();
// Quantized weight ids, in a fixed order.
const std::vector<std::string>& weight_sites();

VimBlock build_synthetic(std::uint64_t seed, BlockDims dims, OutlierProfile profile);

struct ForwardResult {
  Tensor y;  // [C, L]
  // Activation per site (as consumed downstream). Hidden-state taps are the
  // [C, L, D] state in h coordinates.
  std::map<std::string, Tensor> taps;
};

ForwardResult forward_fp(const VimBlock& m, const Tensor& x);

// Fake-quantized forward. Hidden-state taps are mapped back to h coordinates
// (h* times the rank-1 factors) when the site is reparameterized.
ForwardResult forward_quant(const VimBlock& m, const QuantConfig& qc, const Tensor& x);

struct CalibrationSet {
  std::vector<Tensor> samples;
  std::uint64_t seed = 0;
};

// Seeded unit-variance token sequences [C, L].
CalibrationSet make_inputs(const VimBlock& m, std::size_t count, std::uint64_t seed);

enum class LinearMethod { MinMax, Similarity, KScaled, Both };

struct CalibrationPolicy {
  std::string name = "ours";
  // Method at the conv1d and out_proj output sites; other sites use MinMax.
  LinearMethod linear = LinearMethod::Both;
  bool reparam = true;
  bool passthrough = false;
  RepFn rep = RepFn::mean();
  DispKind disp = DispKind::Std;
  int k = 4;
  int weight_bits = 8;
  int act_bits = 8;
  int hidden_bits = 8;
  SimilarityMetric metric = SimilarityMetric::Cosine;

  // "baseline", "similarity", "kscaled", "ours", "ours-noreparam", "passthrough".
  static CalibrationPolicy named(const std::string& name);
};

QuantConfig calibrate(const VimBlock& m, const CalibrationSet& cs,
                      const CalibrationPolicy& policy);

// Model directory: manifest.json plus one QTEN file per named tensor.
void save_model(const VimBlock& m, const std::filesystem::path& dir);
VimBlock load_model(const std::filesystem::path& dir);
// FNV-1a over the manifest and tensor files.
std::string model_digest(const std::filesystem::path& dir);

}  // namespace vimq
