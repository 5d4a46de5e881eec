#pragma once

// k-scaled quantization: channels (or tokens) are clustered by magnitude and
// each cluster gets its own scale, stored as a right shift of the largest
// scale s1 so dequantization needs one multiplier plus integer shifts.
//
// Activations are laid out as [C, L] (channels x tokens) or, for calibration
// over several samples, [N, C, L].

#include <cstdint>
#include <string>
#include <vector>

#include "vimq/quantizer.hpp"
#include "vimq/tensor.hpp"

namespace vimq {

enum class KAxis { Channel, Token };

std::string to_string(KAxis axis);
KAxis parse_kaxis(const std::string& name);

struct KScaledParams {
  KAxis axis = KAxis::Channel;
  int k = 1;
  int bits = 8;
  // Cluster id per channel/token; cluster 0 holds the largest magnitudes.
  std::vector<std::uint32_t> assignment;
  float s1 = 1.0f;
  // Right-shift per cluster; the cluster that produced s1 has shift 0.
  std::vector<int> shifts;
  // Per-cluster scales before redefinition (diagnostic, not used to quantize).
  std::vector<float> searched_scales;

  // s1 * 2^-shift[cluster], exact.
  float effective_scale(std::size_t cluster) const;

  friend bool operator==(const KScaledParams&, const KScaledParams&) = default;
};

// log2(max|y|) per group along the axis; all-zero groups get -126.
std::vector<double> group_stats(const Tensor& y, KAxis axis);

enum class KMeansMethod {
  // Globally optimal 1-D k-means (dynamic programming over the sorted values).
  Optimal,
  // Lloyd iterations from quantile seeding.
  Lloyd,
};

struct KMeansOptions {
  KMeansMethod method = KMeansMethod::Optimal;
  int max_iters = 50;
};

struct KMeansResult {
  std::vector<std::uint32_t> assignment;
  // Cluster centroids, descending; centroid[0] is the largest.
  std::vector<double> centroids;
  int k() const { return static_cast<int>(centroids.size()); }
};

// k is reduced to the number of distinct values when larger.
KMeansResult kmeans_1d(const std::vector<double>& features, int k,
                       const KMeansOptions& opts = {});

// Sum of squared distances to each cluster's mean.
double within_cluster_ss(const std::vector<double>& features,
                         const std::vector<std::uint32_t>& assignment);

struct RedefinedScales {
  float s1;
  std::vector<int> shifts;
};

// s1 = max(scales); shift_i = round(log2(s1 / s_i)) clamped to [0, 31].
RedefinedScales redefine_scales(const std::vector<float>& scales);

Tensor quantize_kscaled(const Tensor& y, const KScaledParams& p);
// q * s1 * 2^-shift in float.
Tensor dequantize_kscaled(const Tensor& q, const KScaledParams& p);
Tensor fake_quantize_kscaled(const Tensor& y, const KScaledParams& p);

// Integer dequantization flow: every group is left-shifted onto the grid of
// the smallest effective scale, so the whole tensor shares one multiplier.
struct AlignedKScaled {
  Tensor values;  // I32
  float common_scale;
};
AlignedKScaled align_kscaled(const Tensor& q, const KScaledParams& p);

enum class ClusterScale { Similarity, MinMax };

struct KScaledOptions {
  int k = 4;
  int bits = 8;
  SimilarityMetric metric = SimilarityMetric::Cosine;
  ClusterScale cluster_scale = ClusterScale::Similarity;
  SearchSpaceOptions space{};
  KMeansOptions kmeans{};
};

KScaledParams calibrate_kscaled(const Tensor& y, KAxis axis, const KScaledOptions& opts = {});

}  // namespace vimq
