#include "vimq/kscaled.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vimq/log.hpp"

namespace vimq {

std::string to_string(KAxis axis) {
  return axis == KAxis::Channel ? "channel" : "token";
}

KAxis parse_kaxis(const std::string& name) {
  if (name == "channel") return KAxis::Channel;
  if (name == "token") return KAxis::Token;
  throw ConfigError("unknown k-scaled axis '" + name + "'");
}

float KScaledParams::effective_scale(std::size_t cluster) const {
  return std::ldexp(s1, -shifts.at(cluster));
}

namespace {

// Index arithmetic for [C, L] / [N, C, L] activations.
struct GroupLayout {
  std::size_t samples, channels, tokens;
  KAxis axis;

  static GroupLayout of(const Tensor& y, KAxis axis) {
    if (y.rank() == 2) return {1, y.dim(0), y.dim(1), axis};
    if (y.rank() == 3) return {y.dim(0), y.dim(1), y.dim(2), axis};
    throw ShapeError("k-scaled expects a [C, L] or [N, C, L] tensor, got " +
                     to_string(y.dims()));
  }
  std::size_t groups() const { return axis == KAxis::Channel ? channels : tokens; }
  std::size_t group_of(std::size_t flat) const {
    return axis == KAxis::Channel ? (flat / tokens) % channels : flat % tokens;
  }
};

void check_assignment(const GroupLayout& g, const KScaledParams& p) {
  if (p.assignment.size() != g.groups()) {
    throw ShapeError("k-scaled assignment has " + std::to_string(p.assignment.size()) +
                     " entries, tensor has " + std::to_string(g.groups()) + " " +
                     to_string(p.axis) + "s");
  }
  for (auto a : p.assignment) {
    if (a >= p.shifts.size()) throw ConfigError("k-scaled assignment out of range");
  }
}

struct DistinctValues {
  std::vector<double> values;  // ascending
  std::vector<double> weights;
  std::vector<std::size_t> index_of;  // feature -> position in values
};

DistinctValues distinct(const std::vector<double>& f) {
  std::vector<std::size_t> order(f.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
  DistinctValues d;
  d.index_of.resize(f.size());
  for (auto i : order) {
    if (d.values.empty() || f[i] != d.values.back()) {
      d.values.push_back(f[i]);
      d.weights.push_back(0.0);
    }
    d.weights.back() += 1.0;
    d.index_of[i] = d.values.size() - 1;
  }
  return d;
}

// Optimal contiguous partition of the weighted sorted values; returns the
// cluster of each distinct value in ascending order.
std::vector<std::size_t> optimal_partition(const DistinctValues& d, int k) {
  const std::size_t n = d.values.size();
  std::vector<double> pw(n + 1, 0.0), ps(n + 1, 0.0), pss(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    pw[i + 1] = pw[i] + d.weights[i];
    ps[i + 1] = ps[i] + d.weights[i] * d.values[i];
    pss[i + 1] = pss[i] + d.weights[i] * d.values[i] * d.values[i];
  }
  // SSE of values [i, j).
  auto cost = [&](std::size_t i, std::size_t j) {
    const double w = pw[j] - pw[i];
    const double s = ps[j] - ps[i];
    return std::max(0.0, (pss[j] - pss[i]) - s * s / w);
  };
  const auto K = static_cast<std::size_t>(k);
  constexpr double inf = std::numeric_limits<double>::infinity();
  // best[m][j]: first j values in m+1 clusters; split[m][j]: start of last cluster.
  std::vector<std::vector<double>> best(K, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> split(K, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t j = 1; j <= n; ++j) best[0][j] = cost(0, j);
  for (std::size_t m = 1; m < K; ++m) {
    for (std::size_t j = m + 1; j <= n; ++j) {
      for (std::size_t i = m; i < j; ++i) {
        const double c = best[m - 1][i] + cost(i, j);
        if (c < best[m][j]) {
          best[m][j] = c;
          split[m][j] = i;
        }
      }
    }
  }
  std::vector<std::size_t> cluster(n);
  std::size_t j = n;
  for (std::size_t m = K; m-- > 0;) {
    const std::size_t i = (m == 0) ? 0 : split[m][j];
    for (std::size_t t = i; t < j; ++t) cluster[t] = m;
    j = i;
  }
  return cluster;
}

std::vector<std::size_t> lloyd_partition(const DistinctValues& d, int k, int max_iters) {
  const std::size_t n = d.values.size();
  const auto K = static_cast<std::size_t>(k);
  std::vector<double> centroid(K);
  for (std::size_t c = 0; c < K; ++c) {
    centroid[c] = d.values[std::min(n - 1, (2 * c + 1) * n / (2 * K))];
  }
  std::vector<std::size_t> cluster(n, K);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t bestc = 0;
      double bestd = std::abs(d.values[i] - centroid[0]);
      for (std::size_t c = 1; c < K; ++c) {
        const double dist = std::abs(d.values[i] - centroid[c]);
        if (dist < bestd) {
          bestd = dist;
          bestc = c;
        }
      }
      if (cluster[i] != bestc) {
        cluster[i] = bestc;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(K, 0.0), w(K, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[cluster[i]] += d.weights[i] * d.values[i];
      w[cluster[i]] += d.weights[i];
    }
    for (std::size_t c = 0; c < K; ++c) {
      if (w[c] > 0.0) centroid[c] = sum[c] / w[c];
    }
  }
  return cluster;
}

}  // namespace

std::vector<double> group_stats(const Tensor& y, KAxis axis) {
  const auto g = GroupLayout::of(y, axis);
  const auto v = y.f32();
  std::vector<float> maxima(g.groups(), 0.0f);
  for (std::size_t i = 0; i < v.size(); ++i) {
    auto& m = maxima[g.group_of(i)];
    m = std::max(m, std::abs(v[i]));
  }
  std::vector<double> features(maxima.size());
  bool any_zero = false;
  for (std::size_t i = 0; i < maxima.size(); ++i) {
    if (maxima[i] == 0.0f) {
      features[i] = -126.0;
      any_zero = true;
    } else {
      features[i] = std::log2(static_cast<double>(maxima[i]));
    }
  }
  if (any_zero) log::warn("all-zero " + to_string(axis) + " group, feature floored to -126");
  return features;
}

KMeansResult kmeans_1d(const std::vector<double>& features, int k, const KMeansOptions& opts) {
  if (features.empty()) throw ConfigError("k-means on empty feature vector");
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  const auto d = distinct(features);
  if (static_cast<std::size_t>(k) > d.values.size()) {
    log::warn("k=" + std::to_string(k) + " exceeds " + std::to_string(d.values.size()) +
              " distinct values, reducing k");
    k = static_cast<int>(d.values.size());
  }
  const auto cluster = opts.method == KMeansMethod::Optimal
                           ? optimal_partition(d, k)
                           : lloyd_partition(d, k, opts.max_iters);

  // Relabel non-empty clusters by descending centroid.
  const auto K = static_cast<std::size_t>(k);
  std::vector<double> sum(K, 0.0), w(K, 0.0);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    sum[cluster[i]] += d.weights[i] * d.values[i];
    w[cluster[i]] += d.weights[i];
  }
  std::vector<std::size_t> live;
  for (std::size_t c = 0; c < K; ++c)
    if (w[c] > 0.0) live.push_back(c);
  std::stable_sort(live.begin(), live.end(), [&](std::size_t a, std::size_t b) {
    return sum[a] / w[a] > sum[b] / w[b];
  });
  std::vector<std::uint32_t> label(K, 0);
  KMeansResult r;
  for (std::size_t i = 0; i < live.size(); ++i) {
    label[live[i]] = static_cast<std::uint32_t>(i);
    r.centroids.push_back(sum[live[i]] / w[live[i]]);
  }
  r.assignment.resize(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    r.assignment[i] = label[cluster[d.index_of[i]]];
  }
  return r;
}

double within_cluster_ss(const std::vector<double>& features,
                         const std::vector<std::uint32_t>& assignment) {
  const std::size_t k =
      assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<double> sum(k, 0.0), n(k, 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    sum[assignment[i]] += features[i];
    n[assignment[i]] += 1.0;
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const double mean = sum[assignment[i]] / n[assignment[i]];
    ss += (features[i] - mean) * (features[i] - mean);
  }
  return ss;
}

RedefinedScales redefine_scales(const std::vector<float>& scales) {
  if (scales.empty()) throw ConfigError("no scales to redefine");
  for (float s : scales) {
    if (!(s > 0.0f) || !std::isfinite(s)) throw NumericError("cluster scale must be positive");
  }
  RedefinedScales r{*std::max_element(scales.begin(), scales.end()), {}};
  r.shifts.reserve(scales.size());
  for (float s : scales) {
    const double m = std::nearbyint(std::log2(static_cast<double>(r.s1) / s));
    r.shifts.push_back(static_cast<int>(std::clamp(m, 0.0, 31.0)));
  }
  return r;
}

Tensor quantize_kscaled(const Tensor& y, const KScaledParams& p) {
  check_bits(p.bits);
  const auto g = GroupLayout::of(y, p.axis);
  check_assignment(g, p);
  const auto v = y.f32();
  std::vector<float> scale(p.shifts.size());
  for (std::size_t c = 0; c < scale.size(); ++c) scale[c] = p.effective_scale(c);
  std::vector<std::int8_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericError("non-finite element in k-scaled input");
    out[i] = static_cast<std::int8_t>(
        quantize_value(v[i], scale[p.assignment[g.group_of(i)]], p.bits));
  }
  return Tensor(y.dims(), std::move(out));
}

Tensor dequantize_kscaled(const Tensor& q, const KScaledParams& p) {
  const auto g = GroupLayout::of(q, p.axis);
  check_assignment(g, p);
  const auto v = q.i8();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = dequantize_value(v[i], p.effective_scale(p.assignment[g.group_of(i)]));
  }
  return Tensor(q.dims(), std::move(out));
}

Tensor fake_quantize_kscaled(const Tensor& y, const KScaledParams& p) {
  return dequantize_kscaled(quantize_kscaled(y, p), p);
}

AlignedKScaled align_kscaled(const Tensor& q, const KScaledParams& p) {
  const auto g = GroupLayout::of(q, p.axis);
  check_assignment(g, p);
  const int max_shift = *std::max_element(p.shifts.begin(), p.shifts.end());
  // |q| <= 2^(bits-1) after shifting must stay inside int32.
  if (max_shift + p.bits > 31) {
    throw NumericError("k-scaled shift range too wide for 32-bit aligned values");
  }
  const auto v = q.i8();
  std::vector<std::int32_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int lshift = max_shift - p.shifts[p.assignment[g.group_of(i)]];
    out[i] = static_cast<std::int32_t>(v[i]) * (std::int32_t{1} << lshift);
  }
  return {Tensor(q.dims(), std::move(out)), std::ldexp(p.s1, -max_shift)};
}

KScaledParams calibrate_kscaled(const Tensor& y, KAxis axis, const KScaledOptions& opts) {
  check_bits(opts.bits);
  const auto g = GroupLayout::of(y, axis);
  const auto km = kmeans_1d(group_stats(y, axis), opts.k, opts.kmeans);

  const auto k = static_cast<std::size_t>(km.k());
  const auto v = y.f32();
  std::vector<std::vector<float>> members(k);
  for (std::size_t i = 0; i < v.size(); ++i) members[km.assignment[g.group_of(i)]].push_back(v[i]);

  std::vector<float> scales(k, 0.0f);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = members[c].size();
    const Tensor data({count}, std::move(members[c]));
    try {
      scales[c] = opts.cluster_scale == ClusterScale::Similarity
                      ? search_scale(data, opts.bits,
                                     build_search_space(data, opts.bits, opts.space),
                                     opts.metric)
                            .scale
                      : minmax_scale(data, opts.bits);
    } catch (const AllZeroInput&) {
      scales[c] = 0.0f;  // resolved below
    }
  }
  // All-zero clusters quantize to 0 at any scale; give them s1 (shift 0).
  const float top = *std::max_element(scales.begin(), scales.end());
  for (auto& s : scales) {
    if (s == 0.0f) s = top > 0.0f ? top : 1.0f;
  }
  const auto red = redefine_scales(scales);

  KScaledParams p;
  p.axis = axis;
  p.k = km.k();
  p.bits = opts.bits;
  p.assignment = km.assignment;
  p.s1 = red.s1;
  p.shifts = red.shifts;
  p.searched_scales = std::move(scales);
  return p;
}

}  // namespace vimq
