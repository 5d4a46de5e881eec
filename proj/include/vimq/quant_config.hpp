#pragma once

// QuantConfig: the persisted result of calibration. One entry per activation
// site of the block plus one per weight tensor. JSON schema (version 1):
//
//   {
//     "format": "vimq-quant-config", "version": 1,
//     "policy": "ours", "weight_bits": 8, "act_bits": 8,
//     "sites":   { "<site id>": <entry>, ... },
//     "weights": { "<weight id>": <entry>, ... }
//   }
//
// <entry> is one of
//   {"kind": "passthrough"}
//   {"kind": "minmax", "scale": s, "bits": b}
//   {"kind": "similarity", "scale": s, "bits": b, "metric": "cosine", "score": x}
//   {"kind": "kscaled", "axis": "channel"|"token", "k": k, "bits": b, "s1": s,
//    "shifts": [...], "assignment": [...], "searched_scales": [...]}
//   {"kind": "hidden", "scale": s, "bits": b,
//    "reparam": null | {"rep": "mean", "rep_param": p, "disp": "std",
//                       "exponents": [e_c, e_l, e_d],
//                       "r_c": [...], "r_l": [...], "r_d": [...]}}

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include "vimq/kscaled.hpp"
#include "vimq/quantizer.hpp"
#include "vimq/reparam.hpp"

namespace vimq {

struct PassThroughSite {
  friend bool operator==(const PassThroughSite&, const PassThroughSite&) = default;
};

struct MinMaxSite {
  QuantParams q;
  friend bool operator==(const MinMaxSite&, const MinMaxSite&) = default;
};

struct SimilaritySite {
  QuantParams q;
  SimilarityMetric metric = SimilarityMetric::Cosine;
  double score = 0.0;
  friend bool operator==(const SimilaritySite&, const SimilaritySite&) = default;
};

struct KScaledSite {
  KScaledParams p;
  friend bool operator==(const KScaledSite&, const KScaledSite&) = default;
};

struct HiddenStateSite {
  // Scale of the state the scan carries: h, or h* when reparameterized.
  QuantParams q;
  std::optional<ReparamFactors> reparam;
  friend bool operator==(const HiddenStateSite&, const HiddenStateSite&) = default;
};

using SiteQuant =
    std::variant<PassThroughSite, MinMaxSite, SimilaritySite, KScaledSite, HiddenStateSite>;

std::string site_kind(const SiteQuant& s);

struct QuantConfig {
  std::string policy;
  int weight_bits = 8;
  int act_bits = 8;
  std::map<std::string, SiteQuant> sites;
  std::map<std::string, SiteQuant> weights;

  const SiteQuant& site(const std::string& id) const;
  const SiteQuant& weight(const std::string& id) const;

  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

inline constexpr int kQuantConfigVersion = 1;

std::string to_json(const QuantConfig& qc);
QuantConfig quant_config_from_json(const std::string& text);

void write_quant_config(const QuantConfig& qc, const std::filesystem::path& path);
QuantConfig read_quant_config(const std::filesystem::path& path);

// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string digest(const QuantConfig& qc);

// Fake-quantize an activation with whatever the site holds. Hidden-state
// entries are applied per tensor with their scale.
Tensor apply_site(const SiteQuant& site, const Tensor& x);

}  // namespace vimq
