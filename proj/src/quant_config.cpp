#include "vimq/quant_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vimq/digest.hpp"

namespace vimq {

using json = nlohmann::json;

std::string site_kind(const SiteQuant& s) {
  struct {
    std::string operator()(const PassThroughSite&) const { return "passthrough"; }
    std::string operator()(const MinMaxSite&) const { return "minmax"; }
    std::string operator()(const SimilaritySite&) const { return "similarity"; }
    std::string operator()(const KScaledSite&) const { return "kscaled"; }
    std::string operator()(const HiddenStateSite&) const { return "hidden"; }
  } visitor;
  return std::visit(visitor, s);
}

const SiteQuant& QuantConfig::site(const std::string& id) const {
  const auto it = sites.find(id);
  if (it == sites.end()) throw ConfigError("quant config has no entry for site '" + id + "'");
  return it->second;
}

const SiteQuant& QuantConfig::weight(const std::string& id) const {
  const auto it = weights.find(id);
  if (it == weights.end()) throw ConfigError("quant config has no entry for weight '" + id + "'");
  return it->second;
}

namespace {

json factors_json(const ReparamFactors& f) {
  return {{"rep", to_string(f.rep)},
          {"rep_param", f.rep.param},
          {"disp", to_string(f.disp)},
          {"exponents", {f.e_c, f.e_l, f.e_d}},
          {"r_c", f.r_c},
          {"r_l", f.r_l},
          {"r_d", f.r_d}};
}

json site_json(const SiteQuant& s) {
  json j;
  j["kind"] = site_kind(s);
  if (const auto* m = std::get_if<MinMaxSite>(&s)) {
    j["scale"] = m->q.scale;
    j["bits"] = m->q.bits;
  } else if (const auto* sim = std::get_if<SimilaritySite>(&s)) {
    j["scale"] = sim->q.scale;
    j["bits"] = sim->q.bits;
    j["metric"] = to_string(sim->metric);
    j["score"] = sim->score;
  } else if (const auto* k = std::get_if<KScaledSite>(&s)) {
    j["axis"] = to_string(k->p.axis);
    j["k"] = k->p.k;
    j["bits"] = k->p.bits;
    j["s1"] = k->p.s1;
    j["shifts"] = k->p.shifts;
    j["assignment"] = k->p.assignment;
    j["searched_scales"] = k->p.searched_scales;
  } else if (const auto* h = std::get_if<HiddenStateSite>(&s)) {
    j["scale"] = h->q.scale;
    j["bits"] = h->q.bits;
    j["reparam"] = h->reparam ? factors_json(*h->reparam) : json(nullptr);
  }
  return j;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("quant config entry missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("quant config field '") + key + "': " + e.what());
  }
}

QuantParams params_from(const json& j) {
  QuantParams q{field<float>(j, "scale"), field<int>(j, "bits")};
  check_bits(q.bits);
  if (!(q.scale > 0.0f)) throw ConfigError("quant config scale must be positive");
  return q;
}

ReparamFactors factors_from(const json& j) {
  ReparamFactors f;
  f.rep = parse_rep(field<std::string>(j, "rep"));
  f.rep.param = field<double>(j, "rep_param");
  f.disp = parse_disp(field<std::string>(j, "disp"));
  const auto e = field<std::vector<double>>(j, "exponents");
  if (e.size() != 3) throw ConfigError("reparam exponents must have 3 entries");
  f.e_c = e[0];
  f.e_l = e[1];
  f.e_d = e[2];
  f.r_c = field<std::vector<float>>(j, "r_c");
  f.r_l = field<std::vector<float>>(j, "r_l");
  f.r_d = field<std::vector<float>>(j, "r_d");
  for (const auto* v : {&f.r_c, &f.r_l, &f.r_d}) {
    for (float x : *v) {
      if (!(x > 0.0f)) throw ConfigError("reparameterization factors must be positive");
    }
  }
  return f;
}

SiteQuant site_from(const json& j) {
  const auto kind = field<std::string>(j, "kind");
  if (kind == "passthrough") return PassThroughSite{};
  if (kind == "minmax") return MinMaxSite{params_from(j)};
  if (kind == "similarity") {
    return SimilaritySite{params_from(j), parse_metric(field<std::string>(j, "metric")),
                          field<double>(j, "score")};
  }
  if (kind == "kscaled") {
    KScaledParams p;
    p.axis = parse_kaxis(field<std::string>(j, "axis"));
    p.k = field<int>(j, "k");
    p.bits = field<int>(j, "bits");
    check_bits(p.bits);
    p.s1 = field<float>(j, "s1");
    p.shifts = field<std::vector<int>>(j, "shifts");
    p.assignment = field<std::vector<std::uint32_t>>(j, "assignment");
    p.searched_scales = field<std::vector<float>>(j, "searched_scales");
    if (p.k < 1 || p.shifts.size() != static_cast<std::size_t>(p.k)) {
      throw ConfigError("k-scaled entry: shifts must have k entries");
    }
    for (auto a : p.assignment) {
      if (a >= static_cast<std::uint32_t>(p.k)) throw ConfigError("k-scaled assignment out of range");
    }
    for (int m : p.shifts) {
      if (m < 0 || m > 31) throw ConfigError("k-scaled shift out of [0, 31]");
    }
    if (!(p.s1 > 0.0f)) throw ConfigError("k-scaled s1 must be positive");
    return KScaledSite{std::move(p)};
  }
  if (kind == "hidden") {
    HiddenStateSite h{params_from(j), std::nullopt};
    if (j.contains("reparam") && !j.at("reparam").is_null()) {
      h.reparam = factors_from(j.at("reparam"));
    }
    return h;
  }
  throw ConfigError("unknown quant config entry kind '" + kind + "'");
}

}  // namespace

std::string to_json(const QuantConfig& qc) {
  json j;
  j["format"] = "vimq-quant-config";
  j["version"] = kQuantConfigVersion;
  j["policy"] = qc.policy;
  j["weight_bits"] = qc.weight_bits;
  j["act_bits"] = qc.act_bits;
  j["sites"] = json::object();
  for (const auto& [id, s] : qc.sites) j["sites"][id] = site_json(s);
  j["weights"] = json::object();
  for (const auto& [id, s] : qc.weights) j["weights"][id] = site_json(s);
  return j.dump(2) + "\n";
}

QuantConfig quant_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("quant config is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "vimq-quant-config") {
    throw ConfigError("not a vimq quant config");
  }
  if (field<int>(j, "version") != kQuantConfigVersion) {
    throw ConfigError("unsupported quant config version");
  }
  QuantConfig qc;
  qc.policy = field<std::string>(j, "policy");
  qc.weight_bits = field<int>(j, "weight_bits");
  qc.act_bits = field<int>(j, "act_bits");
  const auto sites = field<json>(j, "sites");
  const auto weights = field<json>(j, "weights");
  if (!sites.is_object() || !weights.is_object()) {
    throw ConfigError("quant config 'sites' and 'weights' must be objects");
  }
  for (const auto& [id, s] : sites.items()) qc.sites[id] = site_from(s);
  for (const auto& [id, s] : weights.items()) qc.weights[id] = site_from(s);
  return qc;
}

void write_quant_config(const QuantConfig& qc, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << to_json(qc);
  if (!os) throw IoError("write failed: " + path.string());
}

QuantConfig read_quant_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return quant_config_from_json(ss.str());
}

std::string digest(const QuantConfig& qc) {
  Fnv1a h;
  h.update(to_json(qc));
  return h.hex();
}

Tensor apply_site(const SiteQuant& site, const Tensor& x) {
  if (std::holds_alternative<PassThroughSite>(site)) return x;
  if (const auto* m = std::get_if<MinMaxSite>(&site)) return fake_quantize(x, m->q.scale, m->q.bits);
  if (const auto* s = std::get_if<SimilaritySite>(&site))
    return fake_quantize(x, s->q.scale, s->q.bits);
  if (const auto* k = std::get_if<KScaledSite>(&site)) return fake_quantize_kscaled(x, k->p);
  const auto& h = std::get<HiddenStateSite>(site);
  return fake_quantize(x, h.q.scale, h.q.bits);
}

}  // namespace vimq
