#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vimq/digest.hpp"
#include "vimq/vim_model.hpp"

namespace vimq {

using json = nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void save_model(const VimBlock& m, const std::filesystem::path& dir) {
  m.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["format"] = "vimq-model";
  manifest["version"] = 1;
  manifest["seed"] = m.seed;
  manifest["outlier_profile"] = to_string(m.profile);
  manifest["dims"] = {{"channels", m.dims.channels},
                      {"tokens", m.dims.tokens},
                      {"state", m.dims.state}};
  manifest["tensors"] = json::object();
  for (const auto& [name, t] : m.named_tensors()) {
    const auto file = name + ".qten";
    write_qten(t, dir / file);
    manifest["tensors"][name] = {{"file", file}, {"dims", t.dims()}, {"dtype", to_string(t.dtype())}};
  }
  std::ofstream os(dir / kManifest, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / kManifest).string());
  os << manifest.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + (dir / kManifest).string());
}

VimBlock load_model(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / kManifest));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model manifest is not valid JSON: ") + e.what());
  }
  if (manifest.value("format", "") != "vimq-model" || manifest.value("version", 0) != 1) {
    throw ConfigError("not a version-1 vimq model: " + dir.string());
  }
  VimBlock m;
  try {
    m.seed = manifest.at("seed").get<std::uint64_t>();
    m.profile = parse_outlier_profile(manifest.at("outlier_profile").get<std::string>());
    const auto& d = manifest.at("dims");
    m.dims = {d.at("channels").get<std::size_t>(), d.at("tokens").get<std::size_t>(),
              d.at("state").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model manifest: ") + e.what());
  }
  auto tensor = [&](const std::string& name) {
    const auto& entries = manifest.at("tensors");
    if (!entries.contains(name)) throw ConfigError("model manifest lacks tensor '" + name + "'");
    return read_qten(dir / entries.at(name).at("file").get<std::string>());
  };
  m.norm_weight = tensor("norm.weight");
  m.in_proj = tensor("in_proj.weight");
  m.conv_weight = tensor("conv1d.weight");
  m.token_scale = tensor("token_scale");
  m.out_proj = tensor("out_proj.weight");
  for (const auto& [prefix, p] :
       {std::pair<std::string, SsmParams*>{"ssm_fwd", &m.ssm_fwd},
        std::pair<std::string, SsmParams*>{"ssm_bwd", &m.ssm_bwd}}) {
    p->a = tensor(prefix + ".a");
    p->w_delta = tensor(prefix + ".w_delta");
    p->w_b = tensor(prefix + ".w_b");
    p->w_c = tensor(prefix + ".w_c");
    p->d_skip = tensor(prefix + ".d_skip");
  }
  m.validate();
  return m;
}

std::string model_digest(const std::filesystem::path& dir) {
  Fnv1a h;
  const auto manifest_text = read_text(dir / kManifest);
  h.update(manifest_text);
  const auto manifest = json::parse(manifest_text);
  for (const auto& [name, entry] : manifest.at("tensors").items()) {
    h.update(name);
    h.update(read_text(dir / entry.at("file").get<std::string>()));
  }
  return h.hex();
}

}  // namespace vimq
