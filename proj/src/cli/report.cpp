#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "vimq/cli.hpp"

namespace vimq::cli {

using ojson = nlohmann::ordered_json;

ErrorMetrics error_metrics(const Tensor& ref, const Tensor& approx) {
  if (ref.dims() != approx.dims()) {
    throw ShapeError("metric shape mismatch: " + to_string(ref.dims()) + " vs " +
                     to_string(approx.dims()));
  }
  const auto a = ref.f32();
  const auto b = approx.f32();
  double dot = 0.0, na = 0.0, nb = 0.0, se = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
    se += (x - y) * (x - y);
    mx = std::max(mx, std::abs(x - y));
  }
  ErrorMetrics m;
  if (na == 0.0 && nb == 0.0) {
    m.cosine = 1.0;
  } else if (na == 0.0 || nb == 0.0) {
    m.cosine = 0.0;
  } else if (mx == 0.0) {
    m.cosine = 1.0;
  } else {
    m.cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  }
  m.mse = a.empty() ? 0.0 : se / static_cast<double>(a.size());
  m.max_err = mx;
  return m;
}

namespace {

ojson metrics_json(const ErrorMetrics& m) {
  return {{"cosine", m.cosine}, {"mse", m.mse}, {"max_err", m.max_err}};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string to_json(const QuantizeSummary& s) {
  ojson j;
  j["schema"] = "vimq-quantize/1";
  j["method"] = s.method;
  j["bits"] = s.bits;
  j["scale"] = s.scale;
  j["error"] = metrics_json(s.error);
  return j.dump(2) + "\n";
}

std::string to_json(const RunReport& r, bool include_timing) {
  ojson j;
  j["schema"] = "vimq-run-report/1";
  j["note"] = kSyntheticNote;
  j["mode"] = r.mode;
  j["model_digest"] = r.model_digest;
  j["model_seed"] = r.model_seed;
  j["policy"] = r.policy;
  j["config_digest"] = r.config_digest.empty() ? ojson(nullptr) : ojson(r.config_digest);
  ojson sites = ojson::object();
  for (const auto& [id, m] : r.sites) sites[id] = metrics_json(m);
  j["sites"] = std::move(sites);
  ojson curves = ojson::object();
  for (const auto& [dir, c] : r.hidden_error) curves[dir] = c;
  j["hidden_error"] = std::move(curves);
  j["output"] = metrics_json(r.output);
  if (include_timing) j["wall_clock_ms"] = r.wall_clock_ms;
  return j.dump(2) + "\n";
}

std::string to_csv(const CompareTable& t) {
  std::ostringstream os;
  os << kCompareCsvHeader << "\n";
  for (const auto& r : t.rows) {
    os << r.row << "," << r.policy << "," << num(r.metrics.cosine) << "," << num(r.metrics.mse)
       << "," << num(r.metrics.max_err) << "\n";
  }
  return os.str();
}

std::string to_json(const CompareTable& t) {
  ojson j;
  j["schema"] = "vimq-compare/1";
  j["note"] = kSyntheticNote;
  j["n_inputs"] = t.n_inputs;
  j["seed"] = t.seed;
  ojson rows = ojson::array();
  for (const auto& r : t.rows) {
    ojson row = {{"row", r.row}, {"policy", r.policy}};
    row.update(metrics_json(r.metrics));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

const SweepCell& SweepResult::best() const {
  if (cells.empty()) throw ConfigError("empty sweep");
  const SweepCell* b = &cells.front();
  for (const auto& c : cells)
    if (c.cosine > b->cosine) b = &c;
  return *b;
}

std::string to_csv(const SweepResult& s) {
  std::ostringstream os;
  os << kSweepCsvHeader << "\n";
  for (const auto& c : s.cells) os << c.rep << "," << c.disp << "," << num(c.cosine) << "\n";
  return os.str();
}

std::string summary_json(const SweepResult& s) {
  const auto& b = s.best();
  ojson j;
  j["schema"] = "vimq-sweep/1";
  j["note"] = kSyntheticNote;
  j["cells"] = s.cells.size();
  j["best"] = {{"rep", b.rep}, {"disp", b.disp}, {"cosine", b.cosine}};
  j["no_reparam_cosine"] = s.no_reparam_cosine;
  return j.dump(2) + "\n";
}

}  // namespace vimq::cli
