#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "vimq/cli.hpp"
#include "vimq/log.hpp"
#include "vimq/quantizer.hpp"

namespace vimq::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return kIo;
  }
  if (dynamic_cast<const Error*>(&e)) return kNumeric;
  return kFailure;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

double mean_output_cosine(const VimBlock& m, const QuantConfig& qc, const CalibrationSet& inputs) {
  double sum = 0.0;
  for (const auto& x : inputs.samples) {
    sum += error_metrics(forward_fp(m, x).y, forward_quant(m, qc, x).y).cosine;
  }
  return sum / static_cast<double>(inputs.samples.size());
}

}  // namespace

std::string cmd_gen(const GenOptions& o) {
  const auto m = build_synthetic(o.seed, o.dims, o.profile);
  save_model(m, o.out_dir);
  return model_digest(o.out_dir);
}

void cmd_input(const InputOptions& o) {
  const auto m = load_model(o.model_dir);
  const auto cs = make_inputs(m, o.index + 1, o.seed);
  write_qten(cs.samples.back(), o.out);
}

QuantConfig cmd_calibrate(const CalibrateOptions& o) {
  const auto m = load_model(o.model_dir);
  auto policy = CalibrationPolicy::named(o.policy);
  if (o.rep) policy.rep = parse_rep(*o.rep);
  if (o.disp) policy.disp = parse_disp(*o.disp);
  const auto qc = calibrate(m, make_inputs(m, o.samples, o.seed), policy);
  write_quant_config(qc, o.out);
  return qc;
}

QuantizeSummary cmd_quantize(const QuantizeOptions& o) {
  const auto x = read_qten(o.input);
  if (x.dtype() != DType::F32) throw ConfigError("quantize expects an f32 tensor");
  QuantizeSummary s;
  s.bits = o.bits;
  s.method = o.method;
  if (o.method == "minmax") {
    s.scale = minmax_scale(x, o.bits);
  } else if (o.method == "similarity") {
    s.scale = similarity_scale(x, o.bits, o.metric).scale;
  } else {
    throw ConfigError("unknown quantize method '" + o.method + "'");
  }
  const auto q = quantize_at(x, s.scale, o.bits);
  s.error = error_metrics(x, dequantize(q, s.scale));
  write_qten(q, o.out);
  return s;
}

RunReport cmd_run(const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto m = load_model(o.model_dir);
  const auto x = read_qten(o.input);
  RunReport r;
  r.model_digest = model_digest(o.model_dir);
  r.model_seed = m.seed;

  const auto fp = forward_fp(m, x);
  ForwardResult q;
  if (o.config) {
    const auto qc = read_quant_config(*o.config);
    r.mode = "quant";
    r.policy = qc.policy;
    r.config_digest = digest(qc);
    q = forward_quant(m, qc, x);
  } else {
    r.mode = "fp";
    r.policy = "fp";
    q = fp;
  }
  for (const auto& id : activation_sites()) {
    r.sites[id] = error_metrics(fp.taps.at(id), q.taps.at(id));
  }
  r.hidden_error["ssm_fwd"] =
      hidden_error_curve(fp.taps.at(sites::kHiddenFwd), q.taps.at(sites::kHiddenFwd));
  r.hidden_error["ssm_bwd"] =
      hidden_error_curve(fp.taps.at(sites::kHiddenBwd), q.taps.at(sites::kHiddenBwd));
  r.output = error_metrics(fp.y, q.y);
  write_qten(q.y, o.out);
  r.wall_clock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

CompareTable cmd_compare(const CompareOptions& o) {
  if (o.n_inputs == 0) throw ConfigError("compare needs at least one input");
  const auto m = load_model(o.model_dir);
  const QuantConfig qcs[2] = {read_quant_config(o.config_a), read_quant_config(o.config_b)};
  const auto inputs = make_inputs(m, o.n_inputs, o.seed);

  CompareTable t;
  t.n_inputs = o.n_inputs;
  t.seed = o.seed;
  t.rows.push_back({"FP", "fp", ErrorMetrics{}});
  const char* names[2] = {"A", "B"};
  for (int i = 0; i < 2; ++i) {
    ErrorMetrics acc{0.0, 0.0, 0.0};
    for (const auto& x : inputs.samples) {
      const auto e = error_metrics(forward_fp(m, x).y, forward_quant(m, qcs[i], x).y);
      acc.cosine += e.cosine;
      acc.mse += e.mse;
      acc.max_err += e.max_err;
    }
    const auto n = static_cast<double>(o.n_inputs);
    t.rows.push_back({names[i], qcs[i].policy, {acc.cosine / n, acc.mse / n, acc.max_err / n}});
  }
  return t;
}

SweepResult cmd_sweep(const SweepOptions& o) {
  if (o.reps.empty() || o.disps.empty()) throw ConfigError("sweep needs at least one rep and disp");
  if (o.n_inputs == 0) throw ConfigError("sweep needs at least one input");
  std::vector<RepFn> reps;
  std::vector<DispKind> disps;
  for (const auto& r : o.reps) reps.push_back(parse_rep(r));
  for (const auto& d : o.disps) disps.push_back(parse_disp(d));

  const auto m = load_model(o.model_dir);
  const auto cs = make_inputs(m, o.samples, o.calib_seed);
  const auto inputs = make_inputs(m, o.n_inputs, o.seed);

  SweepResult s;
  s.no_reparam_cosine =
      mean_output_cosine(m, calibrate(m, cs, CalibrationPolicy::named("ours-noreparam")), inputs);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    for (std::size_t j = 0; j < disps.size(); ++j) {
      auto policy = CalibrationPolicy::named("ours");
      policy.rep = reps[i];
      policy.disp = disps[j];
      const double c = mean_output_cosine(m, calibrate(m, cs, policy), inputs);
      if (!std::isfinite(c)) {
        throw NumericError("sweep cell " + o.reps[i] + "/" + o.disps[j] + " is not finite");
      }
      s.cells.push_back({o.reps[i], o.disps[j], c});
    }
  }
  return s;
}

namespace {

CLI::Validator rep_name() {
  return CLI::Validator(
      [](std::string& s) {
        try {
          parse_rep(s);
        } catch (const ConfigError& e) {
          return std::string(e.what());
        }
        return std::string();
      },
      "REP");
}

CLI::Validator disp_name() {
  return CLI::Validator(
      [](std::string& s) {
        try {
          parse_disp(s);
        } catch (const ConfigError& e) {
          return std::string(e.what());
        }
        return std::string();
      },
      "DISP");
}

const std::vector<std::string> kPolicies = {"baseline",       "similarity", "kscaled",
                                            "ours-noreparam", "ours",       "passthrough"};
const std::vector<std::string> kProfiles = {"none", "middle-tokens", "heavy-channels"};

}  // namespace

int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"vimq: post-training quantization toolkit for a synthetic Vision Mamba block"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  GenOptions gen;
  std::string profile = "middle-tokens";
  auto* g = app.add_subcommand("gen", "Generate a seeded synthetic model");
  g->add_option("--seed", gen.seed, "Model seed")->capture_default_str();
  g->add_option("--channels", gen.dims.channels, "Channels C")->capture_default_str();
  g->add_option("--tokens", gen.dims.tokens, "Tokens L")->capture_default_str();
  g->add_option("--state", gen.dims.state, "State size D")->capture_default_str();
  g->add_option("--profile", profile, "Outlier profile")
      ->check(CLI::IsMember(kProfiles))
      ->capture_default_str();
  g->add_option("--out", gen.out_dir, "Model directory")->required();

  InputOptions in;
  auto* ip = app.add_subcommand("input", "Write one seeded synthetic input tensor");
  ip->add_option("model", in.model_dir, "Model directory")->required();
  ip->add_option("--seed", in.seed, "Input seed")->capture_default_str();
  ip->add_option("--index", in.index, "Sample index in the seeded sequence")->capture_default_str();
  ip->add_option("--out", in.out, "Output QTEN file")->required();

  CalibrateOptions cal;
  std::string rep, disp;
  auto* c = app.add_subcommand("calibrate", "Calibrate a quantization config");
  c->add_option("model", cal.model_dir, "Model directory")->required();
  c->add_option("--samples", cal.samples, "Calibration samples")->capture_default_str();
  c->add_option("--policy", cal.policy, "Calibration policy")
      ->check(CLI::IsMember(kPolicies))
      ->capture_default_str();
  c->add_option("--rep", rep, "Representative function for reparameterization")->check(rep_name());
  c->add_option("--disp", disp, "Dispersion function for reparameterization")->check(disp_name());
  c->add_option("--seed", cal.seed, "Calibration input seed")->capture_default_str();
  c->add_option("--out", cal.out, "Output config JSON")->required();

  QuantizeOptions qo;
  std::string metric = "cosine";
  auto* qz = app.add_subcommand("quantize", "Quantize a tensor file to int8 storage");
  qz->add_option("input", qo.input, "Input f32 QTEN file")->required();
  qz->add_option("--bits", qo.bits, "Bit width")->check(CLI::Range(2, 8))->capture_default_str();
  qz->add_option("--method", qo.method, "Scale method")
      ->check(CLI::IsMember({"minmax", "similarity"}))
      ->capture_default_str();
  qz->add_option("--metric", metric, "Similarity metric")
      ->check(CLI::IsMember({"cosine", "l1", "l2"}))
      ->capture_default_str();
  qz->add_option("--out", qo.out, "Output QTEN file")->required();

  RunOptions ro;
  std::string config;
  bool no_timing = false;
  auto* r = app.add_subcommand("run", "Run the block on one input and report errors");
  r->add_option("model", ro.model_dir, "Model directory")->required();
  r->add_option("--config", config, "Quant config JSON; omit for a full-precision run");
  r->add_option("--input", ro.input, "Input QTEN file")->required();
  r->add_option("--out", ro.out, "Output QTEN file")->required();
  r->add_flag("--no-timing", no_timing, "Omit wall-clock from the report");

  CompareOptions co;
  std::string format = "csv";
  std::string compare_out;
  auto* cmp = app.add_subcommand("compare", "Compare two configs against full precision");
  cmp->add_option("model", co.model_dir, "Model directory")->required();
  cmp->add_option("config_a", co.config_a, "Config A")->required();
  cmp->add_option("config_b", co.config_b, "Config B")->required();
  cmp->add_option("--inputs", co.n_inputs, "Number of seeded inputs")->capture_default_str();
  cmp->add_option("--seed", co.seed, "Input seed")->capture_default_str();
  cmp->add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  cmp->add_option("--out", compare_out, "Write the table here instead of stdout");

  SweepOptions so;
  std::string sweep_out;
  auto* sw = app.add_subcommand("sweep", "Rep x Disp grid of output similarity");
  sw->add_option("model", so.model_dir, "Model directory")->required();
  sw->add_option("--reps", so.reps, "Representative functions")
      ->delimiter(',')
      ->check(rep_name())
      ->capture_default_str();
  sw->add_option("--disps", so.disps, "Dispersion functions")
      ->delimiter(',')
      ->check(disp_name())
      ->capture_default_str();
  sw->add_option("--samples", so.samples, "Calibration samples")->capture_default_str();
  sw->add_option("--calib-seed", so.calib_seed, "Calibration input seed")->capture_default_str();
  sw->add_option("--inputs", so.n_inputs, "Number of evaluation inputs")->capture_default_str();
  sw->add_option("--seed", so.seed, "Evaluation input seed")->capture_default_str();
  sw->add_option("--out", sweep_out, "Grid CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  const bool was_quiet = log::quiet();
  if (quiet) log::set_quiet(true);
  int code = kOk;
  try {
    if (*g) {
      gen.profile = parse_outlier_profile(profile);
      out << cmd_gen(gen) << "\n";
    } else if (*ip) {
      cmd_input(in);
    } else if (*c) {
      if (!rep.empty()) cal.rep = rep;
      if (!disp.empty()) cal.disp = disp;
      out << digest(cmd_calibrate(cal)) << "\n";
    } else if (*qz) {
      qo.metric = parse_metric(metric);
      out << to_json(cmd_quantize(qo));
    } else if (*r) {
      if (!config.empty()) ro.config = config;
      out << to_json(cmd_run(ro), !no_timing);
    } else if (*cmp) {
      const auto t = cmd_compare(co);
      const auto text = format == "json" ? to_json(t) : to_csv(t);
      if (compare_out.empty()) {
        out << text;
      } else {
        write_text(compare_out, text);
      }
    } else if (*sw) {
      const auto s = cmd_sweep(so);
      write_text(sweep_out, to_csv(s));
      out << summary_json(s);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = exit_code_for(e);
  }
  log::set_quiet(was_quiet);
  return code;
}

}  // namespace vimq::cli
