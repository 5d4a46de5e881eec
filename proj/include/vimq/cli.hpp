#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vimq/reparam.hpp"
#include "vimq/vim_model.hpp"

namespace vimq::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kNumeric = 4 };

// Maps an in-flight exception to an exit code.
int exit_code_for(const std::exception& e);

inline constexpr const char* kSyntheticNote =
    "inputs are seeded synthetic unit-variance token sequences, not image data";

struct ErrorMetrics {
  double cosine = 1.0;
  double mse = 0.0;
  double max_err = 0.0;
};

// Errors of `approx` against `ref`. Cosine of two zero tensors is 1, of one
// zero tensor 0.
ErrorMetrics error_metrics(const Tensor& ref, const Tensor& approx);

// ---- gen ----
struct GenOptions {
  std::uint64_t seed = 7;
  BlockDims dims;
  OutlierProfile profile = OutlierProfile::MiddleTokens;
  std::filesystem::path out_dir;
};
// Writes the model and returns its digest.
std::string cmd_gen(const GenOptions& o);

// ---- input ----
struct InputOptions {
  std::filesystem::path model_dir;
  std::uint64_t seed = 99;
  std::size_t index = 0;  // which sample of the seeded sequence
  std::filesystem::path out;
};
void cmd_input(const InputOptions& o);

// ---- calibrate ----
struct CalibrateOptions {
  std::filesystem::path model_dir;
  std::size_t samples = 256;
  std::string policy = "ours";
  std::optional<std::string> rep;
  std::optional<std::string> disp;
  std::uint64_t seed = 1;
  std::filesystem::path out;
};
QuantConfig cmd_calibrate(const CalibrateOptions& o);

// ---- quantize ----
struct QuantizeOptions {
  std::filesystem::path input;
  std::filesystem::path out;
  int bits = 8;
  std::string method = "minmax";  // minmax | similarity
  SimilarityMetric metric = SimilarityMetric::Cosine;
};
struct QuantizeSummary {
  float scale = 1.0f;
  int bits = 8;
  std::string method;
  ErrorMetrics error;
};
QuantizeSummary cmd_quantize(const QuantizeOptions& o);
std::string to_json(const QuantizeSummary& s);

// ---- run ----
struct RunOptions {
  std::filesystem::path model_dir;
  std::optional<std::filesystem::path> config;
  std::filesystem::path input;
  std::filesystem::path out;
};

struct RunReport {
  std::string mode;  // "fp" or "quant"
  std::string model_digest;
  std::uint64_t model_seed = 0;
  std::string policy;
  std::string config_digest;  // empty in fp mode
  std::map<std::string, ErrorMetrics> sites;
  std::map<std::string, std::vector<double>> hidden_error;  // per direction, length L
  ErrorMetrics output;
  double wall_clock_ms = 0.0;
};

RunReport cmd_run(const RunOptions& o);
// With include_timing=false the wall_clock_ms field is omitted.
std::string to_json(const RunReport& r, bool include_timing = true);

// ---- compare ----
struct CompareOptions {
  std::filesystem::path model_dir;
  std::filesystem::path config_a;
  std::filesystem::path config_b;
  std::size_t n_inputs = 16;
  std::uint64_t seed = 99;
};

struct CompareRow {
  std::string row;     // FP, A, B
  std::string policy;  // policy recorded in the config ("fp" for the reference row)
  ErrorMetrics metrics;
};

struct CompareTable {
  std::size_t n_inputs = 0;
  std::uint64_t seed = 0;
  std::vector<CompareRow> rows;
};

CompareTable cmd_compare(const CompareOptions& o);
inline constexpr const char* kCompareCsvHeader = "row,policy,cosine,mse,max_err";
std::string to_csv(const CompareTable& t);
std::string to_json(const CompareTable& t);

// ---- sweep ----
struct SweepOptions {
  std::filesystem::path model_dir;
  std::vector<std::string> reps = {"max", "mean", "median", "percentile:99", "quantile:0.75"};
  std::vector<std::string> disps = {"same", "std", "var", "range"};
  std::size_t samples = 256;
  std::uint64_t calib_seed = 1;
  std::size_t n_inputs = 16;
  std::uint64_t seed = 99;
};

struct SweepCell {
  std::string rep;
  std::string disp;
  double cosine = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // rep-major
  double no_reparam_cosine = 0.0;
  const SweepCell& best() const;
};

SweepResult cmd_sweep(const SweepOptions& o);
inline constexpr const char* kSweepCsvHeader = "rep,disp,cosine";
std::string to_csv(const SweepResult& s);
std::string summary_json(const SweepResult& s);

// Full command-line entry point; never throws.
int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vimq::cli
