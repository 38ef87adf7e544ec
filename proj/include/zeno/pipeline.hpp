#pragma once
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "zeno/config.hpp"
#include "zeno/estimation.hpp"
#include "zeno/liouvillian.hpp"
#include "zeno/trajectory.hpp"

namespace zeno::pipeline {

using nlohmann::json;

enum class Format { Csv, Json };

struct OutputFile {
  std::string name;
  std::string content;
};

std::string sha256_hex(const std::string& data);
std::string code_version();

// Writes files plus manifest.json into dir; returns the manifest.
json write_outputs(const std::string& dir, const std::string& command,
                   const std::string& config_text, std::uint64_t seed,
                   const std::vector<OutputFile>& files, double wall_clock_s);

// Default output root from ZENO_OUTPUT_ROOT, else ".".
std::string default_output_root();

// ---- ideal -------------------------------------------------------------------------------
struct IdealRequest {
  bool transitions = false, theta = false, survival = false, rho = false, dwell = false, xi = false;
  double lambda = 0.5;
  double omega_s = kTwoPi * 100e3;
  double theta0 = kPi;
  double t_max = 0.0;  // 0: 10 / omega_s
  int points = 201;
  bool excited = false;  // angular densities for a |1> start
};
std::vector<OutputFile> cmd_ideal(const IdealRequest& req, Format fmt);

// ---- transitions -------------------------------------------------------------------------
json cmd_transitions(const ModelParams& realistic, bool ideal_only);

// ---- scan --------------------------------------------------------------------------------
std::vector<OutputFile> cmd_scan(const ModelParams& base, liouvillian::ScanParameter which,
                                 const std::vector<double>& grid, Format fmt);

// ---- simulate / extract ------------------------------------------------------------------
sim::TrajectoryState parse_init(const std::string& s);

struct LambdaRun {
  double lambda = 0.0;
  std::optional<sim::Store> main, dwell;
  std::string error;  // resource failure; stores hold partial results
};

std::vector<LambdaRun> simulate_grid(const ExperimentConfig& c);
std::vector<OutputFile> simulation_outputs(const ExperimentConfig& c,
                                           const std::vector<LambdaRun>& runs);
std::vector<OutputFile> cmd_simulate(const ExperimentConfig& c);

json store_to_json(const sim::Store& s);
sim::Store store_from_json(const json& j);
std::vector<LambdaRun> load_runs(const std::string& store_path);

struct StageResult {
  std::optional<double> value, sigma;
  std::string error;
  json details = json::object();
};

struct Extraction {
  StageResult lambda1, lambda2, lambda3;
};

// Pole tracking and coalescence fit from per-lambda time series.
// drop_zero: remove the pole closest to zero before tracking (ensemble series).
est::CoalescenceFit coalescence_from_series(const std::vector<double>& lambdas,
                                            const std::vector<std::vector<double>>& series,
                                            double sampling, bool drop_zero, int n_boot,
                                            std::uint64_t seed,
                                            std::vector<liouvillian::cplx>* deltas = nullptr,
                                            const est::CoalescenceOptions& copt = {});

// Per-lambda dwell exponent; uses the experimental estimator, falling back to the direct one.
struct XiPoint {
  double lambda, xi, sigma;
  bool used_shifted, fallback;
};
std::optional<XiPoint> dwell_exponent(double lambda, const sim::Store& dwell_store,
                                      std::string* error = nullptr);

Extraction extract_transitions(const std::vector<LambdaRun>& runs, int n_boot, std::uint64_t seed);
json extraction_to_json(const Extraction& e);
std::vector<OutputFile> cmd_extract(const ExperimentConfig& c, const std::string& store_path);

// ---- calibrate ---------------------------------------------------------------------------
// CSV with header; columns label (optional), trajectory_id, window_index, outcome.
std::vector<est::RecordSet> parse_records_csv(const std::string& text);
est::CalibrationTable cmd_calibrate(const std::string& text, double window, double omega_s,
                                    const est::HmmParams* init = nullptr);
std::vector<OutputFile> calibration_outputs(const est::CalibrationTable& t, Format fmt);

}  // namespace zeno::pipeline
