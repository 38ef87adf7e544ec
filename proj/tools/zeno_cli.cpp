#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "zeno/config.hpp"
#include "zeno/errors.hpp"
#include "zeno/pipeline.hpp"

using namespace zeno;
using namespace zeno::pipeline;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monitored-qubit Zeno transition toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, format = "csv";
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 0;
  app.add_option("--config", config_path, "configuration file (key = value with [sections])")
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory (default: $ZENO_OUTPUT_ROOT/<verb>)");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));

  // ideal
  IdealRequest ireq;
  std::string omega_text = "2pi*100kHz", tmax_text;
  auto* ideal = app.add_subcommand("ideal", "closed-form tables of the decoherence-free model");
  ideal->add_flag("--transitions", ireq.transitions, "transition constants");
  ideal->add_flag("--theta", ireq.theta, "no-click angle theta(t)");
  ideal->add_flag("--p0", ireq.survival, "no-click survival and first-click density");
  ideal->add_flag("--rho", ireq.rho, "angular first-click density");
  ideal->add_flag("--dwell", ireq.dwell, "dwell-time density");
  ideal->add_flag("--xi", ireq.xi, "critical exponent versus lambda");
  ideal->add_flag("--excited", ireq.excited, "angular densities for an excited start");
  ideal->add_option("--lambda", ireq.lambda, "measurement strength");
  ideal->add_option("--omega", omega_text, "Rabi frequency, e.g. 2pi*100kHz");
  ideal->add_option("--theta0", ireq.theta0, "initial angle (rad)");
  ideal->add_option("--tmax", tmax_text, "time span, e.g. 20us");
  ideal->add_option("--points", ireq.points, "grid points");

  // transitions
  bool ideal_only = false;
  auto* trans = app.add_subcommand("transitions", "critical measurement strengths");
  trans->add_flag("--ideal", ideal_only, "decoherence-free constants only");

  // simulate / extract
  app.add_subcommand("simulate", "Monte Carlo sweep over the lambda grid");
  std::string store_path;
  auto* extract = app.add_subcommand("extract", "observed transitions from a simulation store");
  extract->add_option("--store", store_path, "store.json written by simulate")->required();

  // calibrate
  std::string records_path, window_text = "320ns";
  auto* calibrate = app.add_subcommand("calibrate", "HMM calibration of click records");
  calibrate->add_option("records", records_path, "records CSV")->required();
  calibrate->add_option("--window", window_text, "integration window, e.g. 320ns");
  calibrate->add_option("--omega", omega_text, "Rabi frequency for lambda = alpha / 2 omega");

  // scan
  std::string scan_param, scan_grid = "0:0.5:20";
  auto* scan = app.add_subcommand("scan", "transition locations versus one model parameter");
  scan->add_option("--param", scan_param, "gamma_phi | gamma1 | kappa_fp | p_fn | kappa_b")
      ->required();
  scan->add_option("--grid", scan_grid, "dimensionless grid lo:hi:n or list");

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;
  const Format fmt = format == "json" ? Format::Json : Format::Csv;

  try {
    ExperimentConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (threads) cfg.threads = threads;
    cfg.validate();
    auto sub = app.get_subcommands().front();
    const std::string verb = sub->get_name();
    const std::string out = !out_dir.empty() ? out_dir : default_output_root() + "/" + verb;
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    std::string canon = serialize_config(cfg);
    std::vector<OutputFile> files;
    int status = 0;

    if (verb == "ideal") {
      ireq.omega_s = parse_quantity(omega_text);
      if (!tmax_text.empty()) ireq.t_max = parse_quantity(tmax_text);
      files = cmd_ideal(ireq, fmt);
      std::ostringstream c;
      c << "ideal " << ireq.lambda << ' ' << ireq.omega_s << ' ' << ireq.theta0 << ' '
        << ireq.t_max << ' ' << ireq.points << ' ' << ireq.excited;
      canon = c.str();
    } else if (verb == "transitions") {
      auto j = cmd_transitions(cfg.params, ideal_only);
      std::cout << j.dump(1) << '\n';
      files = {{"transitions.json", j.dump(1) + "\n"}};
    } else if (verb == "simulate") {
      auto runs = simulate_grid(cfg);
      files = simulation_outputs(cfg, runs);
      for (const auto& r : runs)
        if (!r.error.empty()) {
          std::cerr << "error: lambda = " << r.lambda << ": " << r.error
                    << " (partial results written)\n";
          status = 3;
        }
    } else if (verb == "extract") {
      files = cmd_extract(cfg, store_path);
      std::cout << files.front().content;
    } else if (verb == "calibrate") {
      auto tab = cmd_calibrate(read_file(records_path), parse_quantity(window_text),
                               parse_quantity(omega_text));
      files = calibration_outputs(tab, fmt);
      canon += "records_sha256 = " + sha256_hex(read_file(records_path)) + "\n";
    } else if (verb == "scan") {
      auto which = liouvillian::parse_scan_parameter(scan_param);
      files = cmd_scan(cfg.params, which, parse_grid(scan_grid), fmt);
      canon += "scan = " + scan_param + " " + scan_grid + "\n";
    }
    write_outputs(out, verb, canon, cfg.seed, files, elapsed());
    std::cerr << "wrote " << files.size() << " files to " << out << '\n';
    return status;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
