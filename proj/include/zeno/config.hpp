#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "zeno/params.hpp"

namespace zeno::pipeline {

// SI value from strings like "2pi*100kHz", "93us", "1/26us", "2.5e-6", "20/ms".
double parse_quantity(const std::string& text);

// "lo:hi:n" (inclusive, n points) or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

struct ExperimentConfig {
  ModelParams params;
  std::vector<double> lambda_grid;
  std::size_t n_traj = 1000;
  double duration = 20e-6;
  std::string init_state = "ground";  // ground | excited | bright | theta:<rad>
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::set<std::string> analyses{"conditional", "ensemble", "noclick_hist"};
  std::string output_dir = "out";
  // dwell runs start in |1> and stop at the first click
  std::size_t dwell_n_traj = 0;  // 0: use n_traj
  double dwell_duration = 40e-6;
  int dwell_bins = 80;
  int n_boot = 200;
  std::size_t record_limit = 20'000'000;

  bool operator==(const ExperimentConfig&) const = default;
  void validate() const;
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& c);

extern const std::set<std::string> kKnownAnalyses;

}  // namespace zeno::pipeline
