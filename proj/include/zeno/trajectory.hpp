#pragma once
#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "zeno/params.hpp"
#include "zeno/philox.hpp"

namespace zeno::sim {

struct QubitAngle {
  double theta;
};
struct Bright {};
using TrajectoryState = std::variant<QubitAngle, Bright>;

enum class Event : std::uint8_t { None, Measurement, Dephasing, Relaxation, Thermal, BrightExit };

enum BudgetKind : int { kDephasing = 0, kRelaxation, kThermal, kMissedB, kFlipped, kBudgetKinds };

// Single-step kernel. The no-jump part is the exact non-Hermitian propagator over dt_sim.
class Stepper {
 public:
  explicit Stepper(const ModelParams& p);

  struct QubitResult {
    Event event = Event::None;
    double fraction = 1.0;  // elapsed fraction of the step before the jump
  };
  // Spinor (c0 on |0>, c1 on |1>), normalized on entry and exit.
  QubitResult advance_qubit(double& c0, double& c1, double u_jump, double u_channel) const;
  double no_jump_angle(double c0, double c1) const;
  bool bright_exit(double u) const { return u < q_exit_; }
  double max_rate_dt() const { return max_rate_dt_; }

 private:
  double g00_, g01_, g10_, g11_;
  double alpha_, gamma1_, gamma_up_, deph_;
  double q_exit_;
  double max_rate_dt_;
};

// One step with a sequential generator; convenience for tests and small drivers.
TrajectoryState step(const TrajectoryState& s, const ModelParams& p, PhiloxEngine& rng,
                     Event* event = nullptr);

enum class Outcome : std::uint8_t { NoClick = 0, Click = 1 };

struct ClickRecord {
  std::vector<Outcome> outcomes;
  double window = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t trajectory_id = 0;
};

struct WindowClass {
  bool raw;         // before flips
  bool registered;  // after flips
};
WindowClass classify_window(std::size_t bright_steps, std::size_t steps_per_window,
                            const ModelParams& p, double u_flip);

// Throws ConfigError unless t_int is an integer multiple of dt_sim.
std::size_t steps_per_window(const ModelParams& p);

// Per-step Bright flags -> windowed record. Flip draws keyed by (seed, trajectory_id, window).
ClickRecord classify_windows(const std::vector<std::uint8_t>& bright_per_step,
                             const ModelParams& p, std::uint64_t seed,
                             std::uint64_t trajectory_id);

struct EnsembleOptions {
  std::size_t n_traj = 1000;
  double duration = 10e-6;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool stop_at_first_click = false;  // ensemble series unavailable when set
  bool keep_records = false;
  std::size_t record_limit = 50'000'000;  // windows held in memory
  bool dwell = false;
  int dwell_bins = 80;
  std::size_t chunk = 1024;
};

// Streaming accumulators. Index j refers to time j * t_int.
struct Accumulators {
  std::vector<double> ens_p1, ens_p1sq, ens_x, ens_z, ens_pb;
  std::vector<std::uint64_t> surv, verified;
  std::vector<double> cond_p1, cond_p1sq, cond_x, cond_z;
  std::vector<std::array<std::uint64_t, kBudgetKinds>> budget;
  std::vector<std::uint64_t> first_runs, later_runs;
  std::uint64_t censored_first = 0;
  int dwell_bins = 0;
  std::array<std::vector<double>, 2> dwell_sum, dwell_sumsq;  // base grid, shifted grid

  void resize(std::size_t n_windows, int bins);
  void merge(const Accumulators& o);
};

struct Store {
  ModelParams params;
  EnsembleOptions options;
  TrajectoryState init;
  std::size_t n_traj = 0;  // trajectories actually simulated
  std::size_t n_windows = 0;
  std::size_t steps_per_window = 0;
  Accumulators acc;
  std::vector<ClickRecord> records;
  std::vector<std::vector<float>> theta_snapshots;  // NaN while Bright
  std::vector<std::string> warnings;

  double window() const { return params.t_int; }
};

struct StorageExhausted : std::runtime_error {
  StorageExhausted(const std::string& what, std::shared_ptr<Store> partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  std::shared_ptr<Store> partial;
};

Store run_ensemble(const ModelParams& p, const TrajectoryState& init, const EnsembleOptions& opt);

struct Series {
  std::vector<double> t, value, sigma;
  std::vector<std::uint64_t> count;
  std::vector<bool> omitted;  // no survivors at that time
};

// P1 among trajectories with no registered click before t and not Bright at t.
Series conditional_population(const Store& s);
// Registered no-click probability at t.
Series noclick_probability(const Store& s);
Series ensemble_population(const Store& s);

struct RunHistogram {
  double window = 0.0;
  std::vector<std::uint64_t> counts;  // counts[L]: L consecutive no-click windows then a click
  std::uint64_t censored = 0;
  std::uint64_t total() const;
};
RunHistogram noclick_duration_histogram(const Store& s, bool first_only = false);

struct DwellHistogram {
  std::vector<double> edges;  // nbins + 1, may extend past pi on the shifted grid
  std::vector<double> values, sigma;
  bool shifted = false;
  double bin_width() const { return edges[1] - edges[0]; }
  double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
};

DwellHistogram make_dwell_grid(int bins, bool shifted);
// Distribute time along a linear angular path [phi0, phi1] over a periodic grid.
void credit_segment(std::vector<double>& bins, bool shifted, double phi0, double phi1, double time);

DwellHistogram dwell_histogram_direct(const Store& s, bool shifted = false);

struct ExperimentalDwell {
  DwellHistogram base, shifted;
  bool used_shifted = false;
  const DwellHistogram& selected() const { return used_shifted ? shifted : base; }
  std::vector<double> theta_map;  // theta at each mapped window boundary
};
// Exposure-weighted estimator through the conditional-tomography map theta(t).
// Throws MappingError when the empirical theta(t) is not monotone.
ExperimentalDwell dwell_histogram_experimental(const Store& s, int bins = 80,
                                               std::size_t min_count = 50);

struct ErrorBudget {
  std::array<double, kBudgetKinds> fraction{};
  std::array<double, kBudgetKinds> sigma{};
  std::uint64_t survivors = 0;
};
ErrorBudget error_budget(const Store& s, double target_duration);

std::string budget_name(int kind);

// CSV writers
std::string records_to_csv(const Store& s);
std::string histogram_to_csv(const DwellHistogram& h, double n_traj);
std::string runs_to_csv(const RunHistogram& h);
std::string series_to_csv(const Series& s, const std::string& name);

}  // namespace zeno::sim
