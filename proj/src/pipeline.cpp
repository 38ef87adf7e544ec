#include "zeno/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "zeno/errors.hpp"
#include "zeno/ideal_model.hpp"

#ifndef ZENO_VERSION
#define ZENO_VERSION "0.0.0"
#endif

namespace zeno::pipeline {

namespace fs = std::filesystem;
using liouvillian::cplx;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Column table that renders to CSV or JSON.
struct Table {
  std::string name;
  std::vector<std::string> headers;
  std::vector<std::vector<double>> rows;

  OutputFile render(Format fmt) const {
    if (fmt == Format::Json) {
      json j = json::object();
      for (std::size_t c = 0; c < headers.size(); ++c) {
        json col = json::array();
        for (const auto& r : rows) {
          if (std::isfinite(r[c]))
            col.push_back(r[c]);
          else
            col.push_back(nullptr);
        }
        j[headers[c]] = std::move(col);
      }
      return {name + ".json", j.dump(1) + "\n"};
    }
    std::ostringstream os;
    os.precision(15);
    for (std::size_t c = 0; c < headers.size(); ++c) os << (c ? "," : "") << headers[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) os << ',';
        if (std::isfinite(r[c])) os << r[c];
      }
      os << '\n';
    }
    return {name + ".csv", os.str()};
  }
};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

json params_to_json(const ModelParams& p) {
  return {{"omega_s", p.omega_s}, {"alpha", p.alpha},       {"gamma1", p.gamma1},
          {"gamma_phi", p.gamma_phi}, {"n_th", p.n_th},     {"tau_b", p.tau_b},
          {"p_fp", p.p_fp},       {"p_fn", p.p_fn},         {"kappa_fp", p.kappa_fp},
          {"t_int", p.t_int},     {"dt_sim", p.dt_sim}};
}

ModelParams params_from_json(const json& j) {
  ModelParams p;
  p.omega_s = j.at("omega_s");
  p.alpha = j.at("alpha");
  p.gamma1 = j.at("gamma1");
  p.gamma_phi = j.at("gamma_phi");
  p.n_th = j.at("n_th");
  p.tau_b = j.at("tau_b");
  p.p_fp = j.at("p_fp");
  p.p_fn = j.at("p_fn");
  p.kappa_fp = j.at("kappa_fp");
  p.t_int = j.at("t_int");
  p.dt_sim = j.at("dt_sim");
  return p;
}

json transitions_json(const liouvillian::TransitionSet& t) {
  return {{"lambda_c1", t.c1}, {"lambda_c2", t.c2}, {"lambda_c3", t.c3}};
}

std::string tag(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "lambda_%03zu_", i);
  return buf;
}

}  // namespace

// ---- manifest ----------------------------------------------------------------------------

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string code_version() { return ZENO_VERSION; }

std::string default_output_root() {
  const char* env = std::getenv("ZENO_OUTPUT_ROOT");
  return env && *env ? env : ".";
}

json write_outputs(const std::string& dir, const std::string& command,
                   const std::string& config_text, std::uint64_t seed,
                   const std::vector<OutputFile>& files, double wall_clock_s) {
  fs::create_directories(dir);
  json outputs = json::object();
  for (const auto& f : files) {
    if (f.name == "manifest.json") throw ImplementationFault("reserved output name");
    std::ofstream os(fs::path(dir) / f.name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (fs::path(dir) / f.name).string());
    os << f.content;
    outputs[f.name] = sha256_hex(f.content);
  }
  json m = {{"command", command},
            {"config_sha256", sha256_hex(config_text)},
            {"code_version", code_version()},
            {"seed", seed},
            {"wall_clock_s", wall_clock_s},
            {"outputs", outputs}};
  std::ofstream(fs::path(dir) / "manifest.json") << m.dump(1) << '\n';
  return m;
}

// ---- ideal -------------------------------------------------------------------------------

std::vector<OutputFile> cmd_ideal(const IdealRequest& r, Format fmt) {
  if (!(r.lambda >= 0.0) || !std::isfinite(r.lambda)) throw ConfigError("--lambda must be >= 0");
  if (!(r.omega_s > 0.0)) throw ConfigError("--omega must be > 0");
  if (r.points < 2) throw ConfigError("--points must be >= 2");
  if (!(r.transitions || r.theta || r.survival || r.rho || r.dwell || r.xi))
    throw ConfigError("no table requested");
  const auto start = r.excited ? ideal::Start::Excited : ideal::Start::Ground;
  const double t_max = r.t_max > 0.0 ? r.t_max : 10.0 / r.omega_s;
  std::vector<Table> tables;

  if (r.transitions) {
    auto t = ideal::ideal_transitions();
    tables.push_back({"ideal_transitions", {"lambda_c1", "lambda_c2", "lambda_c3"},
                      {{t.c1, t.c2, t.c3}}});
  }
  if (r.theta) {
    Table t{"ideal_theta", {"t_s", "theta_rad"}, {}};
    for (double x : linspace(0.0, t_max, r.points))
      t.rows.push_back({x, ideal::noclick_theta(x, r.lambda, r.omega_s, r.theta0)});
    tables.push_back(std::move(t));
  }
  if (r.survival) {
    Table t{"ideal_survival", {"t_s", "p0", "first_click_density_per_s"}, {}};
    for (double x : linspace(0.0, t_max, r.points))
      t.rows.push_back({x, ideal::noclick_survival(x, r.lambda, r.omega_s),
                        ideal::first_click_density(x, r.lambda, r.omega_s)});
    tables.push_back(std::move(t));
  }
  if (r.rho || r.dwell) {
    auto fp = ideal::fixed_points(r.lambda);
    if (!fp) throw ConfigError("angular densities need --lambda > 1");
    const double lo = fp->theta_plus, hi = r.excited ? 0.0 : kPi;
    // open at the fixed point, closed at the start angle
    std::vector<double> grid;
    for (int i = 1; i <= r.points; ++i) grid.push_back(lo + (hi - lo) * i / r.points);
    if (r.rho) {
      Table t{"ideal_rho", {"theta_rad", "rho_per_rad"}, {}};
      for (double th : grid)
        t.rows.push_back({th, ideal::angular_first_click_density(th, r.lambda, start)});
      tables.push_back(std::move(t));
    }
    if (r.dwell) {
      Table t{"ideal_dwell", {"theta_rad", "tau_s_per_rad"}, {}};
      for (double th : grid)
        t.rows.push_back({th, ideal::dwell_density(th, r.lambda, r.omega_s, start)});
      tables.push_back(std::move(t));
    }
  }
  if (r.xi) {
    Table t{"ideal_xi", {"lambda", "xi"}, {}};
    for (int i = 1; i <= r.points; ++i) {
      double lam = 1.0 + 2.0 * i / r.points;
      t.rows.push_back({lam, ideal::critical_exponent(lam)});
    }
    tables.push_back(std::move(t));
  }
  std::vector<OutputFile> out;
  for (auto& t : tables) out.push_back(t.render(fmt));
  return out;
}

// ---- transitions -------------------------------------------------------------------------

json cmd_transitions(const ModelParams& realistic, bool ideal_only) {
  json j;
  auto id = ideal::ideal_transitions();
  j["ideal"] = {{"lambda_c1", id.c1}, {"lambda_c2", id.c2}, {"lambda_c3", id.c3}};
  if (ideal_only) return j;
  auto t = liouvillian::find_transitions(realistic);
  j["realistic"] = transitions_json(t);
  j["realistic"]["params"] = params_to_json(realistic);
  j["ordering_inverted"] = t.c2 < t.c1;
  return j;
}

// ---- scan --------------------------------------------------------------------------------

std::vector<OutputFile> cmd_scan(const ModelParams& base, liouvillian::ScanParameter which,
                                 const std::vector<double>& grid, Format fmt) {
  if (grid.empty()) throw ConfigError("empty scan grid");
  auto rows = liouvillian::lambda_scan(base, which, grid);
  if (fmt == Format::Csv) return {{"scan.csv", liouvillian::scan_to_csv(which, rows)}};
  Table t{"scan", {"param_value", "lambda_c1", "lambda_c2", "lambda_c3"}, {}};
  for (auto& r : rows) t.rows.push_back({r.value, r.c1, r.c2, r.c3});
  auto f = t.render(fmt);
  json j = json::parse(f.content);
  j["param_name"] = liouvillian::scan_parameter_name(which);
  return {{"scan.json", j.dump(1) + "\n"}};
}

// ---- simulate ----------------------------------------------------------------------------

sim::TrajectoryState parse_init(const std::string& s) {
  if (s == "ground") return sim::QubitAngle{kPi};
  if (s == "excited") return sim::QubitAngle{0.0};
  if (s == "bright") return sim::Bright{};
  if (s.rfind("theta:", 0) == 0) {
    try {
      return sim::QubitAngle{std::stod(s.substr(6))};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown init_state '" + s + "'");
}

std::vector<LambdaRun> simulate_grid(const ExperimentConfig& c) {
  c.validate();
  const auto init = parse_init(c.init_state);
  const bool want_ens = c.analyses.count("ensemble") || c.analyses.count("transitions");
  const bool want_dwell = c.analyses.count("dwell") || c.analyses.count("transitions");
  std::vector<LambdaRun> runs;
  for (std::size_t i = 0; i < c.lambda_grid.size(); ++i) {
    LambdaRun run;
    run.lambda = c.lambda_grid[i];
    ModelParams p = c.params;
    p.set_lambda(run.lambda);
    sim::EnsembleOptions o;
    o.n_traj = c.n_traj;
    o.duration = c.duration;
    o.seed = c.seed + (static_cast<std::uint64_t>(i) << 40);
    o.threads = c.threads;
    o.stop_at_first_click = !want_ens && !c.analyses.count("hmm");
    o.keep_records = c.analyses.count("hmm") > 0;
    o.record_limit = c.record_limit;
    try {
      run.main = sim::run_ensemble(p, init, o);
      if (want_dwell) {
        sim::EnsembleOptions d = o;
        d.n_traj = c.dwell_n_traj ? c.dwell_n_traj : c.n_traj;
        d.duration = c.dwell_duration;
        d.seed = o.seed | (1ull << 63);
        d.stop_at_first_click = true;
        d.keep_records = false;
        d.dwell = true;
        d.dwell_bins = c.dwell_bins;
        run.dwell = sim::run_ensemble(p, sim::QubitAngle{0.0}, d);
      }
    } catch (const sim::StorageExhausted& e) {
      run.error = e.what();
      if (!run.main)
        run.main = *e.partial;
      runs.push_back(std::move(run));
      break;
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

json store_to_json(const sim::Store& s) {
  const auto& a = s.acc;
  json budget = json::array();
  for (const auto& b : a.budget) budget.push_back(std::vector<std::uint64_t>(b.begin(), b.end()));
  json init;
  if (auto* q = std::get_if<sim::QubitAngle>(&s.init))
    init = q->theta;
  else
    init = "bright";
  return {{"params", params_to_json(s.params)},
          {"options",
           {{"n_traj", s.options.n_traj},
            {"duration", s.options.duration},
            {"seed", s.options.seed},
            {"stop_at_first_click", s.options.stop_at_first_click},
            {"keep_records", s.options.keep_records},
            {"dwell", s.options.dwell},
            {"dwell_bins", s.options.dwell_bins}}},
          {"init", init},
          {"n_traj", s.n_traj},
          {"n_windows", s.n_windows},
          {"steps_per_window", s.steps_per_window},
          {"warnings", s.warnings},
          {"acc",
           {{"ens_p1", a.ens_p1},
            {"ens_p1sq", a.ens_p1sq},
            {"ens_x", a.ens_x},
            {"ens_z", a.ens_z},
            {"ens_pb", a.ens_pb},
            {"surv", a.surv},
            {"verified", a.verified},
            {"cond_p1", a.cond_p1},
            {"cond_p1sq", a.cond_p1sq},
            {"cond_x", a.cond_x},
            {"cond_z", a.cond_z},
            {"budget", budget},
            {"first_runs", a.first_runs},
            {"later_runs", a.later_runs},
            {"censored_first", a.censored_first},
            {"dwell_bins", a.dwell_bins},
            {"dwell_sum", a.dwell_sum},
            {"dwell_sumsq", a.dwell_sumsq}}}};
}

sim::Store store_from_json(const json& j) {
  sim::Store s;
  s.params = params_from_json(j.at("params"));
  const auto& o = j.at("options");
  s.options.n_traj = o.at("n_traj");
  s.options.duration = o.at("duration");
  s.options.seed = o.at("seed");
  s.options.stop_at_first_click = o.at("stop_at_first_click");
  s.options.keep_records = o.at("keep_records");
  s.options.dwell = o.at("dwell");
  s.options.dwell_bins = o.at("dwell_bins");
  if (j.at("init").is_string())
    s.init = sim::Bright{};
  else
    s.init = sim::QubitAngle{j.at("init").get<double>()};
  s.n_traj = j.at("n_traj");
  s.n_windows = j.at("n_windows");
  s.steps_per_window = j.at("steps_per_window");
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  const auto& a = j.at("acc");
  auto& c = s.acc;
  a.at("ens_p1").get_to(c.ens_p1);
  a.at("ens_p1sq").get_to(c.ens_p1sq);
  a.at("ens_x").get_to(c.ens_x);
  a.at("ens_z").get_to(c.ens_z);
  a.at("ens_pb").get_to(c.ens_pb);
  a.at("surv").get_to(c.surv);
  a.at("verified").get_to(c.verified);
  a.at("cond_p1").get_to(c.cond_p1);
  a.at("cond_p1sq").get_to(c.cond_p1sq);
  a.at("cond_x").get_to(c.cond_x);
  a.at("cond_z").get_to(c.cond_z);
  for (const auto& b : a.at("budget")) {
    std::array<std::uint64_t, sim::kBudgetKinds> arr{};
    for (int k = 0; k < sim::kBudgetKinds; ++k) arr[k] = b.at(k);
    c.budget.push_back(arr);
  }
  a.at("first_runs").get_to(c.first_runs);
  a.at("later_runs").get_to(c.later_runs);
  c.censored_first = a.at("censored_first");
  c.dwell_bins = a.at("dwell_bins");
  a.at("dwell_sum").get_to(c.dwell_sum);
  a.at("dwell_sumsq").get_to(c.dwell_sumsq);
  return s;
}

std::vector<OutputFile> simulation_outputs(const ExperimentConfig& c,
                                           const std::vector<LambdaRun>& runs) {
  std::vector<OutputFile> out;
  std::ostringstream grid;
  grid.precision(15);
  grid << "index,lambda,alpha_per_s,status\n";
  // results do not depend on where or how many threads ran them
  ExperimentConfig portable = c;
  portable.threads = 1;
  portable.output_dir = "out";
  json store = {{"config", serialize_config(portable)}, {"runs", json::array()}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    grid << i << ',' << r.lambda << ',' << 2.0 * r.lambda * c.params.omega_s << ','
         << (r.error.empty() ? "ok" : "partial") << '\n';
    json jr = {{"lambda", r.lambda}, {"error", r.error}};
    const std::string p = tag(i);
    if (r.main) {
      const auto& s = *r.main;
      jr["main"] = store_to_json(s);
      if (c.analyses.count("conditional")) {
        out.push_back({p + "conditional_p1.csv",
                       sim::series_to_csv(sim::conditional_population(s), "p1")});
        out.push_back(
            {p + "noclick_p0.csv", sim::series_to_csv(sim::noclick_probability(s), "p0")});
      }
      if (c.analyses.count("ensemble") && !s.options.stop_at_first_click)
        out.push_back(
            {p + "ensemble_p1.csv", sim::series_to_csv(sim::ensemble_population(s), "p1")});
      if (c.analyses.count("noclick_hist"))
        out.push_back({p + "noclick_runs.csv", sim::runs_to_csv(sim::noclick_duration_histogram(s))});
      if (c.analyses.count("hmm")) out.push_back({p + "records.csv", sim::records_to_csv(s)});
      auto b = sim::error_budget(s, s.n_windows * s.params.t_int);
      std::ostringstream os;
      os.precision(12);
      os << "kind,fraction,sigma\n";
      for (int k = 0; k < sim::kBudgetKinds; ++k)
        os << sim::budget_name(k) << ',' << b.fraction[k] << ',' << b.sigma[k] << '\n';
      out.push_back({p + "error_budget.csv", os.str()});
    }
    if (r.dwell) {
      const auto& s = *r.dwell;
      jr["dwell"] = store_to_json(s);
      const double n = static_cast<double>(s.n_traj);
      out.push_back(
          {p + "dwell_direct.csv", sim::histogram_to_csv(sim::dwell_histogram_direct(s), n)});
      try {
        auto e = sim::dwell_histogram_experimental(s, c.dwell_bins);
        out.push_back({p + "dwell_experimental.csv", sim::histogram_to_csv(e.selected(), n)});
      } catch (const MappingError& e) {
        jr["dwell_mapping_error"] = e.what();
      }
    }
    store["runs"].push_back(std::move(jr));
  }
  out.push_back({"lambda_grid.csv", grid.str()});
  if (c.analyses.count("transitions")) {
    auto e = extract_transitions(runs, c.n_boot, c.seed);
    out.push_back({"transitions.json", extraction_to_json(e).dump(1) + "\n"});
  }
  out.push_back({"store.json", store.dump() + "\n"});
  return out;
}

std::vector<OutputFile> cmd_simulate(const ExperimentConfig& c) {
  return simulation_outputs(c, simulate_grid(c));
}

std::vector<LambdaRun> load_runs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw NotFoundError("cannot open store '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError("store '" + path + "': " + e.what());
  }
  std::vector<LambdaRun> runs;
  for (const auto& jr : j.at("runs")) {
    LambdaRun r;
    r.lambda = jr.at("lambda");
    r.error = jr.value("error", "");
    if (jr.contains("main")) r.main = store_from_json(jr.at("main"));
    if (jr.contains("dwell")) r.dwell = store_from_json(jr.at("dwell"));
    runs.push_back(std::move(r));
  }
  return runs;
}

// ---- extract -----------------------------------------------------------------------------

est::CoalescenceFit coalescence_from_series(const std::vector<double>& lambdas,
                                            const std::vector<std::vector<double>>& series,
                                            double sampling, bool drop_zero, int n_boot,
                                            std::uint64_t seed, std::vector<cplx>* deltas,
                                            const est::CoalescenceOptions& copt) {
  if (lambdas.size() != series.size()) throw DomainError("lambda / series size mismatch");
  const int order = 3;  // ensemble: zero pole plus the slow pair
  std::vector<double> lam;
  std::vector<liouvillian::SortedSpectrum> spectra;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].size() < static_cast<std::size_t>(3 * order)) continue;
    est::PoleSet ps;
    try {
      ps = est::matrix_pencil(series[i], sampling, order);
    } catch (const std::exception&) {
      continue;
    }
    if (ps.order_reduced || static_cast<int>(ps.poles.size()) != order) continue;
    std::vector<cplx> poles = ps.poles;
    if (drop_zero) {
      auto it = std::min_element(poles.begin(), poles.end(),
                                 [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
      poles.erase(it);
    }
    lam.push_back(lambdas[i]);
    spectra.push_back(liouvillian::sort_eigenvalues(poles));
  }
  if (spectra.size() < 4) throw FitError("fewer than four usable pole sets", {});
  auto d = liouvillian::pair_splitting(spectra);
  if (deltas) *deltas = d;
  est::CoalescenceOptions o = copt;
  o.n_boot = n_boot;
  o.seed = seed;
  return est::fit_coalescence(lam, d, {}, o);
}

std::optional<XiPoint> dwell_exponent(double lambda, const sim::Store& s, std::string* error) {
  auto pick = [](const sim::DwellHistogram& a, const sim::DwellHistogram& b) {
    auto peak = [](const sim::DwellHistogram& h) {
      double m = 0.0;
      for (std::size_t i = 0; i < h.values.size(); ++i) {
        double c = h.center(i);
        if (c > -kPi / 2 && c < 0.0) m = std::max(m, h.values[i]);
      }
      return m;
    };
    return peak(b) > peak(a);
  };
  XiPoint pt{lambda, kNaN, kNaN, false, false};
  sim::DwellHistogram h;
  try {
    auto e = sim::dwell_histogram_experimental(s, s.acc.dwell_bins);
    h = e.selected();
    pt.used_shifted = e.used_shifted;
  } catch (const MappingError& e) {
    pt.fallback = true;
    auto base = sim::dwell_histogram_direct(s, false), sh = sim::dwell_histogram_direct(s, true);
    pt.used_shifted = pick(base, sh);
    h = pt.used_shifted ? sh : base;
  }
  try {
    auto f = est::fit_dwell(h);
    pt.xi = f.xi;
    pt.sigma = f.sigma_xi;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return std::nullopt;
  }
  if (!std::isfinite(pt.xi) || !(pt.sigma > 0.0)) {
    if (error) *error = "non-finite dwell fit";
    return std::nullopt;
  }
  return pt;
}

Extraction extract_transitions(const std::vector<LambdaRun>& runs, int n_boot,
                               std::uint64_t seed) {
  Extraction ex;
  std::vector<double> lam_main;
  std::vector<std::vector<double>> p0, p1;
  double sampling = 0.0, omega = 0.0;
  bool have_ens = true;
  for (const auto& r : runs) {
    if (!r.main) continue;
    const auto& s = *r.main;
    sampling = s.params.t_int;
    omega = s.params.omega_s;
    lam_main.push_back(r.lambda);
    std::vector<double> a;
    const double floor = std::max(50.0, 1e-3 * s.n_traj);
    for (std::size_t j = 0; j < s.acc.surv.size() && s.acc.surv[j] >= floor; ++j)
      a.push_back(static_cast<double>(s.acc.surv[j]) / s.n_traj);
    p0.push_back(std::move(a));
    if (s.options.stop_at_first_click) {
      have_ens = false;
    } else {
      std::vector<double> b;
      for (double v : s.acc.ens_p1) b.push_back(v / s.n_traj);
      p1.push_back(std::move(b));
    }
  }

  auto stage = [&](StageResult& out, bool drop_zero, const std::vector<std::vector<double>>& ser,
                   std::uint64_t stream) {
    try {
      std::vector<cplx> d;
      auto f = coalescence_from_series(lam_main, ser, sampling, drop_zero, n_boot, seed + stream, &d);
      out.value = f.lambda_c;
      out.sigma = f.sigma_lambda_c;
      out.details = {{"window", {f.window_lo, f.window_hi}},
                     {"a", f.a},
                     {"b", f.b},
                     {"residual_norm", f.residual_norm},
                     {"omega_s", omega}};
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };
  if (lam_main.empty()) {
    ex.lambda1.error = ex.lambda3.error = "no main runs in store";
  } else {
    stage(ex.lambda1, false, p0, 0);
    if (have_ens)
      stage(ex.lambda3, true, p1, 1);
    else
      ex.lambda3.error = "ensemble series not recorded";
  }

  std::vector<double> lx, xs, sx;
  json pts = json::array();
  for (const auto& r : runs) {
    if (!r.dwell || r.lambda <= 1.0) continue;
    std::string err;
    auto pt = dwell_exponent(r.lambda, *r.dwell, &err);
    if (!pt) {
      pts.push_back({{"lambda", r.lambda}, {"error", err}});
      continue;
    }
    lx.push_back(pt->lambda);
    xs.push_back(pt->xi);
    sx.push_back(pt->sigma);
    pts.push_back({{"lambda", pt->lambda},
                   {"xi", pt->xi},
                   {"sigma", pt->sigma},
                   {"shifted_grid", pt->used_shifted},
                   {"direct_fallback", pt->fallback}});
  }
  ex.lambda2.details["points"] = pts;
  if (lx.size() < 3) {
    ex.lambda2.error = "fewer than three dwell exponents";
  } else {
    try {
      auto f = est::fit_xi_curve(lx, xs, sx);
      ex.lambda2.value = f.lambda_c2;
      ex.lambda2.sigma = f.sigma_lambda_c2;
      ex.lambda2.details["delta"] = f.delta;
      ex.lambda2.details["chi2"] = f.chi2;
    } catch (const std::exception& e) {
      ex.lambda2.error = e.what();
    }
  }
  return ex;
}

json extraction_to_json(const Extraction& e) {
  auto one = [](const StageResult& s) {
    json j = {{"details", s.details}};
    j["value"] = s.value ? json(*s.value) : json(nullptr);
    j["sigma"] = s.sigma ? json(*s.sigma) : json(nullptr);
    if (!s.error.empty()) j["error"] = s.error;
    return j;
  };
  return {{"lambda1_obs", one(e.lambda1)},
          {"lambda2_obs", one(e.lambda2)},
          {"lambda3_obs", one(e.lambda3)}};
}

std::vector<OutputFile> cmd_extract(const ExperimentConfig& c, const std::string& store_path) {
  auto runs = load_runs(store_path);
  auto e = extract_transitions(runs, c.n_boot, c.seed);
  return {{"transitions_obs.json", extraction_to_json(e).dump(1) + "\n"}};
}

// ---- calibrate ---------------------------------------------------------------------------

std::vector<est::RecordSet> parse_records_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ls(l);
    while (std::getline(ls, cur, ',')) f.push_back(cur);
    if (!l.empty() && l.back() == ',') f.emplace_back();
    return f;
  };
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    header = split(line);
    break;
  }
  if (header.empty()) throw ParseError("empty input: no records");
  auto col = [&](const std::string& n) -> int {
    auto it = std::find(header.begin(), header.end(), n);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_label = col("label"), c_traj = col("trajectory_id"), c_win = col("window_index"),
            c_out = col("outcome");
  if (c_traj < 0 || c_win < 0 || c_out < 0)
    throw ParseError("line 1: header needs trajectory_id, window_index, outcome");

  // label -> trajectory -> outcomes
  std::map<double, std::map<std::uint64_t, est::Sequence>> data;
  std::size_t n_rows = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto f = split(line);
    auto bad = [&](const std::string& why) {
      return ParseError("line " + std::to_string(lineno) + ": " + why + " in row '" + line + "'");
    };
    if (f.size() < header.size()) throw bad("too few fields");
    double label = 0.0;
    unsigned long long traj = 0, win = 0;
    int outcome = 0;
    try {
      std::size_t used = 0;
      if (c_label >= 0) {
        label = std::stod(f[c_label], &used);
        if (used != f[c_label].size()) throw bad("bad label");
      }
      traj = std::stoull(f[c_traj], &used);
      if (used != f[c_traj].size()) throw bad("bad trajectory_id");
      win = std::stoull(f[c_win], &used);
      if (used != f[c_win].size()) throw bad("bad window_index");
      outcome = std::stoi(f[c_out], &used);
      if (used != f[c_out].size()) throw bad("bad outcome");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw bad("unparseable number");
    }
    if (outcome != 0 && outcome != 1) throw bad("outcome must be 0 or 1");
    auto& seq = data[label][traj];
    if (win != seq.size()) throw bad("window_index out of sequence");
    seq.push_back(outcome ? sim::Outcome::Click : sim::Outcome::NoClick);
    ++n_rows;
  }
  if (n_rows == 0) throw ParseError("empty input: header without records");
  std::vector<est::RecordSet> sets;
  for (auto& [label, trajs] : data) {
    est::RecordSet rs;
    rs.label = label;
    for (auto& [id, seq] : trajs) rs.records.push_back(std::move(seq));
    sets.push_back(std::move(rs));
  }
  return sets;
}

est::CalibrationTable cmd_calibrate(const std::string& text, double window, double omega_s,
                                    const est::HmmParams* init) {
  if (!(window > 0.0)) throw ConfigError("window must be > 0");
  auto sets = parse_records_csv(text);
  est::HmmParams guess =
      init ? *init : est::HmmParams::from_probabilities(0.05, 0.1, 0.0, 0.0, 0.02, 0.02, window);
  guess.dt = window;
  return est::empirical_click_calibration(sets, guess, omega_s);
}

std::vector<OutputFile> calibration_outputs(const est::CalibrationTable& t, Format fmt) {
  Table tab{"calibration",
            {"label", "alpha_per_s", "tau_b_s", "lambda", "p_fp", "p_fn", "gamma_1_up_per_s",
             "gamma_1_down_per_s", "converged"},
            {}};
  for (const auto& r : t.rows)
    tab.rows.push_back({r.label, r.alpha, r.tau_b, r.lambda, r.fit.p_fp, r.fit.p_fn,
                        r.fit.gamma_1_up, r.fit.gamma_1_down, r.converged ? 1.0 : 0.0});
  json summary = {{"quad_coeff_per_s", t.quad_coeff}, {"quad_rel_residual", t.quad_rel_residual}};
  return {tab.render(fmt), {"calibration_summary.json", summary.dump(1) + "\n"}};
}

}  // namespace zeno::pipeline
