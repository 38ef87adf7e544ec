#include "zeno/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "zeno/errors.hpp"

namespace zeno::pipeline {

const std::set<std::string> kKnownAnalyses{"conditional", "ensemble", "noclick_hist", "dwell",
                                           "transitions", "hmm"};

namespace {

std::string trim(std::string s) {
  auto ns = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), ns));
  s.erase(std::find_if(s.rbegin(), s.rend(), ns).base(), s.end());
  return s;
}

double parse_number(const std::string& s, std::size_t& used) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc()) throw ConfigError("expected a number in '" + s + "'");
  used = static_cast<std::size_t>(r.ptr - s.data());
  return v;
}

double unit_factor(const std::string& u, bool& is_time) {
  static const std::map<std::string, std::pair<double, bool>> table{
      {"", {1.0, false}},      {"s", {1.0, true}},       {"ms", {1e-3, true}},
      {"us", {1e-6, true}},    {"µs", {1e-6, true}},     {"ns", {1e-9, true}},
      {"Hz", {1.0, false}},    {"kHz", {1e3, false}},    {"MHz", {1e6, false}},
      {"GHz", {1e9, false}},   {"/s", {1.0, false}},     {"/ms", {1e3, false}},
      {"/us", {1e6, false}},   {"/ns", {1e9, false}},    {"rad/s", {1.0, false}},
      {"ms^-1", {1e3, false}}, {"us^-1", {1e6, false}}, {"s^-1", {1.0, false}}};
  auto it = table.find(u);
  if (it == table.end()) throw ConfigError("unknown unit '" + u + "'");
  is_time = it->second.second;
  return it->second.first;
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

double parse_quantity(const std::string& text) {
  std::string s = trim(text);
  s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
  if (s.empty()) throw ConfigError("empty quantity");
  double mult = 1.0;
  if (s.rfind("2pi*", 0) == 0) {
    mult = 2.0 * kPi;
    s = s.substr(4);
  }
  bool inverse = false;
  if (s.rfind("1/", 0) == 0) {
    inverse = true;
    s = s.substr(2);
  }
  std::size_t used = 0;
  double v = parse_number(s, used);
  bool is_time = false;
  double f = unit_factor(s.substr(used), is_time);
  v *= f;
  if (inverse) {
    if (v == 0.0) throw ConfigError("division by zero in '" + text + "'");
    v = 1.0 / v;
  }
  return mult * v;
}

std::vector<double> parse_grid(const std::string& text) {
  std::string s = trim(text);
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    std::stringstream ss(s);
    std::string a, b, c;
    std::getline(ss, a, ':');
    std::getline(ss, b, ':');
    std::getline(ss, c, ':');
    double lo = parse_quantity(a), hi = parse_quantity(b);
    long n = std::lround(parse_quantity(c));
    if (n < 1) throw ConfigError("grid needs at least one point");
    for (long i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  } else {
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) out.push_back(parse_quantity(item));
  }
  if (out.empty()) throw ConfigError("empty grid");
  return out;
}

void ExperimentConfig::validate() const {
  params.validate();
  if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    if (!(lambda_grid[i] > lambda_grid[i - 1])) throw ConfigError("lambda grid must increase");
  for (double l : lambda_grid)
    if (!(l >= 0.0)) throw ConfigError("lambda grid values must be >= 0");
  if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
  for (auto& a : analyses)
    if (!kKnownAnalyses.count(a)) throw ConfigError("unknown analysis '" + a + "'");
  if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
  if (init_state != "ground" && init_state != "excited" && init_state != "bright" &&
      init_state.rfind("theta:", 0) != 0)
    throw ConfigError("init must be ground, excited, bright or theta:<rad>");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.params = ModelParams::experimental(0.0);
  c.lambda_grid = parse_grid("0.1:3.1:31");
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c = default_config();
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      auto& p = c.params;
      if (full == "model.omega_s") p.omega_s = parse_quantity(val);
      else if (full == "model.gamma1") p.gamma1 = parse_quantity(val);
      else if (full == "model.gamma_phi") p.gamma_phi = parse_quantity(val);
      else if (full == "model.n_th") p.n_th = parse_quantity(val);
      else if (full == "model.tau_b") p.tau_b = parse_quantity(val);
      else if (full == "model.p_fp") p.p_fp = parse_quantity(val);
      else if (full == "model.p_fn") p.p_fn = parse_quantity(val);
      else if (full == "model.kappa_fp") p.kappa_fp = parse_quantity(val);
      else if (full == "model.t_int") p.t_int = parse_quantity(val);
      else if (full == "model.dt_sim") p.dt_sim = parse_quantity(val);
      else if (full == "model.t1") p.gamma1 = 1.0 / parse_quantity(val);
      else if (full == "model.tphi") p.gamma_phi = 1.0 / parse_quantity(val);
      else if (full == "sweep.lambda_grid") c.lambda_grid = parse_grid(val);
      else if (full == "run.n_traj") c.n_traj = static_cast<std::size_t>(std::llround(parse_quantity(val)));
      else if (full == "run.duration") c.duration = parse_quantity(val);
      else if (full == "run.init") c.init_state = val;
      else if (full == "run.seed") c.seed = std::stoull(val);
      else if (full == "run.threads") c.threads = static_cast<unsigned>(std::stoul(val));
      else if (full == "run.output_dir") c.output_dir = val;
      else if (full == "run.record_limit") c.record_limit = static_cast<std::size_t>(std::llround(parse_quantity(val)));
      else if (full == "run.analyses") {
        c.analyses.clear();
        std::stringstream ss(val);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!trim(item).empty()) c.analyses.insert(trim(item));
      } else if (full == "dwell.n_traj") c.dwell_n_traj = static_cast<std::size_t>(std::llround(parse_quantity(val)));
      else if (full == "dwell.duration") c.dwell_duration = parse_quantity(val);
      else if (full == "dwell.bins") c.dwell_bins = static_cast<int>(std::lround(parse_quantity(val)));
      else if (full == "extract.n_boot") c.n_boot = static_cast<int>(std::lround(parse_quantity(val)));
      else throw ConfigError("unknown key '" + full + "'");
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for '" + full + "'");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  const auto& p = c.params;
  os << "[model]\n"
     << "omega_s = " << fmt(p.omega_s) << "\n"
     << "gamma1 = " << fmt(p.gamma1) << "\n"
     << "gamma_phi = " << fmt(p.gamma_phi) << "\n"
     << "n_th = " << fmt(p.n_th) << "\n"
     << "tau_b = " << fmt(p.tau_b) << "\n"
     << "p_fp = " << fmt(p.p_fp) << "\n"
     << "p_fn = " << fmt(p.p_fn) << "\n"
     << "kappa_fp = " << fmt(p.kappa_fp) << "\n"
     << "t_int = " << fmt(p.t_int) << "\n"
     << "dt_sim = " << fmt(p.dt_sim) << "\n\n[sweep]\nlambda_grid = ";
  for (std::size_t i = 0; i < c.lambda_grid.size(); ++i)
    os << (i ? "," : "") << fmt(c.lambda_grid[i]);
  os << "\n\n[run]\n"
     << "n_traj = " << c.n_traj << "\n"
     << "duration = " << fmt(c.duration) << "\n"
     << "init = " << c.init_state << "\n"
     << "seed = " << c.seed << "\n"
     << "threads = " << c.threads << "\n"
     << "output_dir = " << c.output_dir << "\n"
     << "record_limit = " << c.record_limit << "\n"
     << "analyses = ";
  bool first = true;
  for (auto& a : c.analyses) {
    os << (first ? "" : ",") << a;
    first = false;
  }
  os << "\n\n[dwell]\n"
     << "n_traj = " << c.dwell_n_traj << "\n"
     << "duration = " << fmt(c.dwell_duration) << "\n"
     << "bins = " << c.dwell_bins << "\n\n[extract]\n"
     << "n_boot = " << c.n_boot << "\n";
  return os.str();
}

}  // namespace zeno::pipeline
