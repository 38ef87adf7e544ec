// Store analyses: population series, run histograms, dwell estimators, error budget.
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "zeno/errors.hpp"
#include "zeno/trajectory.hpp"

namespace zeno::sim {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Series conditional_population(const Store& s) {
  if (s.n_traj == 0) throw DomainError("empty store");
  const auto& a = s.acc;
  Series out;
  for (std::size_t j = 0; j < a.surv.size(); ++j) {
    out.t.push_back(j * s.params.t_int);
    const auto n = a.verified[j];
    out.count.push_back(n);
    if (n == 0) {
      out.value.push_back(kNaN);
      out.sigma.push_back(kNaN);
      out.omitted.push_back(true);
      continue;
    }
    double mean = a.cond_p1[j] / n;
    double var = std::max(0.0, a.cond_p1sq[j] / n - mean * mean);
    out.value.push_back(mean);
    out.sigma.push_back(n > 1 ? std::sqrt(var / (n - 1)) : kNaN);
    out.omitted.push_back(false);
  }
  return out;
}

Series noclick_probability(const Store& s) {
  if (s.n_traj == 0) throw DomainError("empty store");
  Series out;
  const double n = static_cast<double>(s.n_traj);
  for (std::size_t j = 0; j < s.acc.surv.size(); ++j) {
    double p = s.acc.surv[j] / n;
    out.t.push_back(j * s.params.t_int);
    out.value.push_back(p);
    out.sigma.push_back(std::sqrt(p * (1.0 - p) / n));
    out.count.push_back(s.acc.surv[j]);
    out.omitted.push_back(false);
  }
  return out;
}

Series ensemble_population(const Store& s) {
  if (s.n_traj == 0) throw DomainError("empty store");
  if (s.options.stop_at_first_click)
    throw DomainError("ensemble series not recorded (stop_at_first_click)");
  Series out;
  const double n = static_cast<double>(s.n_traj);
  for (std::size_t j = 0; j < s.acc.ens_p1.size(); ++j) {
    double mean = s.acc.ens_p1[j] / n;
    double var = std::max(0.0, s.acc.ens_p1sq[j] / n - mean * mean);
    out.t.push_back(j * s.params.t_int);
    out.value.push_back(mean);
    out.sigma.push_back(n > 1 ? std::sqrt(var / (n - 1)) : kNaN);
    out.count.push_back(s.n_traj);
    out.omitted.push_back(false);
  }
  return out;
}

std::uint64_t RunHistogram::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

RunHistogram noclick_duration_histogram(const Store& s, bool first_only) {
  RunHistogram h;
  h.window = s.params.t_int;
  h.counts = s.acc.first_runs;
  h.censored = s.acc.censored_first;
  if (!first_only) {
    if (h.counts.size() < s.acc.later_runs.size()) h.counts.resize(s.acc.later_runs.size(), 0);
    for (std::size_t i = 0; i < s.acc.later_runs.size(); ++i) h.counts[i] += s.acc.later_runs[i];
  }
  return h;
}

DwellHistogram dwell_histogram_direct(const Store& s, bool shifted) {
  if (!s.options.dwell) throw DomainError("dwell accumulation was not enabled");
  const int nb = s.acc.dwell_bins;
  DwellHistogram h = make_dwell_grid(nb, shifted);
  const double n = static_cast<double>(s.n_traj), w = h.bin_width();
  const int g = shifted ? 1 : 0;
  for (int i = 0; i < nb; ++i) {
    double mean = s.acc.dwell_sum[g][i] / n;
    double var = std::max(0.0, s.acc.dwell_sumsq[g][i] / n - mean * mean);
    h.values[i] = mean / w;
    h.sigma[i] = n > 1 ? std::sqrt(var / (n - 1)) / w : 0.0;
  }
  return h;
}

ExperimentalDwell dwell_histogram_experimental(const Store& s, int bins, std::size_t min_count) {
  const auto& a = s.acc;
  const double T = s.params.t_int, n = static_cast<double>(s.n_traj);
  // conditional tomography map, limited to well-populated times
  std::vector<double> theta;
  for (std::size_t j = 0; j < a.surv.size(); ++j) {
    if (a.verified[j] < min_count) break;
    double x = a.cond_x[j] / a.verified[j], z = a.cond_z[j] / a.verified[j];
    double th = std::atan2(-x, z);
    if (!theta.empty()) th = theta.back() + std::remainder(th - theta.back(), kTwoPi);
    theta.push_back(th);
  }
  if (theta.size() < 2) throw MappingError("fewer than two mapped times");
  const double dir = theta.back() < theta.front() ? -1.0 : 1.0;
  constexpr double kTol = 0.05;
  for (std::size_t j = 1; j < theta.size(); ++j) {
    double step = dir * (theta[j] - theta[j - 1]);
    if (step < -kTol) {
      std::ostringstream os;
      os << "theta(t) not monotone at t = " << j * T << " s (step " << theta[j] - theta[j - 1]
         << " rad)";
      throw MappingError(os.str());
    }
    if (step < 0.0) theta[j] = theta[j - 1];  // clamp sub-tolerance jitter
  }

  const std::size_t nmap = theta.size() - 1;
  // survival-weighted exposure per window, and its per-trajectory variance via run lengths
  std::vector<double> expo(nmap);
  for (std::size_t j = 0; j < nmap; ++j) expo[j] = 0.5 * T * (a.surv[j] + a.surv[j + 1]) / n;

  ExperimentalDwell out;
  out.theta_map = theta;
  auto build = [&](bool shifted) {
    DwellHistogram h = make_dwell_grid(bins, shifted);
    const double w = h.bin_width();
    // c[j][b]: exposure of window j falling in bin b, per surviving trajectory
    std::vector<std::vector<double>> c(nmap, std::vector<double>(bins, 0.0));
    for (std::size_t j = 0; j < nmap; ++j) {
      std::vector<double> tmp(bins, 0.0);
      credit_segment(tmp, shifted, theta[j], theta[j + 1], 1.0);
      c[j] = tmp;
      for (int b = 0; b < bins; ++b) h.values[b] += expo[j] * tmp[b] / w;
    }
    // first registered click in window L: full exposure before L, half in L
    std::vector<double> ex2(bins, 0.0), cum(bins, 0.0);
    auto prob_run = [&](std::size_t L) {
      double p = L < a.first_runs.size() ? a.first_runs[L] / n : 0.0;
      return p;
    };
    double tail = 1.0;
    for (std::size_t L = 0; L < nmap; ++L) {
      const double pl = prob_run(L);
      tail -= pl;
      for (int b = 0; b < bins; ++b) {
        const double x = cum[b] + 0.5 * T * c[L][b] / w;
        ex2[b] += pl * x * x;
        cum[b] += T * c[L][b] / w;
      }
    }
    for (int b = 0; b < bins; ++b) ex2[b] += std::max(tail, 0.0) * cum[b] * cum[b];
    for (int b = 0; b < bins; ++b) {
      double var = std::max(0.0, ex2[b] - h.values[b] * h.values[b]);
      h.sigma[b] = std::sqrt(var / n);
    }
    return h;
  };
  out.base = build(false);
  out.shifted = build(true);
  auto peak = [](const DwellHistogram& h) {
    double m = 0.0;
    for (std::size_t i = 0; i < h.values.size(); ++i) {
      double c = h.center(i);
      if (c > -kPi / 2 && c < 0.0) m = std::max(m, h.values[i]);
    }
    return m;
  };
  out.used_shifted = peak(out.shifted) > peak(out.base);
  return out;
}

ErrorBudget error_budget(const Store& s, double target) {
  const std::size_t j = static_cast<std::size_t>(std::llround(target / s.params.t_int));
  if (j >= s.acc.surv.size()) throw DomainError("target duration beyond simulated range");
  ErrorBudget b;
  b.survivors = s.acc.surv[j];
  for (int k = 0; k < kBudgetKinds; ++k) {
    if (b.survivors == 0) {
      b.fraction[k] = kNaN;
      b.sigma[k] = kNaN;
      continue;
    }
    double f = static_cast<double>(s.acc.budget[j][k]) / b.survivors;
    b.fraction[k] = f;
    b.sigma[k] = std::sqrt(std::max(f * (1.0 - f), 1.0 / b.survivors) / b.survivors);
  }
  return b;
}

std::string records_to_csv(const Store& s) {
  std::ostringstream os;
  os.precision(9);
  os << "trajectory_id,window_index,outcome,theta_snapshot_rad\n";
  for (std::size_t r = 0; r < s.records.size(); ++r) {
    const auto& rec = s.records[r];
    const auto& th = s.theta_snapshots[r];
    for (std::size_t w = 0; w < rec.outcomes.size(); ++w) {
      os << rec.trajectory_id << ',' << w << ',' << static_cast<int>(rec.outcomes[w]) << ',';
      if (w < th.size() && !std::isnan(th[w])) os << th[w];
      os << '\n';
    }
  }
  return os.str();
}

std::string histogram_to_csv(const DwellHistogram& h, double n_traj) {
  std::ostringstream os;
  os.precision(12);
  os << "bin_left_rad,bin_right_rad,value_s_per_rad,sigma_s_per_rad,count\n";
  for (std::size_t i = 0; i < h.values.size(); ++i)
    os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.values[i] << ',' << h.sigma[i] << ','
       << n_traj << '\n';
  return os.str();
}

std::string runs_to_csv(const RunHistogram& h) {
  std::ostringstream os;
  os.precision(12);
  os << "bin_left_s,bin_right_s,value_probability,count\n";
  const double tot = static_cast<double>(h.total() + h.censored);
  for (std::size_t L = 0; L < h.counts.size(); ++L)
    os << L * h.window << ',' << (L + 1) * h.window << ',' << (tot > 0 ? h.counts[L] / tot : 0.0)
       << ',' << h.counts[L] << '\n';
  return os.str();
}

std::string series_to_csv(const Series& s, const std::string& name) {
  std::ostringstream os;
  os.precision(12);
  os << "t_s," << name << ",sigma,count\n";
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    os << s.t[i] << ',';
    if (!s.omitted[i]) os << s.value[i];
    os << ',';
    if (!s.omitted[i]) os << s.sigma[i];
    os << ',' << s.count[i] << '\n';
  }
  return os.str();
}

}  // namespace zeno::sim
