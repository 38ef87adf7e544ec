#include "zeno/trajectory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>
#include <unsupported/Eigen/MatrixFunctions>

#include "zeno/errors.hpp"

namespace zeno::sim {

namespace {
constexpr std::uint32_t kStepPurpose = 0;
constexpr std::uint32_t kFlipPurpose = 1;

double angle_of(double c0, double c1) { return std::remainder(2.0 * std::atan2(c0, c1), kTwoPi); }
}  // namespace

Stepper::Stepper(const ModelParams& p) {
  p.validate();
  const double dt = p.dt_sim;
  alpha_ = p.alpha;
  gamma1_ = p.gamma1;
  gamma_up_ = p.gamma_up();
  deph_ = 0.5 * p.gamma_phi;
  Eigen::Matrix2d a;
  a << -0.5 * (alpha_ + gamma_up_) - 0.5 * deph_, -0.5 * p.omega_s,  //
      0.5 * p.omega_s, -0.5 * gamma1_ - 0.5 * deph_;
  Eigen::Matrix2d g = (a * dt).exp();
  g00_ = g(0, 0);
  g01_ = g(0, 1);
  g10_ = g(1, 0);
  g11_ = g(1, 1);
  q_exit_ = -std::expm1(-dt / p.tau_b);
  // detector exit is sampled exactly per step and does not enter the check
  max_rate_dt_ = dt * std::max({p.alpha, p.gamma1, p.gamma_phi, p.omega_s});
}

Stepper::QubitResult Stepper::advance_qubit(double& c0, double& c1, double u_jump,
                                            double u_channel) const {
  const double n0 = g00_ * c0 + g01_ * c1;
  const double n1 = g10_ * c0 + g11_ * c1;
  const double nn = n0 * n0 + n1 * n1;
  const double p = 1.0 - nn;
  const double inv = 1.0 / std::sqrt(nn);
  QubitResult r;
  if (u_jump < p) {
    const double s0 = n0 * n0 / nn, s1 = n1 * n1 / nn;
    const double wm = alpha_ * s0, wu = gamma_up_ * s0, wr = gamma1_ * s1, wd = deph_;
    const double total = wm + wu + wr + wd;
    if (total > 0.0) {
      r.fraction = std::clamp(std::log1p(-u_jump) / std::log1p(-p), 0.0, 1.0);
      double x = u_channel * total;
      if (x < wm) {
        r.event = Event::Measurement;
        c0 = n0 * inv;
        c1 = n1 * inv;
      } else if (x < wm + wd) {
        r.event = Event::Dephasing;
        c0 = -n0 * inv;
        c1 = n1 * inv;
      } else if (x < wm + wd + wr) {
        r.event = Event::Relaxation;
        c0 = 1.0;
        c1 = 0.0;
      } else {
        r.event = Event::Thermal;
        c0 = 0.0;
        c1 = 1.0;
      }
      return r;
    }
  }
  c0 = n0 * inv;
  c1 = n1 * inv;
  return r;
}

double Stepper::no_jump_angle(double c0, double c1) const {
  return angle_of(g00_ * c0 + g01_ * c1, g10_ * c0 + g11_ * c1);
}

TrajectoryState step(const TrajectoryState& s, const ModelParams& p, PhiloxEngine& rng,
                     Event* event) {
  Stepper st(p);
  static thread_local bool warned = false;
  if (st.max_rate_dt() > 0.05 && !std::exchange(warned, true))
    std::cerr << "warning: dt_sim * max rate = " << st.max_rate_dt() << " exceeds 0.05\n";
  const double u1 = rng.uniform(), u2 = rng.uniform();
  Event ev = Event::None;
  TrajectoryState out = s;
  if (std::holds_alternative<Bright>(s)) {
    if (st.bright_exit(u1)) {
      ev = Event::BrightExit;
      out = QubitAngle{kPi};
    }
  } else {
    double th = std::get<QubitAngle>(s).theta;
    double c0 = std::sin(0.5 * th), c1 = std::cos(0.5 * th);
    auto r = st.advance_qubit(c0, c1, u1, u2);
    ev = r.event;
    if (ev == Event::Measurement)
      out = Bright{};
    else
      out = QubitAngle{angle_of(c0, c1)};
  }
  if (event) *event = ev;
  return out;
}

std::size_t steps_per_window(const ModelParams& p) {
  const double r = p.t_int / p.dt_sim;
  const double m = std::round(r);
  if (m < 1.0 || std::abs(r - m) > 1e-9 * std::max(1.0, r)) {
    std::ostringstream os;
    os << "t_int (" << p.t_int << " s) is not a multiple of dt_sim (" << p.dt_sim << " s)";
    throw ConfigError(os.str());
  }
  return static_cast<std::size_t>(m);
}

WindowClass classify_window(std::size_t bright_steps, std::size_t m, const ModelParams& p,
                            double u_flip) {
  WindowClass w;
  w.raw = 2 * bright_steps >= m && bright_steps > 0;
  if (w.raw)
    w.registered = !(u_flip < p.p_fn);
  else
    w.registered = u_flip < p.p_fp;
  return w;
}

ClickRecord classify_windows(const std::vector<std::uint8_t>& bright, const ModelParams& p,
                             std::uint64_t seed, std::uint64_t traj) {
  const std::size_t m = steps_per_window(p);
  ClickRecord rec;
  rec.window = p.t_int;
  rec.seed = seed;
  rec.trajectory_id = traj;
  const std::size_t nw = bright.size() / m;
  for (std::size_t w = 0; w < nw; ++w) {
    std::size_t b = 0;
    for (std::size_t k = 0; k < m; ++k) b += bright[w * m + k] ? 1 : 0;
    double u = Philox::uniforms(Philox::draw(seed, traj, kFlipPurpose, w))[0];
    rec.outcomes.push_back(classify_window(b, m, p, u).registered ? Outcome::Click
                                                                  : Outcome::NoClick);
  }
  return rec;
}

void Accumulators::resize(std::size_t nw, int bins) {
  const std::size_t n = nw + 1;
  for (auto* v : {&ens_p1, &ens_p1sq, &ens_x, &ens_z, &ens_pb, &cond_p1, &cond_p1sq, &cond_x,
                  &cond_z})
    v->assign(n, 0.0);
  surv.assign(n, 0);
  verified.assign(n, 0);
  budget.assign(n, {});
  dwell_bins = bins;
  for (int g = 0; g < 2; ++g) {
    dwell_sum[g].assign(bins, 0.0);
    dwell_sumsq[g].assign(bins, 0.0);
  }
}

namespace {
template <class T>
void add_into(std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() < b.size()) a.resize(b.size(), T{});
  for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i];
}
}  // namespace

void Accumulators::merge(const Accumulators& o) {
  add_into(ens_p1, o.ens_p1);
  add_into(ens_p1sq, o.ens_p1sq);
  add_into(ens_x, o.ens_x);
  add_into(ens_z, o.ens_z);
  add_into(ens_pb, o.ens_pb);
  add_into(surv, o.surv);
  add_into(verified, o.verified);
  add_into(cond_p1, o.cond_p1);
  add_into(cond_p1sq, o.cond_p1sq);
  add_into(cond_x, o.cond_x);
  add_into(cond_z, o.cond_z);
  if (budget.size() < o.budget.size()) budget.resize(o.budget.size());
  for (std::size_t j = 0; j < o.budget.size(); ++j)
    for (int k = 0; k < kBudgetKinds; ++k) budget[j][k] += o.budget[j][k];
  add_into(first_runs, o.first_runs);
  add_into(later_runs, o.later_runs);
  censored_first += o.censored_first;
  for (int g = 0; g < 2; ++g) {
    add_into(dwell_sum[g], o.dwell_sum[g]);
    add_into(dwell_sumsq[g], o.dwell_sumsq[g]);
  }
}

DwellHistogram make_dwell_grid(int bins, bool shifted) {
  DwellHistogram h;
  h.shifted = shifted;
  const double w = kTwoPi / bins;
  const double off = shifted ? 0.5 * w : 0.0;
  for (int i = 0; i <= bins; ++i) h.edges.push_back(-kPi + off + i * w);
  h.values.assign(bins, 0.0);
  h.sigma.assign(bins, 0.0);
  return h;
}

void credit_segment(std::vector<double>& bins, bool shifted, double phi0, double phi1,
                    double time) {
  const int nb = static_cast<int>(bins.size());
  const double w = kTwoPi / nb;
  const double origin = -kPi + (shifted ? 0.5 * w : 0.0);
  auto idx = [nb](double cell) {
    long k = static_cast<long>(std::floor(cell)) % nb;
    return static_cast<int>(k < 0 ? k + nb : k);
  };
  double s0 = (phi0 - origin) / w, s1 = (phi1 - origin) / w;
  if (s1 < s0) std::swap(s0, s1);
  const double len = s1 - s0;
  if (len < 1e-12) {
    bins[idx(s0)] += time;
    return;
  }
  double a = s0;
  while (a < s1) {
    double b = std::min(std::floor(a) + 1.0, s1);
    bins[idx(a)] += time * (b - a) / len;
    a = b;
  }
}

namespace {

struct Context {
  ModelParams p;
  EnsembleOptions opt;
  TrajectoryState init;
  Stepper stepper;
  std::size_t m, nw;
};

struct ChunkResult {
  Accumulators acc;
  std::vector<ClickRecord> records;
  std::vector<std::vector<float>> thetas;
};

void simulate_chunk(const Context& ctx, std::size_t first, std::size_t count, ChunkResult& out) {
  const ModelParams& p = ctx.p;
  const auto& opt = ctx.opt;
  const std::size_t m = ctx.m, nw = ctx.nw;
  Accumulators& acc = out.acc;
  acc.resize(nw, opt.dwell ? opt.dwell_bins : 0);
  const double dt = p.dt_sim;
  const int nb = opt.dwell ? opt.dwell_bins : 0;
  std::array<std::vector<double>, 2> tb;
  std::vector<int> touched;
  std::vector<char> is_touched(nb, 0);
  for (int g = 0; g < 2; ++g) tb[g].assign(nb, 0.0);

  for (std::size_t t = first; t < first + count; ++t) {
    bool bright = std::holds_alternative<Bright>(ctx.init);
    double c0 = 1.0, c1 = 0.0;
    if (!bright) {
      double th = std::get<QubitAngle>(ctx.init).theta;
      c0 = std::sin(0.5 * th);
      c1 = std::cos(0.5 * th);
    }
    bool survivor = true, in_first = true, true_clicked = bright;
    unsigned flags = 0;
    std::size_t cur_run = 0;
    ClickRecord rec;
    std::vector<float> thetas;
    if (opt.keep_records) {
      rec.window = p.t_int;
      rec.seed = opt.seed;
      rec.trajectory_id = t;
    }

    auto credit = [&](double a, double b, double time) {
      for (int g = 0; g < 2; ++g) {
        const double w = kTwoPi / nb;
        const double origin = -kPi + (g ? 0.5 * w : 0.0);
        double s0 = (a - origin) / w, s1 = (b - origin) / w;
        if (s1 < s0) std::swap(s0, s1);
        const double len = s1 - s0;
        auto add = [&](double cell, double v) {
          long k = static_cast<long>(std::floor(cell)) % nb;
          int i = static_cast<int>(k < 0 ? k + nb : k);
          tb[g][i] += v;
          if (!is_touched[i]) {
            is_touched[i] = 1;
            touched.push_back(i);
          }
        };
        if (len < 1e-12) {
          add(s0, time);
          continue;
        }
        double x = s0;
        while (x < s1) {
          double y = std::min(std::floor(x) + 1.0, s1);
          add(x, time * (y - x) / len);
          x = y;
        }
      }
    };

    auto snapshot = [&](std::size_t j) {
      double p1 = 0.0, x = 0.0, z = 0.0;
      if (!bright) {
        p1 = c1 * c1;
        x = -2.0 * c0 * c1;
        z = c1 * c1 - c0 * c0;
      }
      if (!opt.stop_at_first_click) {
        acc.ens_p1[j] += p1;
        acc.ens_p1sq[j] += p1 * p1;
        acc.ens_x[j] += x;
        acc.ens_z[j] += z;
        acc.ens_pb[j] += bright ? 1.0 : 0.0;
      }
      if (survivor) {
        acc.surv[j] += 1;
        if (!bright) {
          acc.verified[j] += 1;
          acc.cond_p1[j] += p1;
          acc.cond_p1sq[j] += p1 * p1;
          acc.cond_x[j] += x;
          acc.cond_z[j] += z;
        }
        for (int k = 0; k < kBudgetKinds; ++k)
          if (flags & (1u << k)) acc.budget[j][k] += 1;
      }
      if (opt.keep_records)
        thetas.push_back(bright ? std::numeric_limits<float>::quiet_NaN()
                                : static_cast<float>(angle_of(c0, c1)));
    };

    for (std::size_t w = 0; w < nw; ++w) {
      snapshot(w);
      std::size_t bright_steps = 0;
      for (std::size_t s = 0; s < m; ++s) {
        const std::uint64_t k = w * m + s;
        auto u = Philox::uniforms(Philox::draw(opt.seed, t, kStepPurpose, k));
        if (bright) {
          ++bright_steps;
          if (ctx.stepper.bright_exit(u[0])) {
            bright = false;
            c0 = 1.0;
            c1 = 0.0;
          }
          continue;
        }
        const double th_a = nb && !true_clicked ? angle_of(c0, c1) : 0.0;
        const double a0 = c0, a1 = c1;
        auto r = ctx.stepper.advance_qubit(c0, c1, u[0], u[1]);
        if (nb && !true_clicked) {
          const double th_b = ctx.stepper.no_jump_angle(a0, a1);
          const double d = std::remainder(th_b - th_a, kTwoPi);
          credit(th_a, th_a + r.fraction * d, r.fraction * dt);
          if (r.event != Event::None && r.event != Event::Measurement) {
            const double th_c = angle_of(c0, c1);
            credit(th_c, th_c, (1.0 - r.fraction) * dt);
          }
        }
        switch (r.event) {
          case Event::Measurement:
            bright = true;
            true_clicked = true;
            break;
          case Event::Dephasing: flags |= 1u << kDephasing; break;
          case Event::Relaxation: flags |= 1u << kRelaxation; break;
          case Event::Thermal: flags |= 1u << kThermal; break;
          default: break;
        }
      }
      double uf = Philox::uniforms(Philox::draw(opt.seed, t, kFlipPurpose, w))[0];
      auto wc = classify_window(bright_steps, m, p, uf);
      if (bright_steps > 0 && !wc.raw) flags |= 1u << kMissedB;
      if (wc.raw != wc.registered) flags |= 1u << kFlipped;
      if (opt.keep_records) rec.outcomes.push_back(wc.registered ? Outcome::Click : Outcome::NoClick);
      if (wc.registered) {
        if (in_first) {
          if (acc.first_runs.size() <= cur_run) acc.first_runs.resize(cur_run + 1, 0);
          acc.first_runs[cur_run] += 1;
          in_first = false;
        } else if (cur_run > 0) {
          if (acc.later_runs.size() <= cur_run) acc.later_runs.resize(cur_run + 1, 0);
          acc.later_runs[cur_run] += 1;
        }
        cur_run = 0;
        survivor = false;
      } else {
        ++cur_run;
      }
      if (opt.stop_at_first_click && !survivor && (!nb || true_clicked)) break;
      if (w + 1 == nw) snapshot(nw);
    }
    if (nw == 0) snapshot(0);
    if (in_first) acc.censored_first += 1;
    if (nb) {
      for (int i : touched) {
        for (int g = 0; g < 2; ++g) {
          acc.dwell_sum[g][i] += tb[g][i];
          acc.dwell_sumsq[g][i] += tb[g][i] * tb[g][i];
          tb[g][i] = 0.0;
        }
        is_touched[i] = 0;
      }
      touched.clear();
    }
    if (opt.keep_records) {
      out.records.push_back(std::move(rec));
      out.thetas.push_back(std::move(thetas));
    }
  }
}

}  // namespace

Store run_ensemble(const ModelParams& p, const TrajectoryState& init, const EnsembleOptions& opt) {
  p.validate();
  if (opt.n_traj < 1) throw DomainError("n_traj must be >= 1");
  if (!(opt.duration >= 0.0)) throw DomainError("duration must be >= 0");
  if (opt.dwell && opt.dwell_bins < 2) throw DomainError("dwell_bins must be >= 2");
  Context ctx{p, opt, init, Stepper(p), steps_per_window(p), 0};
  ctx.nw = static_cast<std::size_t>(std::floor(opt.duration / p.t_int + 1e-9));

  auto store = std::make_shared<Store>();
  store->params = p;
  store->options = opt;
  store->init = init;
  store->n_windows = ctx.nw;
  store->steps_per_window = ctx.m;
  store->acc.resize(ctx.nw, opt.dwell ? opt.dwell_bins : 0);
  if (ctx.stepper.max_rate_dt() > 0.05) {
    std::ostringstream os;
    os << "dt_sim * max rate = " << ctx.stepper.max_rate_dt() << " exceeds 0.05";
    store->warnings.push_back(os.str());
  }

  std::size_t n_run = opt.n_traj;
  bool exhausted = false;
  if (opt.keep_records) {
    const std::size_t per = std::max<std::size_t>(ctx.nw, 1);
    const std::size_t fit = opt.record_limit / per;
    if (fit < n_run) {
      n_run = fit;
      exhausted = true;
    }
  }

  const std::size_t chunk = std::max<std::size_t>(opt.chunk, 1);
  const std::size_t n_chunks = (n_run + chunk - 1) / chunk;
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::map<std::size_t, ChunkResult> ready;
  std::size_t merged = 0;

  auto drain = [&]() {
    for (auto it = ready.find(merged); it != ready.end(); it = ready.find(merged)) {
      store->acc.merge(it->second.acc);
      for (auto& r : it->second.records) store->records.push_back(std::move(r));
      for (auto& th : it->second.thetas) store->theta_snapshots.push_back(std::move(th));
      ready.erase(it);
      ++merged;
    }
  };
  auto worker = [&]() {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      ChunkResult res;
      const std::size_t first = c * chunk;
      simulate_chunk(ctx, first, std::min(chunk, n_run - first), res);
      std::lock_guard<std::mutex> lock(mu);
      ready.emplace(c, std::move(res));
      drain();
    }
  };
  const unsigned nt = std::max(1u, opt.threads);
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  store->n_traj = n_run;
  if (exhausted) {
    std::ostringstream os;
    os << "record storage limit of " << opt.record_limit << " windows reached after " << n_run
       << " of " << opt.n_traj << " trajectories";
    throw StorageExhausted(os.str(), store);
  }
  return std::move(*store);
}

std::string budget_name(int kind) {
  switch (kind) {
    case kDephasing: return "dephasing";
    case kRelaxation: return "relaxation";
    case kThermal: return "thermal";
    case kMissedB: return "missed_b_excursion";
    case kFlipped: return "flipped_outcome";
  }
  return "?";
}

}  // namespace zeno::sim
