#include <doctest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>

#include "zeno/errors.hpp"
#include "zeno/ideal_model.hpp"
#include "zeno/liouvillian.hpp"
#include "zeno/trajectory.hpp"

using namespace zeno;
using namespace zeno::sim;

namespace {

constexpr double W = kTwoPi * 100e3;

// decoherence off, one-step detector, one step per window
ModelParams ideal_limit(double lambda) {
  ModelParams p = ModelParams::ideal(lambda);
  p.dt_sim = 10e-9;
  p.t_int = 10e-9;
  p.tau_b = 1e-3 * p.dt_sim;
  return p;
}

bool same(const Accumulators& a, const Accumulators& b) {
  return a.ens_p1 == b.ens_p1 && a.ens_p1sq == b.ens_p1sq && a.surv == b.surv &&
         a.verified == b.verified && a.cond_p1 == b.cond_p1 && a.cond_x == b.cond_x &&
         a.budget == b.budget && a.first_runs == b.first_runs && a.later_runs == b.later_runs &&
         a.censored_first == b.censored_first && a.dwell_sum == b.dwell_sum &&
         a.dwell_sumsq == b.dwell_sumsq;
}

}  // namespace

TEST_CASE("pure drive rotates at the Rabi rate") {
  ModelParams p = ModelParams::ideal(0.0);
  PhiloxEngine rng(1, 0);
  TrajectoryState s = QubitAngle{kPi};
  const int n = 150;
  for (int i = 0; i < n; ++i) s = step(s, p, rng);
  double th = std::get<QubitAngle>(s).theta;
  CHECK(std::remainder(th - (kPi - n * W * p.dt_sim), kTwoPi) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("excited state never clicks") {
  ModelParams p = ModelParams::ideal(0.0);
  p.omega_s = 0.0;
  p.alpha = 2e6;
  PhiloxEngine rng(3, 0);
  TrajectoryState s = QubitAngle{0.0};
  for (int i = 0; i < 20000; ++i) {
    Event ev;
    s = step(s, p, rng, &ev);
    REQUIRE(ev == Event::None);
  }
}

TEST_CASE("bright dwell is exponential with mean tau_b") {
  ModelParams p = ModelParams::ideal(0.0);
  p.tau_b = 4e-6;
  PhiloxEngine rng(11, 0);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    TrajectoryState s = Bright{};
    int k = 0;
    while (std::holds_alternative<Bright>(s)) {
      s = step(s, p, rng);
      ++k;
    }
    double t = k * p.dt_sim;
    sum += t;
    sum2 += t * t;
  }
  double mean = sum / n, sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(mean == doctest::Approx(4e-6).epsilon(0.02));
  CHECK(sd == doctest::Approx(mean).epsilon(0.03));
}

TEST_CASE("window classification") {
  ModelParams p;
  const std::size_t m = steps_per_window(p);
  REQUIRE(m == 32);
  std::vector<std::uint8_t> quiet(10 * m, 0);
  for (auto o : classify_windows(quiet, p, 1, 0).outcomes) CHECK(o == Outcome::NoClick);

  std::vector<std::uint8_t> brief(m, 0);
  for (int k = 5; k < 15; ++k) brief[k] = 1;  // 100 ns
  CHECK(classify_windows(brief, p, 1, 0).outcomes.at(0) == Outcome::NoClick);
  CHECK_FALSE(classify_window(10, m, p, 0.5).raw);
  CHECK(classify_window(16, m, p, 0.5).raw);

  ModelParams fp = p;
  fp.p_fp = 1.0;
  for (auto o : classify_windows(quiet, fp, 1, 0).outcomes) CHECK(o == Outcome::Click);

  ModelParams bad = p;
  bad.t_int = 325e-9;
  CHECK_THROWS_AS(steps_per_window(bad), ConfigError);
  EnsembleOptions o;
  o.n_traj = 2;
  CHECK_THROWS_AS(run_ensemble(bad, QubitAngle{kPi}, o), ConfigError);
}

TEST_CASE("determinism across runs and thread counts") {
  ModelParams p = ModelParams::experimental(1.2);
  p.p_fp = 0.02;
  p.p_fn = 0.05;
  EnsembleOptions o;
  o.n_traj = 1;
  o.duration = 5e-6;
  o.keep_records = true;
  auto a = run_ensemble(p, QubitAngle{kPi}, o);
  auto b = run_ensemble(p, QubitAngle{kPi}, o);
  REQUIRE(a.records.size() == 1);
  CHECK(a.records[0].outcomes == b.records[0].outcomes);

  o.n_traj = 300;
  o.chunk = 7;
  o.dwell = true;
  o.dwell_bins = 40;
  o.threads = 1;
  auto s1 = run_ensemble(p, QubitAngle{kPi}, o);
  o.threads = 3;
  auto s3 = run_ensemble(p, QubitAngle{kPi}, o);
  o.chunk = 64;
  auto s3b = run_ensemble(p, QubitAngle{kPi}, o);
  CHECK(same(s1.acc, s3.acc));
  CHECK(s1.records.size() == s3.records.size());
  for (std::size_t i = 0; i < s1.records.size(); ++i)
    CHECK(s1.records[i].outcomes == s3.records[i].outcomes);
  // chunking changes floating-point summation order only
  for (std::size_t j = 0; j < s1.acc.ens_p1.size(); ++j)
    CHECK(s1.acc.ens_p1[j] == doctest::Approx(s3b.acc.ens_p1[j]).epsilon(1e-12));
  CHECK(s1.acc.surv == s3b.acc.surv);
}

TEST_CASE("undriven measurement gives exponential waiting times") {
  ModelParams p = ideal_limit(0.0);
  p.omega_s = 0.0;
  p.alpha = 1e6;
  EnsembleOptions o;
  o.n_traj = 20000;
  o.duration = 20e-6;
  o.stop_at_first_click = true;
  auto s = run_ensemble(p, QubitAngle{kPi}, o);
  auto h = noclick_duration_histogram(s, true);
  double n = 0, sum = 0;
  for (std::size_t L = 0; L < h.counts.size(); ++L) {
    n += h.counts[L];
    sum += h.counts[L] * L;
  }
  const double q = -std::expm1(-p.alpha * p.dt_sim);
  // a jump in step k registers in window k + 1
  const double mean = 1.0 / q, sd = std::sqrt(1 - q) / q;
  CHECK(h.censored == 0);
  CHECK(std::abs(sum / n - mean) < 4 * sd / std::sqrt(n));
}

TEST_CASE("ideal limit: lambda = 0 ensemble is a Rabi oscillation") {
  ModelParams p = ideal_limit(0.0);
  p.t_int = 320e-9;
  EnsembleOptions o;
  o.n_traj = 50;
  o.duration = 15e-6;
  auto s = run_ensemble(p, QubitAngle{kPi}, o);
  auto e = ensemble_population(s);
  for (std::size_t j = 0; j < e.t.size(); ++j)
    CHECK(e.value[j] == doctest::Approx(0.5 * (1 - std::cos(W * e.t[j]))).epsilon(1e-9).scale(1.0));
}

TEST_CASE("ideal limit: conditional population follows the closed form") {
  for (double lam : {0.5, 2.2}) {
    ModelParams p = ideal_limit(lam);
    EnsembleOptions o;
    o.n_traj = 5000;
    o.duration = 8e-6;
    o.stop_at_first_click = true;
    auto s = run_ensemble(p, QubitAngle{kPi}, o);
    auto c = conditional_population(s);
    CHECK(c.value[0] == doctest::Approx(0.0).scale(1.0));
    for (std::size_t j = 0; j < c.t.size(); ++j) {
      if (c.omitted[j]) continue;
      double th = ideal::noclick_theta(c.t[j], lam, W);
      CHECK(c.value[j] == doctest::Approx(std::pow(std::cos(th / 2), 2)).epsilon(1e-9).scale(1.0));
    }
    // survival is binomial around the closed form
    auto p0 = noclick_probability(s);
    for (std::size_t j = 1; j < p0.t.size(); j += 37) {
      double ref = ideal::noclick_survival(p0.t[j] - p.dt_sim, lam, W);
      double sd = std::sqrt(ref * (1 - ref) / s.n_traj);
      CHECK(std::abs(p0.value[j] - ref) < 5 * sd + 1e-12);
    }
  }
}

TEST_CASE("forbidden region and direct dwell histogram") {
  const double lam = 1.5;
  ModelParams p = ideal_limit(lam);
  EnsembleOptions o;
  o.n_traj = 20000;
  o.duration = 60e-6;
  o.stop_at_first_click = true;
  o.dwell = true;
  o.dwell_bins = 80;
  auto s = run_ensemble(p, QubitAngle{0.0}, o);
  auto h = dwell_histogram_direct(s);
  const double tp = ideal::fixed_points(lam)->theta_plus;
  const double step = W * (1 + lam) * p.dt_sim;
  boost::math::quadrature::tanh_sinh<double> ts;
  int compared = 0;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    const double lo = h.edges[i], hi = h.edges[i + 1];
    if (hi < tp - step) {
      CHECK(h.values[i] == 0.0);
      continue;
    }
    if (lo >= 0.0) {
      CHECK(h.values[i] == 0.0);
      continue;
    }
    if (lo < tp) continue;  // edge bin
    double ref = ts.integrate(
                     [&](double th) {
                       return ideal::dwell_density(th, lam, W, ideal::Start::Excited);
                     },
                     lo, std::min(hi, 0.0)) /
                 (hi - lo);
    CAPTURE(i);
    CHECK(std::abs(h.values[i] - ref) < 4 * h.sigma[i] + 0.01 * ref);
    ++compared;
  }
  CHECK(compared >= 8);
}

TEST_CASE("experimental dwell estimator agrees with the direct one") {
  const double lam = 1.5;
  ModelParams p = ideal_limit(lam);
  EnsembleOptions o;
  o.n_traj = 20000;
  o.duration = 40e-6;
  o.stop_at_first_click = true;
  o.dwell = true;
  auto s = run_ensemble(p, QubitAngle{0.0}, o);
  auto d = dwell_histogram_direct(s);
  auto e = dwell_histogram_experimental(s, 80);
  const auto& h = e.base;
  const double tp = ideal::fixed_points(lam)->theta_plus;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    if (h.edges[i] < tp + 0.1 || h.edges[i + 1] > -0.05) continue;
    double sig = std::hypot(h.sigma[i], d.sigma[i]);
    CAPTURE(i);
    CHECK(std::abs(h.values[i] - d.values[i]) < 4 * sig + 0.02 * d.values[i]);
  }

  // the peak sits at the fixed point at lambda = 2
  ModelParams p2 = ideal_limit(2.0);
  auto s2 = run_ensemble(p2, QubitAngle{0.0}, o);
  auto e2 = dwell_histogram_experimental(s2, 80);
  const auto& sel = e2.selected();
  std::size_t imax = 0;
  for (std::size_t i = 0; i < sel.values.size(); ++i)
    if (sel.values[i] > sel.values[imax]) imax = i;
  CHECK(std::abs(sel.center(imax) + kPi / 6) <= sel.bin_width());
}

TEST_CASE("error budget") {
  ModelParams p = ideal_limit(1.0);
  EnsembleOptions o;
  o.n_traj = 3000;
  o.duration = 4.8e-6;
  auto s = run_ensemble(p, QubitAngle{kPi}, o);
  auto b = error_budget(s, 4.8e-6);
  for (int k = 0; k < kBudgetKinds; ++k) CHECK(b.fraction[k] == 0.0);

  ModelParams d = ModelParams::ideal(0.0);
  d.gamma_phi = 1.0 / 26e-6;
  auto sd = run_ensemble(d, QubitAngle{kPi}, o);
  auto bd = error_budget(sd, 4.8e-6);
  const double expect = 1.0 - std::exp(-d.gamma_phi * 4.8e-6 / 2);
  CHECK(std::abs(bd.fraction[kDephasing] - expect) < 3 * bd.sigma[kDephasing]);
  CHECK(bd.fraction[kRelaxation] == 0.0);

  // long windows miss short excursions
  ModelParams m = ModelParams::ideal(1.0);
  m.tau_b = 20e-9;
  auto sm = run_ensemble(m, QubitAngle{kPi}, o);
  CHECK(sm.acc.budget.back()[kMissedB] > 0);
  CHECK(budget_name(kMissedB) == "missed_b_excursion");
}

TEST_CASE("ensemble agrees with the master equation") {
  ModelParams p = ModelParams::experimental(1.2);
  EnsembleOptions o;
  o.n_traj = 20000;
  o.duration = 10e-6;
  auto s = run_ensemble(p, QubitAngle{kPi}, o);
  auto e = ensemble_population(s);
  auto ref = liouvillian::integrate_master(p, liouvillian::BlochVector4{}, o.duration, p.t_int);
  REQUIRE(ref.size() == e.t.size());
  for (std::size_t j = 1; j < e.t.size(); ++j) {
    CAPTURE(j);
    CHECK(std::abs(e.value[j] - ref[j].v.p1()) < 4 * e.sigma[j]);
  }
}

TEST_CASE("record storage limit") {
  ModelParams p = ModelParams::ideal(1.0);
  EnsembleOptions o;
  o.n_traj = 100;
  o.duration = 3.2e-6;  // 10 windows
  o.keep_records = true;
  o.record_limit = 255;
  try {
    run_ensemble(p, QubitAngle{kPi}, o);
    FAIL("expected StorageExhausted");
  } catch (const StorageExhausted& e) {
    REQUIRE(e.partial);
    CHECK(e.partial->n_traj == 25);
    CHECK(e.partial->records.size() == 25);
  }
}
