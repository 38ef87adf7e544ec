#include <doctest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <random>

#include "zeno/errors.hpp"
#include "zeno/estimation.hpp"
#include "zeno/ideal_model.hpp"
#include "zeno/liouvillian.hpp"

using namespace zeno;
using namespace zeno::est;
using liouvillian::cplx;

namespace {

constexpr double W = kTwoPi * 100e3;

bool close(cplx a, cplx b, double rel) { return std::abs(a - b) <= rel * std::abs(b); }

std::vector<double> sample(const std::vector<cplx>& poles, const std::vector<cplx>& amps, double dt,
                           int n) {
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    cplx s = 0;
    for (std::size_t k = 0; k < poles.size(); ++k) s += amps[k] * std::exp(poles[k] * (dt * i));
    y[i] = s.real();
  }
  return y;
}

// Bin-averaged ideal dwell density, excited start.
sim::DwellHistogram ideal_dwell_hist(double lam, int bins) {
  auto h = sim::make_dwell_grid(bins, false);
  const double tp = ideal::fixed_points(lam)->theta_plus;
  boost::math::quadrature::tanh_sinh<double> ts;
  for (int i = 0; i < bins; ++i) {
    double a = std::max(h.edges[i], tp), b = std::min(h.edges[i + 1], 0.0);
    if (!(b > a)) continue;
    h.values[i] = ts.integrate([&](double th) { return ideal::dwell_density(th, lam, W, ideal::Start::Excited); },
                               a, b, 1e-12) /
                  h.bin_width();
  }
  return h;
}

}  // namespace

TEST_CASE("least squares recovers an exponential") {
  const int n = 40;
  Residuals f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (int i = 0; i < n; ++i) r[i] = x[0] * std::exp(-x[1] * i * 0.1) - 2.0 * std::exp(-0.7 * i * 0.1);
  };
  auto r = least_squares(f, Eigen::Vector2d(1.0, 0.2), n);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.x[1] == doctest::Approx(0.7).epsilon(1e-8));
}

TEST_CASE("matrix pencil: noiseless oracles") {
  auto one = sample({-1.0}, {1.0}, 0.05, 100);
  auto p1 = matrix_pencil(one, 0.05);
  REQUIRE(p1.model_order == 1);
  CHECK(std::abs(p1.poles[0] - cplx(-1.0)) < 1e-9);
  CHECK(std::abs(p1.amplitudes[0] - cplx(1.0)) < 1e-9);

  std::vector<cplx> poles{-0.3, {-1, 2}, {-1, -2}}, amps{0.7, {0.4, 0.1}, {0.4, -0.1}};
  auto y = sample(poles, amps, 0.05, 200);
  auto p3 = matrix_pencil(y, 0.05);
  REQUIRE(p3.model_order == 3);
  auto ref = liouvillian::sort_eigenvalues(poles);
  for (int k = 0; k < 3; ++k) CHECK(close(p3.poles[k], ref.values[k], 1e-6));
  // requested order above the true one
  auto p4 = matrix_pencil(y, 0.05, 3);
  for (int k = 0; k < 3; ++k) CHECK(close(p4.poles[k], ref.values[k], 1e-9));

  // ideal survival at lambda = 0.5 sampled on the integration window
  std::vector<double> p0;
  for (int j = 0; j < 120; ++j) p0.push_back(ideal::noclick_survival(j * 320e-9, 0.5, W));
  auto ps = matrix_pencil(p0, 320e-9, 3);
  std::vector<cplx> expect{{-0.5 * W, -W * std::sqrt(0.75)}, {-0.5 * W, W * std::sqrt(0.75)}, -0.5 * W};
  for (int k = 0; k < 3; ++k) CHECK(close(ps.poles[k], expect[k], 1e-4));
}

TEST_CASE("residual bootstrap") {
  std::vector<cplx> poles{-0.3, {-1, 2}, {-1, -2}}, amps{0.7, {0.4, 0.1}, {0.4, -0.1}};
  auto y = sample(poles, amps, 0.05, 200);
  auto b = residual_bootstrap(y, 0.05, 3, 100, 5);
  CHECK(b.n_used == 100);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(b.hi[k] - b.lo[k]) < 1e-9);

  // band width shrinks with record length; coverage near nominal
  std::mt19937_64 g(99);
  std::normal_distribution<double> noise(0.0, 0.01);
  auto width = [&](int n) {
    auto yy = sample(poles, amps, 0.05 * 200 / n, n);
    for (auto& v : yy) v += noise(g);
    auto bb = residual_bootstrap(yy, 0.05 * 200 / n, 3, 200, 7);
    return std::abs(bb.hi[2].real() - bb.lo[2].real());
  };
  CHECK(width(300) < width(60));

  int covered = 0;
  const int reps = 30;
  for (int r = 0; r < reps; ++r) {
    auto yy = y;
    for (auto& v : yy) v += noise(g);
    auto bb = residual_bootstrap(yy, 0.05, 3, 100, 100 + r);
    double truth = -0.3;
    // slowest pole sorts last
    if (bb.lo[2].real() <= truth && truth <= bb.hi[2].real()) ++covered;
  }
  CHECK(covered >= 0.6 * reps);
}

TEST_CASE("coalescence fit") {
  // pure square root, b = 0
  std::vector<double> lam;
  std::vector<cplx> d;
  for (double l = 0.7; l <= 1.3001; l += 0.02) {
    lam.push_back(l);
    double x = l - 1.03;
    d.push_back(x >= 0 ? cplx(-2.5 * std::sqrt(x), 0) : cplx(0, -2.5 * std::sqrt(-x)));
  }
  CoalescenceOptions o;
  o.n_boot = 20;
  auto f = fit_coalescence(lam, d, {}, o);
  CHECK(f.lambda_c == doctest::Approx(1.03).epsilon(1e-8));
  CHECK(f.a == doctest::Approx(-2.5).epsilon(1e-8));
  CHECK(std::abs(f.b) < 1e-6);

  // exact ideal postselected spectra
  std::vector<double> l2;
  std::vector<liouvillian::SortedSpectrum> sp;
  for (double l = 0.8; l <= 1.2001; l += 0.02) {
    l2.push_back(l);
    auto s = liouvillian::spectrum(liouvillian::build_postselected(ModelParams::ideal(l)));
    for (auto& e : s.values) e /= W;
    sp.push_back(s);
  }
  auto dd = liouvillian::pair_splitting(sp);
  auto fi = fit_coalescence(l2, dd, {}, o);
  CHECK(std::abs(fi.lambda_c - 1.0) < 0.005);

  // common-mode shifts cancel
  std::vector<liouvillian::SortedSpectrum> shifted = sp;
  for (std::size_t i = 0; i < shifted.size(); ++i)
    for (auto& e : shifted[i].values) e += cplx(-0.37 * l2[i], 0.0);
  auto fs = fit_coalescence(l2, liouvillian::pair_splitting(shifted), {}, o);
  CHECK(fs.lambda_c == doctest::Approx(fi.lambda_c).epsilon(1e-12));

  // exact ensemble spectra with realistic decoherence
  std::vector<double> l3;
  std::vector<liouvillian::SortedSpectrum> se;
  for (double l = 1.0; l <= 1.5001; l += 0.02) {
    l3.push_back(l);
    ModelParams p = ModelParams::experimental(l);
    auto s = liouvillian::spectrum(liouvillian::deflate_ensemble(liouvillian::build_ensemble(p)));
    for (auto& e : s.values) e /= W;
    se.push_back(s);
  }
  auto fe = fit_coalescence(l3, liouvillian::pair_splitting(se), {}, o);
  CHECK(std::abs(fe.lambda_c - 1.25) < 0.02);

  // no coalescence in range
  std::vector<cplx> only_im(lam.size(), cplx(0, -1));
  CHECK_THROWS_AS(fit_coalescence(lam, only_im, {}, o), FitError);
}

TEST_CASE("dwell model matches the ideal density up to scale") {
  for (double lam : {1.2, 1.5, 2.0, 3.0}) {
    const double tp = ideal::fixed_points(lam)->theta_plus, xi = ideal::critical_exponent(lam);
    double ratio0 = 0.0;
    for (double th : {tp + 1e-6, tp + 0.01, 0.5 * tp, -0.01}) {
      double r = dwell_model(th, 1.0, tp, xi) / ideal::dwell_density(th, lam, W, ideal::Start::Excited);
      if (ratio0 == 0.0) ratio0 = r;
      CHECK(r == doctest::Approx(ratio0).epsilon(1e-6));
    }
  }
  CHECK(dwell_model(0.1, 1.0, -0.5, -0.3) == 0.0);
  CHECK(dwell_model(-0.6, 1.0, -0.5, -0.3) == 0.0);
}

TEST_CASE("dwell fit on synthetic ideal histograms") {
  const double xi15 = 1.5 / std::sqrt(1.25) - 2.0;
  auto f15 = fit_dwell(ideal_dwell_hist(1.5, 80));
  CHECK(std::abs(f15.xi - xi15) <= std::max(f15.sigma_xi, 1e-5));
  CHECK(std::abs(f15.xi - xi15) < 1e-4);

  auto h2 = ideal_dwell_hist(2.0, 80);
  auto f2 = fit_dwell(h2);
  CHECK(std::abs(f2.theta_plus + kPi / 6) < h2.bin_width());

  auto fc = fit_dwell(ideal_dwell_hist(2 / std::sqrt(3.0), 80));
  CHECK(std::abs(fc.xi) <= std::max(fc.sigma_xi, 1e-5));

  // fine bins: no discretization bias
  for (double lam : {1.1, 1.5, 2.5}) {
    auto f = fit_dwell(ideal_dwell_hist(lam, 320));
    CAPTURE(lam);
    CHECK(std::abs(f.xi - ideal::critical_exponent(lam)) < 0.01);
  }

  sim::DwellHistogram empty = sim::make_dwell_grid(80, false);
  CHECK_THROWS_AS(fit_dwell(empty), FitError);
}

TEST_CASE("xi curve crossing") {
  std::vector<double> lam, xi;
  for (double l = 1.05; l <= 1.6001; l += 0.05) {
    lam.push_back(l);
    xi.push_back(ideal::critical_exponent(l));
  }
  auto f = fit_xi_curve(lam, xi);
  CHECK(f.lambda_c2 == doctest::Approx(2 / std::sqrt(3.0)).epsilon(1e-3));

  std::vector<double> lam_s;
  for (double l : lam) lam_s.push_back(l - 0.2);
  auto fs = fit_xi_curve(lam_s, xi);
  CHECK(fs.lambda_c2 == doctest::Approx(2 / std::sqrt(3.0) - 0.2).epsilon(1e-3));
  CHECK(fs.delta == doctest::Approx(-0.2).epsilon(1e-3));

  std::vector<double> far{2.0, 2.2, 2.4, 2.6}, far_xi;
  for (double l : far) far_xi.push_back(ideal::critical_exponent(l));
  CHECK_THROWS_AS(fit_xi_curve(far, far_xi), NotFoundError);
}

TEST_CASE("hmm: recovery and monotone likelihood") {
  const double dt = 320e-9;
  auto truth = HmmParams::from_probabilities(0, 0, 0, 0, 0, 0, dt);
  truth.gamma_b_up = 20e3;
  truth.gamma_b_down = 1.0 / 4e-6;
  auto rec = hmm_sample(truth, 100000, 1);
  auto init = HmmParams::from_probabilities(0.02, 0.2, 0, 0, 0.01, 0.01, dt);
  auto r = hmm_baum_welch({rec}, init);
  for (std::size_t i = 1; i < r.loglik.size(); ++i)
    CHECK(r.loglik[i] >= r.loglik[i - 1] - 1e-9 * std::abs(r.loglik[i - 1]));
  CHECK(r.converged);
  CHECK(r.params.gamma_b_up == doctest::Approx(20e3).epsilon(0.05));
  CHECK(1.0 / r.params.gamma_b_down == doctest::Approx(4e-6).epsilon(0.05));

  // zero relaxation in the initial guess stays zero
  CHECK(r.params.gamma_1_up == 0.0);
  CHECK(r.params.gamma_1_down == 0.0);

  Sequence quiet(20000, sim::Outcome::NoClick);
  auto rq = hmm_baum_welch({quiet}, init, 200);
  CHECK(rq.params.gamma_b_up < 1e-3 * init.gamma_b_up);

  auto noisy = truth;
  noisy.p_fp = noisy.p_fn = 0.04;
  auto rn = hmm_baum_welch({hmm_sample(noisy, 100000, 2)}, init);
  CHECK(rn.params.gamma_b_up == doctest::Approx(20e3).epsilon(0.05));
  CHECK(std::abs(rn.params.p_fp - 0.04) < 0.01);
  CHECK(std::abs(rn.params.p_fn - 0.04) < 0.01);
}

TEST_CASE("hmm: calibration table") {
  const double dt = 320e-9;
  std::vector<RecordSet> sets;
  const double c = 20e3;
  for (double label : {1.0, 1.25, 1.5}) {
    auto truth = HmmParams::from_probabilities(0, 0, 0, 0, 0, 0, dt);
    truth.gamma_b_up = c * label * label;
    truth.gamma_b_down = 1.0 / 4e-6;
    RecordSet s;
    s.label = label;
    s.records.push_back(hmm_sample(truth, 300000, 3, static_cast<std::uint64_t>(label * 100)));
    sets.push_back(std::move(s));
  }
  auto init = HmmParams::from_probabilities(0.02, 0.2, 0, 0, 0.01, 0.01, dt);
  auto tab = empirical_click_calibration(sets, init, W);
  REQUIRE(tab.rows.size() == 3);
  CHECK(tab.quad_coeff == doctest::Approx(c).epsilon(0.04));
  CHECK(tab.quad_rel_residual < 0.05);
  for (auto& row : tab.rows) {
    CHECK(row.converged);
    CHECK(row.tau_b == doctest::Approx(4e-6).epsilon(0.05));
    CHECK(row.lambda == doctest::Approx(c * row.label * row.label / (2 * W)).epsilon(0.05));
  }
}
