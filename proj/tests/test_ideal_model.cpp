#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>

#include "zeno/ideal_model.hpp"

using namespace zeno;
using namespace zeno::ideal;

namespace {

constexpr double W = kTwoPi * 100e3;

// RK4 on (theta, log P0) in units of omega*t.
struct Oracle {
  double lambda;
  void rhs(double th, double& dth, double& dlp) const {
    dth = -(1.0 + lambda * std::sin(th));
    dlp = -2.0 * lambda * std::pow(std::sin(th / 2), 2);
  }
  std::pair<double, double> run(double T, double th0 = kPi, int n = 20000) const {
    double th = th0, lp = 0.0, h = T / n;
    for (int i = 0; i < n; ++i) {
      double k1, l1, k2, l2, k3, l3, k4, l4;
      rhs(th, k1, l1);
      rhs(th + 0.5 * h * k1, k2, l2);
      rhs(th + 0.5 * h * k2, k3, l3);
      rhs(th + h * k3, k4, l4);
      th += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      lp += h / 6 * (l1 + 2 * l2 + 2 * l3 + l4);
    }
    return {th, std::exp(lp)};
  }
};

double wrap(double a) { return std::remainder(a, kTwoPi); }

template <class F>
double integrate(F f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12);
}

// endpoint singularities
template <class F>
double integrate_singular(F f, double a, double b) {
  static boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(f, a, b, 1e-12);
}

}  // namespace

TEST_CASE("fixed points") {
  auto f1 = fixed_points(1.0);
  REQUIRE(f1);
  CHECK(f1->theta_plus == doctest::Approx(-kPi / 2).epsilon(1e-12));
  CHECK(f1->theta_minus == doctest::Approx(-kPi / 2).epsilon(1e-12));

  auto f2 = fixed_points(2.0);
  REQUIRE(f2);
  CHECK(f2->theta_plus == doctest::Approx(-kPi / 6).epsilon(1e-12));
  CHECK(f2->theta_minus == doctest::Approx(-5 * kPi / 6).epsilon(1e-12));
  CHECK(std::tan(kPi / 12) == doctest::Approx(2 - std::sqrt(3.0)).epsilon(1e-14));

  CHECK_FALSE(fixed_points(0.5));

  for (double lam : {1.01, 1.3, 2.0, 5.0, 40.0}) {
    auto fp = *fixed_points(lam);
    CHECK(std::abs(drift(fp.theta_plus, lam, W)) < 1e-12 * W);
    CHECK(std::abs(drift(fp.theta_minus, lam, W)) < 1e-12 * W);
    const double h = 1e-6;
    double dp = (drift(fp.theta_plus + h, lam, W) - drift(fp.theta_plus - h, lam, W)) / (2 * h);
    double dm = (drift(fp.theta_minus + h, lam, W) - drift(fp.theta_minus - h, lam, W)) / (2 * h);
    CHECK(dp < 0.0);
    CHECK(dm > 0.0);
  }
}

TEST_CASE("noclick theta: closed form") {
  for (double t : {0.0, 1e-6, 3e-6, 7.5e-6})
    CHECK(noclick_theta(t, 0.0, W) == doctest::Approx(wrap(kPi - W * t)).epsilon(1e-12));
  for (double lam : {0.0, 0.5, 1.0, 2.0}) CHECK(noclick_theta(0.0, lam, W) == doctest::Approx(kPi));
  // long-time limit at lambda = 2
  CHECK(noclick_theta(200.0 / W, 2.0, W) == doctest::Approx(-kPi / 6).epsilon(1e-9));
  auto [th, p] = Oracle{2.0}.run(30.0);
  CHECK(th == doctest::Approx(-kPi / 6).epsilon(1e-8));
  (void)p;
}

TEST_CASE("noclick theta matches an independent integration") {
  for (double lam : {0.2, 0.5, 0.9, 0.999999, 1.0, 1.000001, 1.1, 1.5, 2.0, 3.0}) {
    for (double T : {0.3, 1.0, 2.5, 6.0, 11.0}) {
      auto [th, p] = Oracle{lam}.run(T);
      CAPTURE(lam);
      CAPTURE(T);
      CHECK(std::abs(wrap(noclick_theta(T / W, lam, W) - th)) < 1e-8);
      CHECK(noclick_survival(T / W, lam, W) == doctest::Approx(p).epsilon(1e-8));
    }
  }
}

TEST_CASE("noclick theta satisfies the equation of motion") {
  for (double lam : {0.3, 0.8, 1.0, 1.2, 2.5}) {
    for (double T : {0.4, 1.7, 3.3, 8.0}) {
      const double t = T / W, h = 1e-4 / W;
      double d = wrap(noclick_theta(t + h, lam, W) - noclick_theta(t - h, lam, W)) / (2 * h);
      double expect = drift(noclick_theta(t, lam, W), lam, W);
      CAPTURE(lam);
      CAPTURE(T);
      CHECK(d == doctest::Approx(expect).epsilon(1e-8).scale(W));
    }
  }
}

TEST_CASE("noclick theta from a general start") {
  for (double lam : {0.5, 1.5}) {
    for (double th0 : {0.0, 1.0, -2.0}) {
      auto [th, p] = Oracle{lam}.run(4.0, th0);
      (void)p;
      CHECK(std::abs(wrap(noclick_theta(4.0 / W, lam, W, th0) - th)) < 1e-8);
    }
  }
}

TEST_CASE("click rate") {
  CHECK(click_rate(kPi, 3.0) == doctest::Approx(3.0));
  CHECK(click_rate(0.0, 3.0) == 0.0);
  CHECK(click_rate(kPi / 2, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("survival and first-click density") {
  CHECK(noclick_survival(0.0, 0.7, W) == doctest::Approx(1.0));
  for (double t : {1e-6, 1e-5, 1e-4}) CHECK(noclick_survival(t, 0.0, W) == doctest::Approx(1.0));
  CHECK(noclick_survival(1.0 / W, 1.0, W) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-12));

  for (double lam : {0.3, 0.5, 1.0, 1.7})
    CHECK(first_click_density(0.0, lam, W) == doctest::Approx(2 * lam * W).epsilon(1e-12));
  CHECK(first_click_density(2e-6, 0.0, W) == 0.0);

  double norm = integrate([](double T) { return first_click_density(T / W, 0.5, W) / W; }, 0.0, 200.0);
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));

  // density is -dP0/dt and P0 is monotone in [0, 1]
  for (double lam : {0.4, 1.0, 2.2}) {
    double prev = 1.0;
    for (int i = 1; i < 400; ++i) {
      double t = i * 0.05 / W;
      double p = noclick_survival(t, lam, W);
      CHECK(p <= prev + 1e-15);
      CHECK(p >= 0.0);
      prev = p;
      double h = 1e-5 / W;
      double d = -(noclick_survival(t + h, lam, W) - noclick_survival(t - h, lam, W)) / (2 * h);
      CHECK(first_click_density(t, lam, W) == doctest::Approx(d).epsilon(1e-6).scale(W));
    }
  }
}

TEST_CASE("first-click density: oscillatory minima below lambda = 1") {
  // zeros sit where theta(t) crosses |1>, one per Rabi period
  const double lam = 0.5, period = kTwoPi / (W * std::sqrt(1 - lam * lam));
  auto f = [&](double t) { return first_click_density(t, lam, W); };
  std::vector<double> minima;
  const int n = 6000;
  const double h = 3.0 * period / n;
  for (int i = 1; i < n; ++i) {
    double t = i * h;
    if (f(t) < f(t - h) && f(t) < f(t + h)) {
      std::uintmax_t it = 100;
      auto r = boost::math::tools::toms748_solve(
          [&](double x) { return noclick_theta(x, lam, W); }, t - 2 * h, t + 2 * h,
          boost::math::tools::eps_tolerance<double>(50), it);
      const double tz = 0.5 * (r.first + r.second);
      CHECK(std::abs(tz - t) < h);
      CHECK(f(tz) < 1e-12 * W);
      minima.push_back(tz);
    }
  }
  REQUIRE(minima.size() == 3);
  CHECK(minima[1] - minima[0] == doctest::Approx(period).epsilon(1e-6));
  CHECK(minima[2] - minima[1] == doctest::Approx(period).epsilon(1e-6));
  // eventually monotone above
  double prev = first_click_density(3.0 / W, 2.2, W);
  for (int i = 1; i < 200; ++i) {
    double v = first_click_density((3.0 + 0.1 * i) / W, 2.2, W);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("angular densities") {
  const double lam = 1.5;
  auto fp = *fixed_points(lam);
  CHECK(angular_first_click_density(fp.theta_plus - 0.01, lam) == 0.0);
  CHECK(angular_first_click_density(-3.0, lam) == 0.0);

  // normalization, split near the edge; the edge piece is the power law integrated exactly
  auto rho = [&](double th) { return angular_first_click_density(th, lam); };
  const double xi = critical_exponent(lam), d = 1e-9, a = fp.theta_plus + d;
  auto edge = [&](auto f) { return f(a) * d / (1.0 + xi); };
  double n1 = edge(rho) + integrate_singular(rho, a, kPi);
  CHECK(n1 == doctest::Approx(1.0).epsilon(1e-8));
  auto rho_e = [&](double th) { return angular_first_click_density(th, lam, Start::Excited); };
  double n2 = edge(rho_e) + integrate_singular(rho_e, a, 0.0);
  CAPTURE(n2 - 1.0);
  CHECK(n2 == doctest::Approx(1.0).epsilon(1e-8));

  // edge behaviour follows the sign of xi: vanishing at 1.1, divergent at 2
  auto f11 = *fixed_points(1.1);
  CHECK(angular_first_click_density(f11.theta_plus + 1e-10, 1.1) < 1e-3);
  auto f2 = *fixed_points(2.0);
  CHECK(angular_first_click_density(f2.theta_plus + 1e-10, 2.0) > 1e6);

  // dwell = rho / r
  for (double lam2 : {1.2, 1.5, 2.0, 3.0}) {
    for (double th : {-0.3, 0.1, 1.0, 2.5}) {
      auto q = *fixed_points(lam2);
      if (th <= q.theta_plus) continue;
      double r = click_rate(th, 2 * lam2 * W);
      CHECK(dwell_density(th, lam2, W) ==
            doctest::Approx(angular_first_click_density(th, lam2) / r).epsilon(1e-10));
      // and P0(theta) / |theta dot|
      CHECK(dwell_density(th, lam2, W) ==
            doctest::Approx(angular_survival(th, lam2) / std::abs(drift(th, lam2, W)))
                .epsilon(1e-10));
    }
  }

  // dwell time integrates to the mean first-click time
  const double mean_t = integrate([&](double T) { return noclick_survival(T / W, lam, W) / W; },
                                  0.0, 400.0);
  auto tau = [&](double th) { return dwell_density(th, lam, W); };
  double tot = edge(tau) + integrate_singular(tau, a, kPi);
  CHECK(tot == doctest::Approx(mean_t).epsilon(1e-6));
}

TEST_CASE("critical exponent") {
  CHECK(std::abs(critical_exponent(2 / std::sqrt(3.0))) < 1e-14);
  CHECK(critical_exponent(2.0) == doctest::Approx(2 / std::sqrt(3.0) - 2).epsilon(1e-14));
  CHECK(critical_exponent(1e7) == doctest::Approx(-1.0).epsilon(1e-9));

  // log-log slope of the dwell density at the edge
  for (double lam : {1.1, 1.3, 2.0, 3.0}) {
    auto fp = *fixed_points(lam);
    double d1 = 1e-7, d2 = 1e-8;
    double s = std::log(dwell_density(fp.theta_plus + d1, lam, W) /
                        dwell_density(fp.theta_plus + d2, lam, W)) /
               std::log(d1 / d2);
    CAPTURE(lam);
    CHECK(s == doctest::Approx(critical_exponent(lam)).epsilon(1e-3).scale(1.0));
  }
}

TEST_CASE("ideal transitions") {
  auto t = ideal_transitions();
  CHECK(t.c1 == 1.0);
  CHECK(t.c2 == doctest::Approx(2 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(t.c3 == 2.0);
  std::uintmax_t it = 100;
  auto root = boost::math::tools::toms748_solve([](double l) { return critical_exponent(l); }, 1.01,
                                                2.0, boost::math::tools::eps_tolerance<double>(50),
                                                it);
  CHECK(0.5 * (root.first + root.second) == doctest::Approx(t.c2).epsilon(1e-12));
}
