#include "zeno/ideal_model.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <limits>

#include "zeno/errors.hpp"

namespace zeno::ideal {

namespace {

void check_lambda(double lambda) {
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw DomainError("lambda must be finite and >= 0");
}

double fold(double theta) { return std::remainder(theta, kTwoPi); }

// x*cot(x) as a function of y = x^2 (x*coth(|x|) for y < 0).
double x_cot_x(double y) {
  if (std::abs(y) < 1e-2) {
    return 1.0 - y / 3.0 - y * y / 45.0 - 2.0 * y * y * y / 945.0 - y * y * y * y / 4725.0;
  }
  if (y > 0.0) {
    double x = std::sqrt(y);
    return x * std::cos(x) / std::sin(x);
  }
  double x = std::sqrt(-y);
  return x / std::tanh(x);
}

// e^{-lam T} times C = cos(T sqrt u), S = sin(T sqrt u)/sqrt u, K = (1 - C)/u.
struct Damped {
  double c, s, k;
};

Damped damped_cs(double T, double lam) {
  const double u = 1.0 - lam * lam;
  const double y = u * T * T;
  const double e = std::exp(-lam * T);
  if (std::abs(y) < 1e-2) {
    double c = 1.0 - y / 2.0 + y * y / 24.0 - y * y * y / 720.0 + y * y * y * y / 40320.0;
    double s = T * (1.0 - y / 6.0 + y * y / 120.0 - y * y * y / 5040.0 + y * y * y * y / 362880.0);
    double k = T * T * (0.5 - y / 24.0 + y * y / 720.0 - y * y * y / 40320.0 + y * y * y * y / 3628800.0);
    return {e * c, e * s, e * k};
  }
  if (u > 0.0) {
    double r = std::sqrt(u);
    double c = std::cos(r * T);
    return {e * c, e * std::sin(r * T) / r, e * (1.0 - c) / u};
  }
  double k = std::sqrt(-u);
  double ep = std::exp((k - lam) * T);
  double em = std::exp(-(k + lam) * T);
  double ec = 0.5 * (ep + em);
  return {ec, 0.5 * (ep - em) / k, (e - ec) / u};
}

struct HalfAngle {
  double a, b;  // (sin - w+ cos), (sin - w- cos) of theta/2
  double kappa;
};

HalfAngle half_angle(double theta, double lambda) {
  const double kappa = std::sqrt(lambda * lambda - 1.0);
  const double sh = std::sin(0.5 * theta), ch = std::cos(0.5 * theta);
  return {sh - (kappa - lambda) * ch, sh + (kappa + lambda) * ch, kappa};
}

bool in_support(double theta, double lambda, Start start) {
  auto fp = fixed_points(lambda);
  double hi = start == Start::Ground ? kPi : 0.0;
  return theta > fp->theta_plus && theta <= hi;
}

double start_factor(double lambda, double kappa, Start start) {
  if (start == Start::Ground) return 1.0;
  // |tan(theta+/2)|^(-2 lambda/kappa), with lambda - kappa = 1/(lambda + kappa)
  return std::exp(2.0 * lambda / kappa * std::log(lambda + kappa));
}

void check_fixed_point_regime(double lambda) {
  check_lambda(lambda);
  if (!(lambda > 1.0)) throw DomainError("closed form requires lambda > 1");
}

}  // namespace

std::optional<FixedPoints> fixed_points(double lambda) {
  check_lambda(lambda);
  if (lambda < 1.0) return std::nullopt;
  const double kappa = std::sqrt(lambda * lambda - 1.0);
  return FixedPoints{2.0 * std::atan(-lambda + kappa), 2.0 * std::atan(-lambda - kappa)};
}

double drift(double theta, double lambda, double omega_s) {
  return -omega_s * (1.0 + lambda * std::sin(theta));
}

double noclick_theta(double t, double lambda, double omega_s, double theta0) {
  check_lambda(lambda);
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  if (t == 0.0) return theta0;
  if (theta0 == kPi) {
    const double a = 0.5 * omega_s * t;
    if (a == 0.0) return kPi;
    const double y = (1.0 - lambda * lambda) * a * a;
    const double tan_half = x_cot_x(y) / a - lambda;
    return 2.0 * std::atan(tan_half);
  }
  namespace odeint = boost::numeric::odeint;
  double state = theta0;
  auto rhs = [&](const double& th, double& dth, double) { dth = drift(th, lambda, omega_s); };
  // integrate in units of 1/omega for scale-free tolerances
  auto stepper = odeint::make_controlled(1e-12, 1e-10, odeint::runge_kutta_dopri5<double>());
  if (omega_s == 0.0) return theta0;
  auto rhs_scaled = [&](const double& th, double& dth, double s) {
    rhs(th, dth, s);
    dth /= omega_s;
  };
  odeint::integrate_adaptive(stepper, rhs_scaled, state, 0.0, omega_s * t, 1e-3);
  return fold(state);
}

double click_rate(double theta, double alpha) {
  if (alpha < 0.0) throw DomainError("alpha must be >= 0");
  double s = std::sin(0.5 * theta);
  return alpha * s * s;
}

double noclick_survival(double t, double lambda, double omega_s) {
  check_lambda(lambda);
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  auto d = damped_cs(omega_s * t, lambda);
  double p = d.k + d.c - lambda * d.s;
  return std::clamp(p, 0.0, 1.0);
}

double first_click_density(double t, double lambda, double omega_s) {
  check_lambda(lambda);
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  auto d = damped_cs(omega_s * t, lambda);
  double f = lambda * omega_s * (d.k + 2.0 * d.c - 2.0 * lambda * d.s);
  return std::max(f, 0.0);
}

double angular_survival(double theta, double lambda, Start start) {
  check_fixed_point_regime(lambda);
  if (!in_support(theta, lambda, start)) return 0.0;
  auto h = half_angle(theta, lambda);
  return start_factor(lambda, h.kappa, start) * std::pow(h.a / h.b, lambda / h.kappa) / (h.a * h.b);
}

double angular_first_click_density(double theta, double lambda, Start start) {
  check_fixed_point_regime(lambda);
  if (!in_support(theta, lambda, start)) return 0.0;
  auto h = half_angle(theta, lambda);
  const double s = std::sin(0.5 * theta);
  const double ab = h.a * h.b;
  return start_factor(lambda, h.kappa, start) * 2.0 * lambda * s * s *
         std::pow(h.a / h.b, lambda / h.kappa) / (ab * ab);
}

double dwell_density(double theta, double lambda, double omega_s, Start start) {
  check_fixed_point_regime(lambda);
  if (!in_support(theta, lambda, start)) return 0.0;
  auto h = half_angle(theta, lambda);
  const double ab = h.a * h.b;
  return start_factor(lambda, h.kappa, start) * std::pow(h.a / h.b, lambda / h.kappa) /
         (omega_s * ab * ab);
}

double critical_exponent(double lambda) {
  check_fixed_point_regime(lambda);
  if (std::isinf(lambda)) return -1.0;
  return lambda / std::sqrt(lambda * lambda - 1.0) - 2.0;
}

Transitions ideal_transitions() { return {1.0, 2.0 / std::sqrt(3.0), 2.0}; }

}  // namespace zeno::ideal
