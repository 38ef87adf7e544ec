#pragma once
#include <optional>

#include "zeno/params.hpp"

// Closed-form ideal (decoherence-free) monitored qubit.
// Convention: theta = pi is |0> (ground), theta = 0 is |1> (excited).
namespace zeno::ideal {

struct FixedPoints {
  double theta_plus;   // stable
  double theta_minus;  // unstable
};

enum class Start { Ground, Excited };

struct Transitions {
  double c1, c2, c3;
};

std::optional<FixedPoints> fixed_points(double lambda);

// Angular velocity of no-click evolution.
double drift(double theta, double lambda, double omega_s);

double noclick_theta(double t, double lambda, double omega_s, double theta0 = kPi);

double click_rate(double theta, double alpha);

// P0(t) for theta0 = pi.
double noclick_survival(double t, double lambda, double omega_s);

// -dP0/dt for theta0 = pi.
double first_click_density(double t, double lambda, double omega_s);

// rho(theta); lambda > 1. Excited start uses support (theta_plus, 0].
double angular_first_click_density(double theta, double lambda, Start start = Start::Ground);

// tau_theta = rho / r, in s/rad.
double dwell_density(double theta, double lambda, double omega_s, Start start = Start::Ground);

// No-click survival as a function of the angle reached, P0(theta).
double angular_survival(double theta, double lambda, Start start = Start::Ground);

double critical_exponent(double lambda);

Transitions ideal_transitions();

}  // namespace zeno::ideal
