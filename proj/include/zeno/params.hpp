#pragma once
#include <cmath>
#include <numbers>

namespace zeno {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Physical and detector parameters. Rates in 1/s, times in s, omega_s in rad/s.
struct ModelParams {
  double omega_s = kTwoPi * 100e3;
  double alpha = 0.0;
  double gamma1 = 0.0;
  double gamma_phi = 0.0;
  double n_th = 0.0;
  double tau_b = 10e-9;
  double p_fp = 0.0;
  double p_fn = 0.0;
  double kappa_fp = 0.0;
  double t_int = 320e-9;
  double dt_sim = 10e-9;

  double lambda() const { return alpha / (2.0 * omega_s); }
  void set_lambda(double lam) { alpha = 2.0 * lam * omega_s; }
  double gamma2() const { return gamma_phi + 0.5 * gamma1; }
  double gamma_up() const { return n_th > 0.0 ? gamma1 * n_th / (1.0 - n_th) : 0.0; }

  // Throws DomainError on any violated invariant.
  void validate() const;

  bool operator==(const ModelParams&) const = default;

  // Decoherence-free model.
  static ModelParams ideal(double lambda, double omega_s = kTwoPi * 100e3);
  // T1 = 93 us, Tphi = 26 us, Omega/2pi = 100 kHz, Omega*tau_B = 2.5.
  static ModelParams experimental(double lambda);
};

}  // namespace zeno
