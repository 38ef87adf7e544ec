#include "zeno/params.hpp"

#include <string>

#include "zeno/errors.hpp"

namespace zeno {

namespace {
void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError("invalid parameter: " + what);
}
}  // namespace

void ModelParams::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  require(finite_nonneg(omega_s), "omega_s must be finite and >= 0");
  require(finite_nonneg(alpha), "alpha must be finite and >= 0");
  require(finite_nonneg(gamma1), "gamma1 must be finite and >= 0");
  require(finite_nonneg(gamma_phi), "gamma_phi must be finite and >= 0");
  require(finite_nonneg(kappa_fp), "kappa_fp must be finite and >= 0");
  require(std::isfinite(tau_b) && tau_b > 0.0, "tau_b must be > 0");
  require(n_th >= 0.0 && n_th < 1.0, "n_th must lie in [0, 1)");
  require(p_fn >= 0.0 && p_fn < 1.0, "p_fn must lie in [0, 1)");
  require(p_fp >= 0.0 && p_fp <= 1.0, "p_fp must lie in [0, 1]");
  require(std::isfinite(dt_sim) && dt_sim > 0.0, "dt_sim must be > 0");
  require(std::isfinite(t_int) && t_int >= dt_sim, "t_int must be >= dt_sim");
}

ModelParams ModelParams::ideal(double lambda, double omega) {
  ModelParams p;
  p.omega_s = omega;
  p.set_lambda(lambda);
  return p;
}

ModelParams ModelParams::experimental(double lambda) {
  ModelParams p;
  p.omega_s = kTwoPi * 100e3;
  p.gamma1 = 1.0 / 93e-6;
  p.gamma_phi = 1.0 / 26e-6;
  p.tau_b = 2.5 / p.omega_s;
  p.set_lambda(lambda);
  return p;
}

}  // namespace zeno
