#pragma once
#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zeno/trajectory.hpp"

namespace zeno::est {

using cplx = std::complex<double>;

// ---- nonlinear least squares -------------------------------------------------------------

struct LsqOptions {
  double xtol = 1e-10;
  int max_iter = 500;
  double fd_step = 1e-6;  // relative forward-difference step
};

struct LsqResult {
  Eigen::VectorXd x;
  Eigen::MatrixXd jac;  // at solution
  double cost = 0.0;    // sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

using Residuals = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;

LsqResult least_squares(const Residuals& f, const Eigen::VectorXd& x0, int n_residuals,
                        const LsqOptions& opt = {});
Eigen::MatrixXd numeric_jacobian(const Residuals& f, const Eigen::VectorXd& x, int n_residuals,
                                 double rel_step = 1e-6);

// ---- matrix pencil -----------------------------------------------------------------------

struct PencilOptions {
  double pencil_fraction = 1.0 / 3.0;
  double sv_threshold = 1e-3;   // relative to the largest singular value
  std::size_t max_samples = 300;  // longer series are decimated
};

struct PoleSet {
  std::vector<cplx> poles;       // 1/s, sorted with the spectrum convention
  std::vector<cplx> amplitudes;  // matching poles
  int model_order = 0;
  double sampling = 0.0;  // s, after decimation
  double residual = 0.0;  // rms reconstruction residual
  bool order_reduced = false;
  std::vector<double> singular_values;
};

// order = 0 selects the order from the singular-value threshold.
PoleSet matrix_pencil(std::span<const double> series, double sampling, int order = 0,
                      const PencilOptions& opt = {});

struct PoleBands {
  std::vector<cplx> median, lo, hi;  // componentwise 50 / 16 / 84 percentiles
  std::size_t n_used = 0;            // iterations with the full model order
  PoleSet fit;
};

PoleBands residual_bootstrap(std::span<const double> series, double sampling, int order,
                             int n_boot = 2000, std::uint64_t seed = 1,
                             const PencilOptions& opt = {});

// ---- exceptional-point coalescence ------------------------------------------------------

struct CoalescenceOptions {
  double half_window = 0.15;
  std::optional<double> center;  // default: coarse change from imaginary to real splitting
  int n_boot = 200;
  std::uint64_t seed = 1;
};

struct CoalescenceFit {
  double lambda_c = 0.0, a = 0.0, b = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
  double sigma_lambda_c = 0.0;
  double residual_norm = 0.0;
  std::vector<std::pair<double, double>> window_sensitivity;  // (half window, lambda_c)
};

CoalescenceFit fit_coalescence(std::span<const double> lambdas, std::span<const cplx> delta_e12,
                               std::span<const double> sigma = {},
                               const CoalescenceOptions& opt = {});

// ---- dwell law ---------------------------------------------------------------------------

// Closed-form dwell law with free scale, edge and exponent; zero for theta <= theta_plus or > 0.
double dwell_model(double theta, double A, double theta_plus, double xi);
double dwell_model_bin(double lo, double hi, double A, double theta_plus, double xi);

struct DwellFitOptions {
  double nonzero_fraction = 0.0;  // first bin above this fraction of the peak marks the edge
};

struct DwellFit {
  double A = 0.0, theta_plus = 0.0, xi = 0.0;
  double sigma_A = 0.0, sigma_theta_plus = 0.0, sigma_xi = 0.0;
  double chi2 = 0.0;
  std::size_t first_bin = 0, n_bins = 0;
};

DwellFit fit_dwell(const sim::DwellHistogram& h, const DwellFitOptions& opt = {});

struct XiCurveFit {
  double delta = 0.0, sigma_delta = 0.0;
  double lambda_c2 = 0.0, sigma_lambda_c2 = 0.0;
  double chi2 = 0.0;
};

XiCurveFit fit_xi_curve(std::span<const double> lambdas, std::span<const double> xi,
                        std::span<const double> sigma = {});

// ---- hidden Markov calibration ----------------------------------------------------------

// States ordered (|0>, |B>, |1>); observations (no_click, click).
struct HmmParams {
  double gamma_b_up = 0.0, gamma_b_down = 0.0;
  double gamma_1_up = 0.0, gamma_1_down = 0.0;
  double p_fp = 0.0, p_fn = 0.0;
  double dt = 0.0;

  Eigen::Matrix3d transition() const;
  Eigen::Matrix<double, 3, 2> emission() const;
  static HmmParams from_probabilities(double p0b, double pb0, double p01, double p10, double p_fp,
                                      double p_fn, double dt);
};

struct HmmResult {
  HmmParams params;
  std::vector<double> loglik;  // one entry per E-step
  int iterations = 0;
  bool converged = false;
};

using Sequence = std::vector<sim::Outcome>;

HmmResult hmm_baum_welch(const std::vector<Sequence>& records, const HmmParams& init,
                         int max_iter = 1000, double tol = 1e-9);

// Draw a record from the hidden chain itself.
Sequence hmm_sample(const HmmParams& p, std::size_t n, std::uint64_t seed, std::uint64_t stream = 0);

struct CalibrationRow {
  double label = 0.0;
  HmmParams fit;
  double alpha = 0.0, tau_b = 0.0, lambda = 0.0;
  bool converged = false;
};

struct CalibrationTable {
  std::vector<CalibrationRow> rows;
  double quad_coeff = 0.0;         // alpha = quad_coeff * label^2
  double quad_rel_residual = 0.0;  // rms residual / mean alpha
};

struct RecordSet {
  double label = 0.0;
  std::vector<Sequence> records;
};

CalibrationTable empirical_click_calibration(const std::vector<RecordSet>& sets,
                                             const HmmParams& init, double omega_s);

}  // namespace zeno::est
