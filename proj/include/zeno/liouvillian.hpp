#pragma once
#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zeno/params.hpp"

namespace zeno::liouvillian {

using cplx = std::complex<double>;

// (p_s, x, z)
struct BlochVector3 {
  double p_s = 1.0, x = 0.0, z = -1.0;
};
// (p_b, p_s, x, z)
struct BlochVector4 {
  double p_b = 0.0, p_s = 1.0, x = 0.0, z = -1.0;
  Eigen::Vector4d vec() const { return {p_b, p_s, x, z}; }
  static BlochVector4 from(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
  double p1() const { return 0.5 * (p_s + z); }
};

// Eigenvalues e1, e2, e3. A conjugate pair occupies adjacent slots with Im <= 0 first.
// Groups (pair or single real) are ascending in real part; the pair precedes a real
// eigenvalue with the same real part. For 4x4 input the steady-state zero is in e0.
struct SortedSpectrum {
  std::vector<cplx> values;
  std::optional<cplx> e0;
  bool has_pair = false;
  cplx e1() const { return values.at(0); }
  cplx e2() const { return values.at(1); }
  cplx e3() const { return values.at(2); }
};

Eigen::Matrix3d build_postselected(const ModelParams& p);
Eigen::Matrix4d build_ensemble(const ModelParams& p);

// Trace-orthogonal projection of the ensemble generator onto (p_s - p_b, x, z).
Eigen::Matrix3d deflate_ensemble(const Eigen::Matrix4d& lb);

// tol_scale: magnitude used for the real/complex decision (defaults to max |e|).
SortedSpectrum sort_eigenvalues(std::vector<cplx> ev, double tol_scale = 0.0);
SortedSpectrum spectrum(const Eigen::MatrixXd& m, double tol_scale = 0.0);

double xi_from_spectrum(const SortedSpectrum& s);

// Discriminant of the characteristic cubic; < 0 iff a complex pair is present.
double cubic_discriminant(const Eigen::Matrix3d& m);

struct Bracket {
  double lo = 0.5, hi = 3.0;
  int prescan = 200;
};

double find_lambda_c1(ModelParams base, Bracket br = {});
double find_lambda_c2(ModelParams base, Bracket br = {});
double find_lambda_c3(ModelParams base, Bracket br = {});

struct TransitionSet {
  double c1, c2, c3;
};
TransitionSet find_transitions(const ModelParams& base, Bracket br = {});

enum class ScanParameter { GammaPhi, Gamma1, KappaFp, PFn, KappaB };
ScanParameter parse_scan_parameter(const std::string& name);
std::string scan_parameter_name(ScanParameter p);
// Dimensionless value: rates in units of omega_s, kappa_B = omega_s * tau_b.
void apply_scan_value(ModelParams& p, ScanParameter which, double value);

struct ScanRow {
  double value;
  double c1, c2, c3;  // NaN when not found in the bracket
};
std::vector<ScanRow> lambda_scan(const ModelParams& base, ScanParameter which,
                                 std::span<const double> grid, Bracket br = {});
std::string scan_to_csv(ScanParameter which, const std::vector<ScanRow>& rows);

struct MasterSample {
  double t;
  BlochVector4 v;
};
std::vector<MasterSample> integrate_master(const ModelParams& p, const BlochVector4& init,
                                           double duration, double spacing);

// Normalized null vector of the ensemble generator.
BlochVector4 steady_state(const ModelParams& p);

// Half splitting of the coalescing pair across a lambda sweep, tracked by continuity.
std::vector<cplx> pair_splitting(const std::vector<SortedSpectrum>& spectra);

}  // namespace zeno::liouvillian
