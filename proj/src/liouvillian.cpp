#include "zeno/liouvillian.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "zeno/errors.hpp"

namespace zeno::liouvillian {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Eigen::Matrix3d build_postselected(const ModelParams& p) {
  const double a = p.alpha, ae = p.alpha * (1.0 - p.p_fn), om = p.omega_s;
  const double g1 = p.gamma1, g2 = p.gamma2(), kf = p.kappa_fp, gu = p.gamma_up();
  Eigen::Matrix3d m;
  m << -ae / 2 - kf, 0.0, ae / 2,                                  //
      0.0, -g2 - a / 2 - kf - gu / 2, om,                          //
      ae / 2 - g1 + gu, -om, -ae / 2 - g1 - kf - gu;
  return m;
}

Eigen::Matrix4d build_ensemble(const ModelParams& p) {
  if (!(p.tau_b > 0.0)) throw DomainError("tau_b must be > 0");
  const double a = p.alpha, om = p.omega_s, g1 = p.gamma1, g2 = p.gamma2(), gu = p.gamma_up();
  const double rb = 1.0 / p.tau_b;
  Eigen::Matrix4d m;
  m << -rb, a / 2, 0.0, -a / 2,                //
      rb, -a / 2, 0.0, a / 2,                  //
      0.0, 0.0, -g2 - a / 2 - gu / 2, om,      //
      -rb, a / 2 - g1 + gu, -om, -a / 2 - g1 - gu;
  return m;
}

Eigen::Matrix3d deflate_ensemble(const Eigen::Matrix4d& lb) {
  Eigen::Matrix<double, 4, 3> b = Eigen::Matrix<double, 4, 3>::Zero();
  b(0, 0) = -M_SQRT1_2;
  b(1, 0) = M_SQRT1_2;
  b(2, 1) = 1.0;
  b(3, 2) = 1.0;
  return b.transpose() * lb * b;
}

SortedSpectrum sort_eigenvalues(std::vector<cplx> ev, double tol_scale) {
  double scale = tol_scale;
  if (scale <= 0.0)
    for (auto& e : ev) scale = std::max(scale, std::abs(e));
  const double tol = 1e-9 * (scale > 0.0 ? scale : 1.0);

  struct Group {
    double re;
    std::vector<cplx> members;
  };
  std::vector<cplx> cx;
  std::vector<Group> groups;
  for (auto e : ev) {
    if (std::abs(e.imag()) < tol)
      groups.push_back({e.real(), {cplx(e.real(), 0.0)}});
    else
      cx.push_back(e);
  }
  std::sort(cx.begin(), cx.end(), [](cplx a, cplx b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  // pair each Im<0 member with its nearest conjugate
  std::vector<bool> used(cx.size(), false);
  for (std::size_t i = 0; i < cx.size(); ++i) {
    if (used[i] || cx[i].imag() > 0) continue;
    std::size_t best = cx.size();
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cx.size(); ++j) {
      if (used[j] || j == i || cx[j].imag() < 0) continue;
      double d = std::abs(cx[j] - std::conj(cx[i]));
      if (d < bd) bd = d, best = j;
    }
    if (best == cx.size()) throw NumericalError("unpaired complex eigenvalue");
    used[i] = used[best] = true;
    double re = 0.5 * (cx[i].real() + cx[best].real());
    double im = 0.5 * (std::abs(cx[i].imag()) + std::abs(cx[best].imag()));
    groups.push_back({re, {cplx(re, -im), cplx(re, im)}});
  }
  for (std::size_t i = 0; i < cx.size(); ++i)
    if (!used[i]) throw NumericalError("unpaired complex eigenvalue");

  auto before = [tol](const Group& a, const Group& b) {
    if (std::abs(a.re - b.re) < tol) return a.members.size() > b.members.size();
    return a.re < b.re;
  };
  // insertion sort: tolerance comparator is not a strict weak order
  for (std::size_t i = 1; i < groups.size(); ++i)
    for (std::size_t j = i; j > 0 && before(groups[j], groups[j - 1]); --j)
      std::swap(groups[j], groups[j - 1]);

  SortedSpectrum out;
  for (auto& g : groups) {
    if (g.members.size() == 2) out.has_pair = true;
    for (auto e : g.members) out.values.push_back(e);
  }
  return out;
}

SortedSpectrum spectrum(const Eigen::MatrixXd& m, double tol_scale) {
  if (m.rows() != m.cols()) throw DomainError("spectrum requires a square matrix");
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "eigen-solve failed for matrix:\n" << m;
    throw NumericalError(os.str());
  }
  std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + m.rows());
  std::optional<cplx> zero;
  if (m.rows() == 4) {
    auto it = std::min_element(ev.begin(), ev.end(),
                               [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
    zero = *it;
    ev.erase(it);
  }
  if (tol_scale <= 0.0) {
    for (auto e : ev) tol_scale = std::max(tol_scale, std::abs(e));
  }
  auto s = sort_eigenvalues(std::move(ev), tol_scale);
  s.e0 = zero;
  return s;
}

namespace {
struct XiParts {
  double re2, e3;
};
XiParts xi_parts(const SortedSpectrum& s) {
  if (s.values.size() < 3) throw DomainError("need three eigenvalues");
  if (s.has_pair) {
    double re2 = kNaN, e3 = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (s.values[i].imag() != 0.0) {
        re2 = s.values[i].real();
      } else {
        e3 = std::max(e3, s.values[i].real());
      }
    }
    return {re2, e3};
  }
  std::vector<double> re;
  for (auto e : s.values) re.push_back(e.real());
  std::sort(re.begin(), re.end());
  return {re[re.size() - 2], re.back()};
}
}  // namespace

double xi_from_spectrum(const SortedSpectrum& s) {
  auto [re2, e3] = xi_parts(s);
  double scale = 0.0;
  for (auto e : s.values) scale = std::max(scale, std::abs(e));
  if (std::abs(re2 - e3) <= 1e-12 * scale)
    throw SingularConfiguration("Re(e2) = e3: exponent undefined");
  return (2.0 * e3 - re2) / (re2 - e3);
}

double cubic_discriminant(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d n = m - (m.trace() / 3.0) * Eigen::Matrix3d::Identity();
  double p = n(0, 0) * n(1, 1) - n(0, 1) * n(1, 0) + n(0, 0) * n(2, 2) - n(0, 2) * n(2, 0) +
             n(1, 1) * n(2, 2) - n(1, 2) * n(2, 1);
  double q = -n.determinant();
  return -4.0 * p * p * p - 27.0 * q * q;
}

namespace {

// First sign change of f from a prescan, refined by bisection.
double first_sign_change(const std::function<double(double)>& f, const Bracket& br,
                         const char* what) {
  const int n = std::max(br.prescan, 2);
  double x0 = br.lo, f0 = f(x0);
  for (int i = 1; i < n; ++i) {
    double x1 = br.lo + (br.hi - br.lo) * i / (n - 1);
    double f1 = f(x1);
    if (f0 == 0.0) return x0;
    if ((f0 < 0.0) != (f1 < 0.0)) {
      double a = x0, b = x1, fa = f0;
      while (b - a > 1e-11) {
        double m = 0.5 * (a + b), fm = f(m);
        if ((fm < 0.0) == (fa < 0.0))
          a = m, fa = fm;
        else
          b = m;
      }
      return 0.5 * (a + b);
    }
    x0 = x1;
    f0 = f1;
  }
  std::ostringstream os;
  os << what << ": no sign change in [" << br.lo << ", " << br.hi << "]";
  throw NotFoundError(os.str());
}

ModelParams at_lambda(ModelParams p, double lam) {
  p.set_lambda(lam);
  return p;
}

}  // namespace

double find_lambda_c1(ModelParams base, Bracket br) {
  const double om = base.omega_s;
  return first_sign_change(
      [&](double lam) { return cubic_discriminant(build_postselected(at_lambda(base, lam)) / om); },
      br, "lambda_c1");
}

double find_lambda_c2(ModelParams base, Bracket br) {
  const double om = base.omega_s;
  return first_sign_change(
      [&](double lam) {
        auto s = spectrum(build_postselected(at_lambda(base, lam)) / om);
        auto [re2, e3] = xi_parts(s);
        return 2.0 * e3 - re2;
      },
      br, "lambda_c2");
}

double find_lambda_c3(ModelParams base, Bracket br) {
  const double om = base.omega_s;
  return first_sign_change(
      [&](double lam) {
        return cubic_discriminant(deflate_ensemble(build_ensemble(at_lambda(base, lam)) / om));
      },
      br, "lambda_c3");
}

TransitionSet find_transitions(const ModelParams& base, Bracket br) {
  return {find_lambda_c1(base, br), find_lambda_c2(base, br), find_lambda_c3(base, br)};
}

ScanParameter parse_scan_parameter(const std::string& name) {
  if (name == "gamma_phi") return ScanParameter::GammaPhi;
  if (name == "gamma1") return ScanParameter::Gamma1;
  if (name == "kappa_fp") return ScanParameter::KappaFp;
  if (name == "p_fn") return ScanParameter::PFn;
  if (name == "kappa_b" || name == "omega_tau_b") return ScanParameter::KappaB;
  throw ConfigError("unknown scan parameter '" + name + "'");
}

std::string scan_parameter_name(ScanParameter p) {
  switch (p) {
    case ScanParameter::GammaPhi: return "gamma_phi";
    case ScanParameter::Gamma1: return "gamma1";
    case ScanParameter::KappaFp: return "kappa_fp";
    case ScanParameter::PFn: return "p_fn";
    case ScanParameter::KappaB: return "kappa_b";
  }
  return "?";
}

void apply_scan_value(ModelParams& p, ScanParameter which, double v) {
  switch (which) {
    case ScanParameter::GammaPhi: p.gamma_phi = v * p.omega_s; break;
    case ScanParameter::Gamma1: p.gamma1 = v * p.omega_s; break;
    case ScanParameter::KappaFp: p.kappa_fp = v * p.omega_s; break;
    case ScanParameter::PFn: p.p_fn = v; break;
    case ScanParameter::KappaB: p.tau_b = v / p.omega_s; break;
  }
}

std::vector<ScanRow> lambda_scan(const ModelParams& base, ScanParameter which,
                                 std::span<const double> grid, Bracket br) {
  std::vector<ScanRow> rows;
  for (double v : grid) {
    ModelParams p = base;
    apply_scan_value(p, which, v);
    p.validate();
    auto attempt = [&](auto finder) {
      try {
        return finder(p, br);
      } catch (const NotFoundError&) {
        return kNaN;
      }
    };
    rows.push_back({v, attempt(find_lambda_c1), attempt(find_lambda_c2), attempt(find_lambda_c3)});
  }
  return rows;
}

std::string scan_to_csv(ScanParameter which, const std::vector<ScanRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "param_name,param_value,lambda_c1,lambda_c2,lambda_c3\n";
  for (auto& r : rows)
    os << scan_parameter_name(which) << ',' << r.value << ',' << r.c1 << ',' << r.c2 << ','
       << r.c3 << '\n';
  return os.str();
}

std::vector<MasterSample> integrate_master(const ModelParams& p, const BlochVector4& init,
                                           double duration, double spacing) {
  if (!(spacing > 0.0) || !(duration >= 0.0)) throw DomainError("bad duration/spacing");
  Eigen::Matrix4d l = build_ensemble(p);
  const double norm1 = l.cwiseAbs().colwise().sum().maxCoeff();
  const long nsub = std::max(1L, static_cast<long>(std::ceil(spacing * norm1 / 0.01)));
  Eigen::Matrix4d step = (l * (spacing / nsub)).exp();
  const long n = static_cast<long>(std::floor(duration / spacing + 1e-9));
  std::vector<MasterSample> out;
  out.reserve(n + 1);
  Eigen::Vector4d v = init.vec();
  out.push_back({0.0, init});
  for (long k = 1; k <= n; ++k) {
    for (long s = 0; s < nsub; ++s) v = step * v;
    out.push_back({k * spacing, BlochVector4::from(v)});
  }
  return out;
}

BlochVector4 steady_state(const ModelParams& p) {
  Eigen::Matrix4d l = build_ensemble(p) / p.omega_s;
  Eigen::FullPivLU<Eigen::Matrix4d> lu(l);
  lu.setThreshold(1e-10);
  Eigen::MatrixXd k = lu.kernel();
  if (k.cols() < 1) throw NumericalError("ensemble generator has no null vector");
  Eigen::Vector4d v = k.col(0);
  v /= (v[0] + v[1]);
  return BlochVector4::from(v);
}

std::vector<cplx> pair_splitting(const std::vector<SortedSpectrum>& spectra) {
  const std::size_t n = spectra.size();
  std::vector<cplx> out(n);
  std::size_t i0 = n;
  for (std::size_t i = 0; i < n; ++i)
    if (spectra[i].has_pair) {
      i0 = i;
      break;
    }
  if (i0 == n) throw NotFoundError("pair_splitting: no complex pair in any spectrum");

  auto handle = [&](std::size_t i, double& ref) {
    const auto& v = spectra[i].values;
    if (spectra[i].has_pair) {
      for (std::size_t k = 0; k + 1 < v.size(); ++k)
        if (v[k].imag() < 0.0) {
          out[i] = 0.5 * (v[k] - v[k + 1]);
          ref = v[k].real();
          return;
        }
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t a = 0; a < v.size(); ++a)
      for (std::size_t b = a + 1; b < v.size(); ++b) {
        double d = std::abs(0.5 * (v[a].real() + v[b].real()) - ref);
        if (d < best) best = d, bi = a, bj = b;
      }
    double lo = std::min(v[bi].real(), v[bj].real()), hi = std::max(v[bi].real(), v[bj].real());
    out[i] = cplx(0.5 * (lo - hi), 0.0);
    ref = 0.5 * (lo + hi);
  };
  double ref = 0.0;
  for (std::size_t i = i0; i < n; ++i) handle(i, ref);
  ref = 0.0;
  handle(i0, ref);
  for (std::size_t i = i0; i-- > 0;) handle(i, ref);
  return out;
}

}  // namespace zeno::liouvillian
