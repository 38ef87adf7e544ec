#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>

#include "zeno/errors.hpp"
#include "zeno/estimation.hpp"

namespace zeno::est {

namespace {

// d = theta - theta_plus, passed separately to keep precision at the edge.
double model_d(double theta, double d, double A, double tp, double xi) {
  if (d <= 0.0 || theta > 0.0) return 0.0;
  const double ch = std::cos(0.5 * theta), cp = std::cos(0.5 * tp);
  const double w = std::tan(0.5 * theta), wm = 1.0 / std::tan(0.5 * tp);
  const double dw = std::sin(0.5 * d) / (ch * cp);
  const double c2 = ch * ch;
  return A * std::pow(dw, xi) / (c2 * c2 * std::pow(w - wm, xi + 4.0));
}

}  // namespace

double dwell_model(double theta, double A, double tp, double xi) {
  return model_d(theta, theta - tp, A, tp, xi);
}

double dwell_model_bin(double lo, double hi, double A, double tp, double xi) {
  const double a = std::max(lo, tp), b = std::min(hi, 0.0);
  if (!(b > a)) return 0.0;
  static thread_local boost::math::quadrature::tanh_sinh<double> ts;
  const bool edge = a == tp;
  auto f = [&](double x, double xc) {
    double d = (edge && x < 0.5 * (a + b)) ? -xc : x - tp;
    return model_d(x, d, A, tp, xi);
  };
  double v = ts.integrate(f, a, b, 1e-10);
  return v / (hi - lo);
}

DwellFit fit_dwell(const sim::DwellHistogram& h, const DwellFitOptions& opt) {
  const std::size_t nb = h.values.size();
  double peak = 0.0;
  for (std::size_t i = 0; i < nb; ++i)
    if (h.center(i) < 0.0) peak = std::max(peak, h.values[i]);
  if (!(peak > 0.0)) throw FitError("histogram is empty on theta < 0");
  std::size_t i0 = nb;
  for (std::size_t i = 0; i < nb && h.center(i) < 0.0; ++i)
    if (h.values[i] > opt.nonzero_fraction * peak && h.values[i] > 0.0) {
      i0 = i;
      break;
    }
  if (i0 == nb) throw FitError("no populated bin on theta < 0");
  if (!(h.center(i0) > -kPi / 2)) throw FitError("forbidden-region edge not above -pi/2");
  std::vector<std::size_t> idx;
  for (std::size_t i = i0; i < nb && h.edges[i] < -1e-12; ++i) idx.push_back(i);
  if (idx.size() < 4) throw FitError("fewer than four bins between the edge and zero");

  const int n = static_cast<int>(idx.size());
  double smin = std::numeric_limits<double>::infinity();
  for (auto i : idx)
    if (h.sigma[i] > 0.0) smin = std::min(smin, h.sigma[i]);
  const bool weighted = std::isfinite(smin);
  std::vector<double> wt(n);
  for (int k = 0; k < n; ++k) {
    double s = h.sigma[idx[k]];
    wt[k] = weighted ? 1.0 / (s > 0.0 ? s : smin) : 1.0;
  }

  const double width = h.bin_width();
  const double lo = h.edges[i0] - width, hi = std::min(h.edges[i0 + 1], -1e-9);
  auto natural = [&](const Eigen::VectorXd& x) {
    Eigen::Vector3d p;
    p[0] = std::exp(x[0]);
    p[1] = lo + (hi - lo) / (1.0 + std::exp(-x[1]));
    p[2] = -0.98 + std::exp(x[2]);
    return p;
  };
  auto resid_nat = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int k = 0; k < n; ++k) {
      const auto i = idx[k];
      r[k] = wt[k] * (dwell_model_bin(h.edges[i], h.edges[i + 1], p[0], p[1], p[2]) - h.values[i]);
    }
  };
  Residuals f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) { resid_nat(natural(x), r); };

  LsqResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (double frac : {0.55, 0.75, 0.95})
    for (double xi0 : {-0.5, 0.0, 0.8}) {
      const double tp = lo + frac * (hi - lo);
      // scale by linear least squares at the start point
      double num = 0.0, den = 0.0;
      for (int k = 0; k < n; ++k) {
        const auto i = idx[k];
        double m = dwell_model_bin(h.edges[i], h.edges[i + 1], 1.0, tp, xi0);
        num += wt[k] * wt[k] * m * h.values[i];
        den += wt[k] * wt[k] * m * m;
      }
      if (!(den > 0.0) || !(num > 0.0)) continue;
      Eigen::VectorXd x0(3);
      x0 << std::log(num / den), std::log(frac / (1.0 - frac)), std::log(xi0 + 0.98);
      auto r = least_squares(f, x0, n);
      if (r.cost < best.cost) best = r;
    }
  if (!std::isfinite(best.cost)) throw FitError("dwell fit could not start");
  Eigen::Vector3d p = natural(best.x);
  if (!best.converged) throw FitError("dwell fit did not converge", {p[0], p[1], p[2]});

  DwellFit out;
  out.A = p[0];
  out.theta_plus = p[1];
  out.xi = p[2];
  out.chi2 = best.cost;
  out.first_bin = i0;
  out.n_bins = idx.size();
  Residuals fn = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) { resid_nat(q, r); };
  Eigen::MatrixXd j = numeric_jacobian(fn, p, n, 1e-6);
  Eigen::Matrix3d cov = (j.transpose() * j).inverse();
  if (!weighted && n > 3) cov *= best.cost / (n - 3);
  out.sigma_A = std::sqrt(std::max(cov(0, 0), 0.0));
  out.sigma_theta_plus = std::sqrt(std::max(cov(1, 1), 0.0));
  out.sigma_xi = std::sqrt(std::max(cov(2, 2), 0.0));
  return out;
}

XiCurveFit fit_xi_curve(std::span<const double> lambdas, std::span<const double> xi,
                        std::span<const double> sigma) {
  const std::size_t n = lambdas.size();
  if (n < 4 || xi.size() != n) throw DomainError("need at least four (lambda, xi) points");
  if (!sigma.empty() && sigma.size() != n) throw DomainError("sigma size mismatch");
  double lmin = lambdas[0], lmax = lambdas[0];
  for (double l : lambdas) lmin = std::min(lmin, l), lmax = std::max(lmax, l);
  bool weighted = !sigma.empty();
  auto w = [&](std::size_t i) { return weighted && sigma[i] > 0.0 ? 1.0 / sigma[i] : 1.0; };
  auto chi2 = [&](double delta) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double u = lambdas[i] - delta;
      double r = (u / std::sqrt(u * u - 1.0) - 2.0 - xi[i]) * w(i);
      s += r * r;
    }
    return s;
  };
  const double hi = lmin - 1.0 - 1e-9, lo = lmin - 3.0;
  const int grid = 400;
  double best = lo, bv = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= grid; ++k) {
    double d = lo + (hi - lo) * k / grid;
    double v = chi2(d);
    if (v < bv) bv = v, best = d;
  }
  const double step = (hi - lo) / grid;
  auto r = boost::math::tools::brent_find_minima(chi2, std::max(lo, best - step),
                                                 std::min(hi, best + step), 52);
  XiCurveFit out;
  out.delta = r.first;
  out.chi2 = r.second;
  double info = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = lambdas[i] - out.delta;
    double jac = std::pow(u * u - 1.0, -1.5) * w(i);
    info += jac * jac;
  }
  double var = 1.0 / info;
  if (!weighted && n > 1) var *= out.chi2 / (n - 1);
  out.sigma_delta = std::sqrt(var);
  out.lambda_c2 = 2.0 / std::sqrt(3.0) + out.delta;
  out.sigma_lambda_c2 = out.sigma_delta;
  if (out.lambda_c2 < lmin || out.lambda_c2 > lmax)
    throw NotFoundError("xi curve crossing lies outside the sampled lambda range");
  return out;
}

}  // namespace zeno::est
