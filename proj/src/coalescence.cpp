#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <random>

#include "zeno/errors.hpp"
#include "zeno/estimation.hpp"
#include "zeno/philox.hpp"

namespace zeno::est {

namespace {

struct Points {
  std::vector<double> lam;
  std::vector<cplx> d;
  std::vector<double> w;  // 1/sigma
};

struct Linear {
  double a = 0.0, b = 0.0, sse = 0.0;
};

// Principal-branch basis (lam - lc)^0.5 and (lam - lc)^1.5.
inline void basis(double lam, double lc, cplx& f1, cplx& f2) {
  const double d = lam - lc;
  f1 = d >= 0.0 ? cplx(std::sqrt(d), 0.0) : cplx(0.0, std::sqrt(-d));
  f2 = d * f1;
}

Linear solve_linear(const Points& p, double lc) {
  const int n = static_cast<int>(p.lam.size());
  Eigen::MatrixXd a(2 * n, 2);
  Eigen::VectorXd y(2 * n);
  for (int i = 0; i < n; ++i) {
    cplx f1, f2;
    basis(p.lam[i], lc, f1, f2);
    a(2 * i, 0) = p.w[i] * f1.real();
    a(2 * i, 1) = p.w[i] * f2.real();
    a(2 * i + 1, 0) = p.w[i] * f1.imag();
    a(2 * i + 1, 1) = p.w[i] * f2.imag();
    y[2 * i] = p.w[i] * p.d[i].real();
    y[2 * i + 1] = p.w[i] * p.d[i].imag();
  }
  Eigen::Vector2d c = a.colPivHouseholderQr().solve(y);
  return {c[0], c[1], (a * c - y).squaredNorm()};
}

double varpro(const Points& p, double lo, double hi) {
  const int grid = 200;
  double best = lo, bs = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    double x = lo + (hi - lo) * i / grid;
    double s = solve_linear(p, x).sse;
    if (s < bs) bs = s, best = x;
  }
  const double h = (hi - lo) / grid;
  auto r = boost::math::tools::brent_find_minima(
      [&](double x) { return solve_linear(p, x).sse; }, std::max(lo, best - h),
      std::min(hi, best + h), 52);
  return r.first;
}

struct Polished {
  double lc, a, b, cost;
};

Polished polish(const Points& p, double lc0, double lo, double hi) {
  auto lin = solve_linear(p, lc0);
  const int n = static_cast<int>(p.lam.size());
  Residuals f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    for (int i = 0; i < n; ++i) {
      cplx f1, f2;
      basis(p.lam[i], x[0], f1, f2);
      cplx m = x[1] * f1 + x[2] * f2;
      r[2 * i] = p.w[i] * (m.real() - p.d[i].real());
      r[2 * i + 1] = p.w[i] * (m.imag() - p.d[i].imag());
    }
  };
  Eigen::VectorXd x0(3);
  x0 << lc0, lin.a, lin.b;
  auto res = least_squares(f, x0, 2 * n);
  if (!(res.x[0] >= lo && res.x[0] <= hi) || res.cost > lin.sse) return {lc0, lin.a, lin.b, lin.sse};
  return {res.x[0], res.x[1], res.x[2], res.cost};
}

Polished fit_window(const Points& all, double lo, double hi, Points& used) {
  used = {};
  for (std::size_t i = 0; i < all.lam.size(); ++i)
    if (all.lam[i] >= lo - 1e-12 && all.lam[i] <= hi + 1e-12) {
      used.lam.push_back(all.lam[i]);
      used.d.push_back(all.d[i]);
      used.w.push_back(all.w[i]);
    }
  if (used.lam.size() < 4) throw FitError("fewer than four points in the coalescence window");
  bool any_im = false, any_re = false;
  for (auto z : used.d) (std::abs(z.imag()) > std::abs(z.real()) ? any_im : any_re) = true;
  if (!(any_im && any_re)) throw FitError("no change from imaginary to real splitting in window");
  const double a = used.lam.front(), b = used.lam.back();
  return polish(used, varpro(used, a, b), a, b);
}

}  // namespace

CoalescenceFit fit_coalescence(std::span<const double> lambdas, std::span<const cplx> delta,
                               std::span<const double> sigma, const CoalescenceOptions& opt) {
  if (lambdas.size() != delta.size()) throw DomainError("lambdas and delta_e12 differ in size");
  if (!sigma.empty() && sigma.size() != lambdas.size()) throw DomainError("sigma size mismatch");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1])) throw DomainError("lambdas must be increasing");
  Points all;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    all.lam.push_back(lambdas[i]);
    all.d.push_back(delta[i]);
    all.w.push_back(sigma.empty() || !(sigma[i] > 0) ? 1.0 : 1.0 / sigma[i]);
  }
  double center;
  if (opt.center) {
    center = *opt.center;
  } else {
    std::optional<double> c;
    for (std::size_t i = 1; i < all.lam.size(); ++i) {
      bool prev_im = std::abs(all.d[i - 1].imag()) > std::abs(all.d[i - 1].real());
      bool cur_re = std::abs(all.d[i].imag()) <= std::abs(all.d[i].real());
      if (prev_im && cur_re) {
        c = 0.5 * (all.lam[i - 1] + all.lam[i]);
        break;
      }
    }
    if (!c) throw FitError("splitting never changes from imaginary to real");
    center = *c;
  }

  CoalescenceFit out;
  Points used;
  out.window_lo = center - opt.half_window;
  out.window_hi = center + opt.half_window;
  auto best = fit_window(all, out.window_lo, out.window_hi, used);
  out.lambda_c = best.lc;
  out.a = best.a;
  out.b = best.b;
  out.residual_norm = std::sqrt(best.cost);

  // residual bootstrap on complex residuals
  const std::size_t n = used.lam.size();
  std::vector<cplx> model(n), resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    cplx f1, f2;
    basis(used.lam[i], best.lc, f1, f2);
    model[i] = best.a * f1 + best.b * f2;
    resid[i] = used.d[i] - model[i];
  }
  std::vector<double> lcs;
  Points boot = used;
  const double lo = used.lam.front(), hi = used.lam.back();
  for (int b = 0; b < opt.n_boot; ++b) {
    PhiloxEngine rng(opt.seed, static_cast<std::uint64_t>(b), 4);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) boot.d[i] = model[i] + resid[pick(rng)];
    lcs.push_back(varpro(boot, lo, hi));
  }
  if (lcs.size() > 1) {
    double m = 0.0, v = 0.0;
    for (double x : lcs) m += x;
    m /= lcs.size();
    for (double x : lcs) v += (x - m) * (x - m);
    out.sigma_lambda_c = std::sqrt(v / (lcs.size() - 1));
  }
  out.sigma_lambda_c = std::max(out.sigma_lambda_c, 1e-12);

  for (double f : {2.0 / 3.0, 4.0 / 3.0}) {
    double hw = f * opt.half_window;
    try {
      Points tmp;
      auto r = fit_window(all, center - hw, center + hw, tmp);
      out.window_sensitivity.emplace_back(hw, r.lc);
    } catch (const FitError&) {
    }
  }
  out.window_sensitivity.emplace_back(opt.half_window, out.lambda_c);
  return out;
}

}  // namespace zeno::est
