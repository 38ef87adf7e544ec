#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

#include "zeno/errors.hpp"
#include "zeno/estimation.hpp"
#include "zeno/liouvillian.hpp"
#include "zeno/philox.hpp"

namespace zeno::est {

namespace {

struct Prepared {
  std::vector<double> y;
  double dt;
};

Prepared decimate(std::span<const double> series, double sampling, std::size_t max_samples) {
  std::size_t stride = 1;
  if (max_samples > 0 && series.size() > max_samples)
    stride = (series.size() + max_samples - 1) / max_samples;
  Prepared p{{}, sampling * stride};
  for (std::size_t i = 0; i < series.size(); i += stride) p.y.push_back(series[i]);
  return p;
}

// Complex Vandermonde least squares for amplitudes; returns rms residual.
double fit_amplitudes(const std::vector<double>& y, double dt, const std::vector<cplx>& poles,
                      std::vector<cplx>& amps) {
  const int n = static_cast<int>(y.size()), m = static_cast<int>(poles.size());
  Eigen::MatrixXcd z(n, m);
  for (int k = 0; k < m; ++k) {
    cplx zk = std::exp(poles[k] * dt);
    cplx v = 1.0;
    for (int i = 0; i < n; ++i) {
      z(i, k) = v;
      v *= zk;
    }
  }
  Eigen::VectorXcd yy(n);
  for (int i = 0; i < n; ++i) yy[i] = y[i];
  Eigen::VectorXcd a = z.colPivHouseholderQr().solve(yy);
  amps.assign(a.data(), a.data() + m);
  return (z * a - yy).real().norm() / std::sqrt(static_cast<double>(n));
}

PoleSet pencil_core(const std::vector<double>& y, double dt, int order, const PencilOptions& opt) {
  const int n = static_cast<int>(y.size());
  if (order > 0 && n < 2 * order + 1) throw DomainError("series too short for the requested order");
  if (n < 3) throw DomainError("series too short");
  int L = std::max(1, static_cast<int>(std::floor(n * opt.pencil_fraction)));
  L = std::min(L, n - 2);
  const int rows = n - L;
  Eigen::MatrixXd hk(rows, L + 1);
  for (int k = 0; k < rows; ++k)
    for (int j = 0; j <= L; ++j) hk(k, j) = y[k + j];
  Eigen::BDCSVD<Eigen::MatrixXd> svd(hk, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  PoleSet ps;
  ps.singular_values.assign(sv.data(), sv.data() + sv.size());
  int rank = 0;
  const double smax = sv.size() ? sv[0] : 0.0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > opt.sv_threshold * smax && smax > 0) ++rank;
  int m = order > 0 ? order : std::min(rank, 6);
  if (order > 0 && rank < order) {
    ps.order_reduced = true;
    m = std::max(rank, 1);
  }
  m = std::max(1, std::min(m, L));
  Eigen::MatrixXd v = svd.matrixV().leftCols(m);
  Eigen::MatrixXd v1 = v.topRows(L), v2 = v.bottomRows(L);
  Eigen::MatrixXd phi = v1.completeOrthogonalDecomposition().solve(v2);
  Eigen::EigenSolver<Eigen::MatrixXd> es(phi, false);
  if (es.info() != Eigen::Success) throw NumericalError("matrix pencil eigen-solve failed");
  std::vector<cplx> poles;
  for (int k = 0; k < m; ++k) poles.push_back(std::log(es.eigenvalues()[k]) / dt);
  auto sorted = liouvillian::sort_eigenvalues(poles, 0.0);
  ps.poles = sorted.values;
  ps.model_order = m;
  ps.sampling = dt;
  ps.residual = fit_amplitudes(y, dt, ps.poles, ps.amplitudes);
  return ps;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  double pos = q * (v.size() - 1);
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  double f = pos - i;
  return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
}

}  // namespace

PoleSet matrix_pencil(std::span<const double> series, double sampling, int order,
                      const PencilOptions& opt) {
  if (order < 0 || order > 6) throw DomainError("order must lie in 0..6");
  auto p = decimate(series, sampling, opt.max_samples);
  return pencil_core(p.y, p.dt, order, opt);
}

PoleBands residual_bootstrap(std::span<const double> series, double sampling, int order,
                             int n_boot, std::uint64_t seed, const PencilOptions& opt) {
  if (n_boot < 1) throw DomainError("n_boot must be >= 1");
  auto prep = decimate(series, sampling, opt.max_samples);
  PoleBands out;
  out.fit = pencil_core(prep.y, prep.dt, order, opt);
  const int m = out.fit.model_order;
  const std::size_t n = prep.y.size();
  std::vector<double> model(n), resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    cplx s = 0.0;
    for (int k = 0; k < m; ++k) s += out.fit.amplitudes[k] * std::exp(out.fit.poles[k] * (prep.dt * i));
    model[i] = s.real();
    resid[i] = prep.y[i] - model[i];
  }
  std::vector<std::vector<double>> re(m), im(m);
  std::vector<double> yb(n);
  for (int b = 0; b < n_boot; ++b) {
    PhiloxEngine rng(seed, static_cast<std::uint64_t>(b), 3);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t i = 0; i < n; ++i) yb[i] = model[i] + resid[pick(rng)];
    PoleSet f;
    try {
      f = pencil_core(yb, prep.dt, m, opt);
    } catch (const NumericalError&) {
      continue;
    }
    if (f.order_reduced || static_cast<int>(f.poles.size()) != m) continue;
    for (int k = 0; k < m; ++k) {
      re[k].push_back(f.poles[k].real());
      im[k].push_back(f.poles[k].imag());
    }
    ++out.n_used;
  }
  for (int k = 0; k < m; ++k) {
    if (re[k].empty()) {
      out.median.push_back(out.fit.poles[k]);
      out.lo.push_back(out.fit.poles[k]);
      out.hi.push_back(out.fit.poles[k]);
      continue;
    }
    out.median.emplace_back(percentile(re[k], 0.5), percentile(im[k], 0.5));
    out.lo.emplace_back(percentile(re[k], 0.16), percentile(im[k], 0.16));
    out.hi.emplace_back(percentile(re[k], 0.84), percentile(im[k], 0.84));
  }
  return out;
}

}  // namespace zeno::est
