#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "zeno/estimation.hpp"

namespace zeno::est {

namespace {
struct Functor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  const Residuals* f;
  int n_in, n_out;
  int inputs() const { return n_in; }
  int values() const { return n_out; }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    r.resize(n_out);
    (*f)(x, r);
    return 0;
  }
};
}  // namespace

Eigen::MatrixXd numeric_jacobian(const Residuals& f, const Eigen::VectorXd& x, int m,
                                 double rel_step) {
  Eigen::VectorXd r0(m), r1(m);
  f(x, r0);
  Eigen::MatrixXd j(m, x.size());
  for (int k = 0; k < x.size(); ++k) {
    double h = rel_step * std::abs(x[k]);
    if (h == 0.0) h = rel_step;
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    f(xp, r1);
    Eigen::VectorXd rm(m);
    f(xm, rm);
    j.col(k) = (r1 - rm) / (2.0 * h);
  }
  return j;
}

LsqResult least_squares(const Residuals& f, const Eigen::VectorXd& x0, int m,
                        const LsqOptions& opt) {
  Functor fn{&f, static_cast<int>(x0.size()), m};
  Eigen::NumericalDiff<Functor> nd(fn, opt.fd_step * opt.fd_step);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Functor>> lm(nd);
  lm.parameters.xtol = opt.xtol;
  lm.parameters.ftol = 1e-14;
  lm.parameters.maxfev = opt.max_iter * (static_cast<int>(x0.size()) + 1);
  LsqResult res;
  res.x = x0;
  auto status = lm.minimize(res.x);
  using namespace Eigen::LevenbergMarquardtSpace;
  res.converged = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                  status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall;
  res.iterations = static_cast<int>(lm.iter);
  Eigen::VectorXd r(m);
  f(res.x, r);
  res.cost = r.squaredNorm();
  res.jac = numeric_jacobian(f, res.x, m, opt.fd_step);
  return res;
}

}  // namespace zeno::est
