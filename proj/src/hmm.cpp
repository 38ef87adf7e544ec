#include <algorithm>
#include <cmath>
#include <sstream>

#include "zeno/errors.hpp"
#include "zeno/estimation.hpp"
#include "zeno/philox.hpp"

namespace zeno::est {

namespace {

constexpr double kMaxFlip = 0.5;

// Probabilities of the two exits of a pair of states coupled by rates (up, down).
void pair_probs(double up, double down, double dt, double& p_up, double& p_down) {
  const double g = up + down;
  if (g <= 0.0) {
    p_up = p_down = 0.0;
    return;
  }
  const double f = -std::expm1(-g * dt) / g;
  p_up = up * f;
  p_down = down * f;
}

void pair_rates(double p_up, double p_down, double dt, double& up, double& down) {
  const double s = p_up + p_down;
  if (s <= 0.0) {
    up = down = 0.0;
    return;
  }
  const double g = -std::log1p(-s) / dt;
  up = p_up * g / s;
  down = p_down * g / s;
}

}  // namespace

Eigen::Matrix3d HmmParams::transition() const {
  double p0b, pb0, p01, p10;
  pair_probs(gamma_b_up, gamma_b_down, dt, p0b, pb0);
  pair_probs(gamma_1_up, gamma_1_down, dt, p01, p10);
  Eigen::Matrix3d t;
  t << 1.0 - p0b - p01, p0b, p01,  //
      pb0, 1.0 - pb0, 0.0,         //
      p10, 0.0, 1.0 - p10;
  return t;
}

Eigen::Matrix<double, 3, 2> HmmParams::emission() const {
  Eigen::Matrix<double, 3, 2> e;
  e << 1.0 - p_fp, p_fp,  //
      p_fn, 1.0 - p_fn,   //
      1.0 - p_fp, p_fp;
  return e;
}

HmmParams HmmParams::from_probabilities(double p0b, double pb0, double p01, double p10, double pfp,
                                        double pfn, double dt) {
  HmmParams h;
  h.dt = dt;
  h.p_fp = pfp;
  h.p_fn = pfn;
  pair_rates(p0b, pb0, dt, h.gamma_b_up, h.gamma_b_down);
  pair_rates(p01, p10, dt, h.gamma_1_up, h.gamma_1_down);
  return h;
}

HmmResult hmm_baum_welch(const std::vector<Sequence>& records, const HmmParams& init, int max_iter,
                         double tol) {
  if (!(init.dt > 0.0)) throw DomainError("hmm dt must be > 0");
  std::size_t total = 0;
  for (auto& r : records) total += r.size();
  if (total == 0) throw DomainError("empty click record");

  Eigen::Matrix3d A = init.transition();
  Eigen::Matrix<double, 3, 2> B = init.emission();
  Eigen::Vector3d pi(1.0, 0.0, 0.0);
  HmmResult res;

  std::vector<Eigen::Vector3d> alpha, beta;
  std::vector<double> scale;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::Matrix3d n_trans = Eigen::Matrix3d::Zero();
    Eigen::Matrix<double, 3, 2> n_emit = Eigen::Matrix<double, 3, 2>::Zero();
    Eigen::Vector3d n_first = Eigen::Vector3d::Zero();
    double ll = 0.0;
    for (const auto& obs : records) {
      const std::size_t T = obs.size();
      if (T == 0) continue;
      alpha.resize(T);
      beta.resize(T);
      scale.resize(T);
      auto o = [&](std::size_t t) { return static_cast<int>(obs[t]); };
      Eigen::Vector3d a = pi.cwiseProduct(B.col(o(0)));
      scale[0] = a.sum();
      alpha[0] = a / scale[0];
      for (std::size_t t = 1; t < T; ++t) {
        a = (A.transpose() * alpha[t - 1]).cwiseProduct(B.col(o(t)));
        scale[t] = a.sum();
        if (!(scale[t] > 0.0)) throw NumericalError("observation has zero probability under model");
        alpha[t] = a / scale[t];
      }
      beta[T - 1].setOnes();
      for (std::size_t t = T - 1; t-- > 0;)
        beta[t] = A * (B.col(o(t + 1)).cwiseProduct(beta[t + 1])) / scale[t + 1];
      for (std::size_t t = 0; t < T; ++t) {
        ll += std::log(scale[t]);
        Eigen::Vector3d g = alpha[t].cwiseProduct(beta[t]);
        n_emit.col(o(t)) += g;
        if (t == 0) n_first += g;
        if (t + 1 < T) {
          Eigen::Vector3d right = B.col(o(t + 1)).cwiseProduct(beta[t + 1]) / scale[t + 1];
          n_trans += (alpha[t] * right.transpose()).cwiseProduct(A);
        }
      }
    }
    if (!res.loglik.empty()) {
      const double prev = res.loglik.back();
      if (ll < prev - 1e-9 * std::max(1.0, std::abs(prev))) {
        std::ostringstream os;
        os.precision(17);
        os << "log-likelihood decreased from " << prev << " to " << ll << " at iteration " << it;
        throw ImplementationFault(os.str());
      }
    }
    res.loglik.push_back(ll);
    res.iterations = it;
    if (res.loglik.size() > 1 &&
        std::abs(ll - res.loglik[res.loglik.size() - 2]) < tol * std::max(1.0, std::abs(ll))) {
      res.converged = true;
      break;
    }
    // M-step with structural zeros and tied emission rows
    for (int i = 0; i < 3; ++i) {
      double row = n_trans.row(i).sum();
      if (row > 0.0) A.row(i) = n_trans.row(i) / row;
    }
    const double q_click = n_emit(0, 1) + n_emit(2, 1), q_all = n_emit.row(0).sum() + n_emit.row(2).sum();
    // error rates above 1/2 would swap the meaning of the outcomes
    const double pfp = q_all > 0.0 ? std::min(q_click / q_all, kMaxFlip) : 0.0;
    const double b_all = n_emit.row(1).sum();
    const double pfn = b_all > 0.0 ? std::min(n_emit(1, 0) / b_all, kMaxFlip) : 0.0;
    B << 1.0 - pfp, pfp, pfn, 1.0 - pfn, 1.0 - pfp, pfp;
    pi = n_first / n_first.sum();
  }
  res.params = HmmParams::from_probabilities(A(0, 1), A(1, 0), A(0, 2), A(2, 0), B(0, 1), B(1, 0),
                                             init.dt);
  return res;
}

Sequence hmm_sample(const HmmParams& p, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  Eigen::Matrix3d A = p.transition();
  Eigen::Matrix<double, 3, 2> B = p.emission();
  PhiloxEngine rng(seed, stream, 5);
  Sequence out;
  out.reserve(n);
  int s = 0;
  for (std::size_t t = 0; t < n; ++t) {
    out.push_back(rng.uniform() < B(s, 1) ? sim::Outcome::Click : sim::Outcome::NoClick);
    double u = rng.uniform(), c = 0.0;
    int next = 2;
    for (int j = 0; j < 3; ++j) {
      c += A(s, j);
      if (u < c) {
        next = j;
        break;
      }
    }
    s = next;
  }
  return out;
}

CalibrationTable empirical_click_calibration(const std::vector<RecordSet>& sets,
                                             const HmmParams& init, double omega_s) {
  if (sets.empty()) throw DomainError("no record sets");
  CalibrationTable tab;
  double num = 0.0, den = 0.0;
  for (const auto& s : sets) {
    auto r = hmm_baum_welch(s.records, init);
    CalibrationRow row;
    row.label = s.label;
    row.fit = r.params;
    row.alpha = r.params.gamma_b_up;
    row.tau_b = r.params.gamma_b_down > 0.0 ? 1.0 / r.params.gamma_b_down : 0.0;
    row.lambda = row.alpha / (2.0 * omega_s);
    row.converged = r.converged;
    num += row.alpha * s.label * s.label;
    den += std::pow(s.label, 4);
    tab.rows.push_back(row);
  }
  tab.quad_coeff = den > 0.0 ? num / den : 0.0;
  double ss = 0.0, mean = 0.0;
  for (auto& r : tab.rows) {
    double d = r.alpha - tab.quad_coeff * r.label * r.label;
    ss += d * d;
    mean += r.alpha;
  }
  mean /= tab.rows.size();
  tab.quad_rel_residual = mean > 0.0 ? std::sqrt(ss / tab.rows.size()) / mean : 0.0;
  return tab;
}

}  // namespace zeno::est
