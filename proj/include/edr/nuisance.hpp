#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "edr/data.hpp"
#include "edr/numerics.hpp"

namespace edr {

constexpr double kPiClamp = 1e-12;
constexpr double kPropensityFloor = 0.01;  // C3 diagnostic threshold

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Working model for the probability that y is observed given x. The link is
// logistic; a fixed_pi override bypasses the parametric model entirely (used
// for known-propensity scenarios, in which case q=0 and there is no gamma).
struct PropensityModel {
  std::function<VectorXd(const VectorXd&)> design;
  int q = 0;
  std::optional<VectorXd> gamma;
  std::function<double(const VectorXd&)> fixed_pi;

  double pi(const VectorXd& x, const VectorXd& g) const {
    double value = fixed_pi ? fixed_pi(x) : logistic(g.dot(design(x)));
    return std::clamp(value, kPiClamp, 1.0 - kPiClamp);
  }
  double pi(const VectorXd& x) const {
    static const VectorXd empty;
    if (fixed_pi) return pi(x, empty);
    if (!gamma) throw std::runtime_error("propensity-not-fitted");
    return pi(x, *gamma);
  }
};

enum class FitKind { least_squares, conditional_mle };

// Working model u(x,beta,alpha) for E{s(z,beta)|x}, plus the augmentation
// block a(x,beta,alpha) (constant 1 unless overridden). Least-squares fitting
// uses ls_basis: y is regressed on a per-row basis matrix B(x) so that the
// working conditional mean of y is B(x)*alpha.
struct RegressionModel {
  std::function<VectorXd(const VectorXd& x, const VectorXd& beta, const VectorXd& alpha)> u_eval;
  std::function<VectorXd(const VectorXd& x, const VectorXd& beta, const VectorXd& alpha)> a_eval;
  int alpha_dim = 0;
  std::optional<VectorXd> alpha;
  FitKind fit_kind = FitKind::least_squares;
  std::function<MatrixXd(const VectorXd& x)> ls_basis;  // dim_y x alpha_dim
  std::function<double(const VectorXd& y, const VectorXd& x, const VectorXd& alpha)> log_density;

  VectorXd a_or_one(const VectorXd& x, const VectorXd& beta, const VectorXd& alpha_v) const {
    if (a_eval) return a_eval(x, beta, alpha_v);
    return VectorXd::Ones(1);
  }

  int a_dim(const VectorXd& x, const VectorXd& beta, const VectorXd& alpha_v) const {
    return static_cast<int>(a_or_one(x, beta, alpha_v).size());
  }

  // xi = (u^T, a^T)^T
  VectorXd xi(const VectorXd& x, const VectorXd& beta, const VectorXd& alpha_v) const {
    const VectorXd u = u_eval(x, beta, alpha_v);
    const VectorXd a = a_or_one(x, beta, alpha_v);
    VectorXd out(u.size() + a.size());
    out << u, a;
    return out;
  }
};

struct PropensityFit {
  VectorXd gamma_hat;
  int iterations = 0;
  bool converged = false;
  double score_norm = 0.0;
};

struct RegressionFit {
  VectorXd alpha_hat;
  double residual_stat = 0.0;
  bool converged = false;
};

// Logistic score U1 = {delta - pi} d(x); its gamma-Jacobian is
// -pi(1-pi) d(x) d(x)^T.
inline VectorXd score_U1(const Observation& t, const VectorXd& gamma,
                         const PropensityModel& pm) {
  if (pm.fixed_pi || pm.q == 0) return VectorXd(0);
  const VectorXd d = pm.design(t.x);
  const double pi = pm.pi(t.x, gamma);
  return (t.delta - pi) * d;
}

inline MatrixXd jac_U1(const Observation& t, const VectorXd& gamma,
                       const PropensityModel& pm) {
  if (pm.fixed_pi || pm.q == 0) return MatrixXd(0, 0);
  const VectorXd d = pm.design(t.x);
  const double pi = pm.pi(t.x, gamma);
  return -pi * (1.0 - pi) * d * d.transpose();
}

// Complete-case score U2 for alpha; zero when delta=0.
inline VectorXd score_U2(const Observation& t, const VectorXd& alpha,
                         const RegressionModel& rm) {
  if (rm.alpha_dim == 0) return VectorXd(0);
  if (t.delta == 0) return VectorXd::Zero(rm.alpha_dim);
  if (rm.fit_kind == FitKind::least_squares) {
    const MatrixXd basis = rm.ls_basis(t.x);
    return basis.transpose() * (*t.y - basis * alpha);
  }
  return fd_gradient(
      [&](const VectorXd& a) { return rm.log_density(*t.y, t.x, a); }, alpha);
}

inline MatrixXd jac_U2(const Observation& t, const VectorXd& alpha,
                       const RegressionModel& rm) {
  if (rm.alpha_dim == 0) return MatrixXd(0, 0);
  if (t.delta == 0) return MatrixXd::Zero(rm.alpha_dim, rm.alpha_dim);
  if (rm.fit_kind == FitKind::least_squares) {
    const MatrixXd basis = rm.ls_basis(t.x);
    return -basis.transpose() * basis;
  }
  return fd_jacobian([&](const VectorXd& a) { return score_U2(t, a, rm); }, alpha);
}

// Binomial MLE for gamma by Newton-Raphson with step halving, started at 0.
inline PropensityFit fit_propensity(const Dataset& ds, const PropensityModel& pm,
                                    double tol = 1e-8, int max_iter = 100) {
  const std::size_t n = ds.size();
  const std::size_t ones = ds.n_complete();
  if (ones == 0 || ones == n) {
    throw std::runtime_error("no-variation: delta is constant, propensity MLE undefined");
  }
  std::vector<VectorXd> designs(n);
  for (std::size_t i = 0; i < n; ++i) designs[i] = pm.design(ds.rows[i].x);

  VectorXd sd = VectorXd::Ones(pm.q);
  {
    VectorXd mean = VectorXd::Zero(pm.q);
    for (const auto& d : designs) mean += d;
    mean /= static_cast<double>(n);
    VectorXd ss = VectorXd::Zero(pm.q);
    for (const auto& d : designs) ss += (d - mean).cwiseAbs2();
    sd = (ss / static_cast<double>(n)).cwiseSqrt().cwiseMax(1e-3);
  }

  auto loglik = [&](const VectorXd& g) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double eta = g.dot(designs[i]);
      ll += ds.rows[i].delta * eta - std::log1p(std::exp(eta));
    }
    return ll;
  };

  PropensityFit fit;
  fit.gamma_hat = VectorXd::Zero(pm.q);
  double ll = loglik(fit.gamma_hat);
  for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
    VectorXd score = VectorXd::Zero(pm.q);
    MatrixXd info = MatrixXd::Zero(pm.q, pm.q);
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = logistic(fit.gamma_hat.dot(designs[i]));
      score += (ds.rows[i].delta - pi) * designs[i];
      info += pi * (1.0 - pi) * designs[i] * designs[i].transpose();
    }
    fit.score_norm = score.norm() / static_cast<double>(n);
    if (fit.score_norm <= tol) {
      fit.converged = true;
      break;
    }
    VectorXd step = info.ldlt().solve(score);
    double scale = 1.0;
    for (int halving = 0; halving < 40; ++halving) {
      const VectorXd trial = fit.gamma_hat + scale * step;
      const double ll_trial = loglik(trial);
      if (ll_trial > ll) {
        fit.gamma_hat = trial;
        ll = ll_trial;
        break;
      }
      scale *= 0.5;
    }
    for (int j = 0; j < pm.q; ++j) {
      if (std::abs(fit.gamma_hat[j]) * sd[j] > 30.0) {
        throw std::runtime_error("separation-detected: diverging propensity coefficients");
      }
    }
  }
  if (!fit.converged) {
    // recheck after the final step
    VectorXd score = VectorXd::Zero(pm.q);
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = logistic(fit.gamma_hat.dot(designs[i]));
      score += (ds.rows[i].delta - pi) * designs[i];
    }
    fit.score_norm = score.norm() / static_cast<double>(n);
    fit.converged = fit.score_norm <= tol;
  }
  return fit;
}

inline VectorXd propensity_scores(const PropensityModel& pm, const VectorXd& gamma,
                                  const Dataset& ds,
                                  std::vector<Diagnostic>* diagnostics = nullptr) {
  VectorXd scores(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    scores[static_cast<Eigen::Index>(i)] = pm.pi(ds.rows[i].x, gamma);
    if (diagnostics && scores[static_cast<Eigen::Index>(i)] < kPropensityFloor) {
      diagnostics->push_back({"propensity-below-floor", static_cast<int>(i),
                              "fitted propensity < 0.01"});
    }
  }
  return scores;
}

// Complete-case fit of alpha: exact normal equations for the least-squares
// kind, Newton on the conditional score otherwise.
inline RegressionFit fit_regression(const Dataset& ds, const RegressionModel& rm,
                                    double tol = 1e-8, int max_iter = 100) {
  RegressionFit fit;
  if (rm.alpha_dim == 0) {
    fit.alpha_hat = VectorXd(0);
    fit.converged = true;
    return fit;
  }
  if (static_cast<int>(ds.n_complete()) < rm.alpha_dim) {
    throw std::runtime_error("too-few-complete-cases for regression fit");
  }
  if (rm.fit_kind == FitKind::least_squares) {
    MatrixXd xtx = MatrixXd::Zero(rm.alpha_dim, rm.alpha_dim);
    VectorXd xty = VectorXd::Zero(rm.alpha_dim);
    for (const auto& row : ds.rows) {
      if (row.delta != 1) continue;
      const MatrixXd basis = rm.ls_basis(row.x);
      xtx += basis.transpose() * basis;
      xty += basis.transpose() * *row.y;
    }
    Eigen::FullPivLU<MatrixXd> lu(xtx);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) {
      throw std::runtime_error("rank-deficient regression design");
    }
    fit.alpha_hat = lu.solve(xty);
    for (const auto& row : ds.rows) {
      if (row.delta != 1) continue;
      fit.residual_stat += (*row.y - rm.ls_basis(row.x) * fit.alpha_hat).squaredNorm();
    }
    fit.converged = true;
    return fit;
  }

  auto total_score = [&](const VectorXd& a) {
    VectorXd s = VectorXd::Zero(rm.alpha_dim);
    for (const auto& row : ds.rows) s += score_U2(row, a, rm);
    return s;
  };
  VectorXd alpha = VectorXd::Zero(rm.alpha_dim);
  const double n = static_cast<double>(ds.size());
  for (int iter = 0; iter < max_iter; ++iter) {
    const VectorXd s = total_score(alpha);
    if (s.norm() / n <= tol) {
      fit.converged = true;
      break;
    }
    const MatrixXd jac = fd_jacobian(total_score, alpha);
    VectorXd step = jac.fullPivLu().solve(-s);
    double scale = 1.0;
    const double base = s.norm();
    for (int halving = 0; halving < 40; ++halving) {
      if (total_score(alpha + scale * step).norm() < base) break;
      scale *= 0.5;
    }
    alpha += scale * step;
  }
  fit.alpha_hat = alpha;
  fit.residual_stat = total_score(alpha).norm() / n;
  if (!fit.converged) {
    throw std::runtime_error("regression-fit-nonconvergence");
  }
  return fit;
}

}  // namespace edr
