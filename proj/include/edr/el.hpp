#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "edr/data.hpp"
#include "edr/numerics.hpp"
#include "edr/nuisance.hpp"

namespace edr {

// Owen-style pseudo-logarithm: log(v) for v >= 1/n, the quadratic extension
// matching value and two derivatives at 1/n below. Keeps the inner objective
// globally concave and C^2.
struct LogStar {
  double value;
  double d1;
  double d2;
};

inline LogStar log_star(double v, std::size_t n) {
  const double cut = 1.0 / static_cast<double>(n);
  if (v >= cut) {
    return {std::log(v), 1.0 / v, -1.0 / (v * v)};
  }
  const double nn = static_cast<double>(n);
  const double d = v - cut;
  return {-std::log(nn) + nn * d - 0.5 * nn * nn * d * d,
          nn - nn * nn * d, -nn * nn};
}

// EL constraint vector g(t,beta,gamma,alpha) = (h^T, U1^T)^T with
// h = {delta - pi}/pi * xi(x,beta,alpha).
inline VectorXd build_g(const Observation& t, const VectorXd& beta,
                        const VectorXd& gamma, const VectorXd& alpha,
                        const PropensityModel& pm, const RegressionModel& rm) {
  const double pi = pm.pi(t.x, gamma);
  const VectorXd xi = rm.xi(t.x, beta, alpha);
  const VectorXd u1 = score_U1(t, gamma, pm);
  VectorXd g(xi.size() + u1.size());
  g.head(xi.size()) = ((t.delta - pi) / pi) * xi;
  g.tail(u1.size()) = u1;
  return g;
}

// Relative tolerance for dropping redundant EL constraint columns. The
// statistical scale 0.5/sqrt(n) also removes columns that are within Monte
// Carlo noise of being implied by the others: such near-redundant columns
// carry no usable calibration information but send the multiplier off along
// a near-null direction, poisoning every lambda-dependent quantity downstream.
// Dropping calibration constraints never affects consistency, only (here,
// negligibly) efficiency.
inline double reduction_rel_tol(Eigen::Index n) {
  return std::max(1e-8, 0.5 / std::sqrt(static_cast<double>(n)));
}

// Greedy (natural-order) maximal set of numerically independent columns via
// modified Gram-Schmidt. A column survives if its residual after projection
// on the kept ones exceeds rel_tol times its original norm.
inline std::vector<int> independent_columns(const MatrixXd& g,
                                            double rel_tol = 1e-8) {
  std::vector<int> kept;
  std::vector<VectorXd> basis;
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    VectorXd v = g.col(j);
    const double original = v.norm();
    for (const auto& b : basis) v -= b.dot(v) * b;
    if (original > 0.0 && v.norm() > rel_tol * original) {
      basis.push_back(v / v.norm());
      kept.push_back(static_cast<int>(j));
    }
  }
  return kept;
}

struct ELState {
  MatrixXd g_matrix;  // n x m, rows g_i^T
  VectorXd lambda;
  VectorXd weights;
  double log_el = 0.0;
  bool converged = false;
  double min_denominator = 0.0;
  int iterations = 0;
};

inline VectorXd el_weights(const VectorXd& lambda, const MatrixXd& g_matrix) {
  const auto n = g_matrix.rows();
  const VectorXd denom = VectorXd::Ones(n) + g_matrix * lambda;
  if ((denom.array() <= 0.0).any()) {
    throw std::runtime_error("nonpositive-denominator in EL weights");
  }
  return denom.cwiseInverse() / static_cast<double>(n);
}

// Damped Newton on the concave surrogate sum_i log_star(1 + lambda^T g_i)
// from lambda = 0; the solved weights satisfy sum_i p_i g_i = 0. The
// iteration runs in a QR-preconditioned coordinate system so that nearly
// collinear constraint columns do not stall the Hessian solves.
inline ELState solve_lambda(const MatrixXd& g_matrix, double tol = 1e-9,
                            int max_iter = 200, bool check_rank = true) {
  const auto n = g_matrix.rows();
  const auto m = g_matrix.cols();
  if (m > n) throw std::runtime_error("degenerate-constraints: m > n");
  if (!g_matrix.allFinite()) throw SolverError("non-finite EL constraints");
  if (check_rank) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(g_matrix);
    qr.setThreshold(1e-10);
    if (qr.rank() < m) {
      std::string cols;
      const auto perm = qr.colsPermutation().indices();
      for (Eigen::Index j = qr.rank(); j < m; ++j) {
        cols += (cols.empty() ? "" : ",") + std::to_string(perm[j]);
      }
      throw std::runtime_error("degenerate-constraints: g columns {" + cols +
                               "} rank-deficient");
    }
  }

  ELState state;
  state.g_matrix = g_matrix;
  state.lambda = VectorXd::Zero(m);

  // precondition: g = Q R, iterate on G = sqrt(n) g R^-1 (G'G = n I), then
  // map back lambda = sqrt(n) R^-1 lambda'
  Eigen::HouseholderQR<MatrixXd> pre(g_matrix);
  const MatrixXd r_factor =
      pre.matrixQR().topRows(m).template triangularView<Eigen::Upper>();
  const double root_n = std::sqrt(static_cast<double>(n));
  MatrixXd precond;  // G
  {
    MatrixXd rt = r_factor.transpose();
    precond = root_n * rt.template triangularView<Eigen::Lower>()
                           .solve(g_matrix.transpose())
                           .transpose();
  }
  if (!precond.allFinite()) {
    throw SolverError("EL preconditioner breakdown");
  }

  VectorXd lam = VectorXd::Zero(m);  // preconditioned coordinates
  auto objective = [&](const VectorXd& l) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += log_star(1.0 + precond.row(i).dot(l), n).value;
    }
    return total;
  };

  double obj = objective(lam);
  for (state.iterations = 0; state.iterations < max_iter; ++state.iterations) {
    VectorXd grad = VectorXd::Zero(m);
    MatrixXd hess = MatrixXd::Zero(m, m);
    VectorXd grad_orig = VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const VectorXd gi = precond.row(i).transpose();
      const LogStar ls = log_star(1.0 + gi.dot(lam), n);
      grad += ls.d1 * gi;
      hess += ls.d2 * gi * gi.transpose();
      grad_orig += ls.d1 * g_matrix.row(i).transpose();
    }
    // convergence measured on the original-scale mean constraint residual
    if (grad_orig.norm() / static_cast<double>(n) <= tol) {
      state.converged = true;
      break;
    }
    VectorXd step = (-hess).ldlt().solve(grad);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 50; ++halving) {
      const double trial = objective(lam + scale * step);
      if (trial > obj) {
        lam += scale * step;
        obj = trial;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      // near the optimum the objective can be flat to rounding while the
      // gradient is still above tol; a full Newton step then finishes the job
      const double trial = objective(lam + step);
      if (step.norm() < 1e-3 && trial >= obj - 1e-10 * (1.0 + std::abs(obj))) {
        lam += step;
        obj = std::max(obj, trial);
        improved = true;
      }
    }
    if (!improved) break;
  }
  state.lambda =
      root_n *
      r_factor.template triangularView<Eigen::Upper>().solve(lam);

  const VectorXd denom = VectorXd::Ones(n) + g_matrix * state.lambda;
  state.min_denominator = denom.minCoeff();
  // interior feasibility: every weight must stay below 1
  if (state.min_denominator <= 1.0 / static_cast<double>(n) - 1e-12) {
    state.converged = false;
  }
  // A vanishing gradient at a runaway lambda (zero outside the convex hull of
  // the g_i) is not a solution; there the weights no longer sum to one.
  if (state.converged) {
    const double wsum = denom.cwiseInverse().sum() / static_cast<double>(n);
    if (std::abs(wsum - 1.0) > 1e-6) state.converged = false;
  }
  if (state.converged) {
    state.weights = el_weights(state.lambda, g_matrix);
    state.log_el = denom.array().log().sum() * -1.0 -
                   static_cast<double>(n) * std::log(static_cast<double>(n));
  } else {
    state.weights = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    state.log_el = -std::numeric_limits<double>::infinity();
  }
  return state;
}

// Variant that copes with exactly redundant constraint columns (e.g. an
// augmentation block implied by the regression block): the solve runs on a
// maximal independent subset and zeros are scattered into the dropped lambda
// coordinates, which leaves every 1 + lambda^T g_i unchanged.
inline ELState solve_lambda_reduced(const MatrixXd& g_matrix, double tol = 1e-9,
                                    int max_iter = 200, double rel_tol = 1e-8) {
  const std::vector<int> kept = independent_columns(g_matrix, rel_tol);
  if (static_cast<Eigen::Index>(kept.size()) == g_matrix.cols()) {
    return solve_lambda(g_matrix, tol, max_iter);
  }
  MatrixXd reduced(g_matrix.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    reduced.col(static_cast<Eigen::Index>(j)) = g_matrix.col(kept[j]);
  }
  ELState state = solve_lambda(reduced, tol, max_iter, false);
  VectorXd full = VectorXd::Zero(g_matrix.cols());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    full[kept[j]] = state.lambda[static_cast<Eigen::Index>(j)];
  }
  state.lambda = full;
  state.g_matrix = g_matrix;
  return state;
}

}  // namespace edr
