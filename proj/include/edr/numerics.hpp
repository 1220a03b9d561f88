#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace edr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using VectorFn = std::function<VectorXd(const VectorXd&)>;
using MatrixFn = std::function<MatrixXd(const VectorXd&)>;
using ScalarFn = std::function<double(const VectorXd&)>;

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

inline double fd_step(double v) { return std::max(1e-6, 1e-6 * std::abs(v)); }

// Central-difference Jacobian of f at x; rows follow f's output.
inline MatrixXd fd_jacobian(const VectorFn& f, const VectorXd& x) {
  const VectorXd f0 = f(x);
  MatrixXd jac(f0.size(), x.size());
  VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x[j]);
    xp[j] = x[j] + h;
    const VectorXd fplus = f(xp);
    xp[j] = x[j] - h;
    const VectorXd fminus = f(xp);
    xp[j] = x[j];
    jac.col(j) = (fplus - fminus) / (2.0 * h);
  }
  return jac;
}

inline VectorXd fd_gradient(const ScalarFn& f, const VectorXd& x) {
  VectorXd grad(x.size());
  VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x[j]);
    xp[j] = x[j] + h;
    const double fplus = f(xp);
    xp[j] = x[j] - h;
    const double fminus = f(xp);
    xp[j] = x[j];
    grad[j] = (fplus - fminus) / (2.0 * h);
  }
  return grad;
}

struct RootResult {
  VectorXd x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // residual norms per iteration
};

// Damped Newton for residual(x)=0. If jac is empty the Jacobian comes from
// central differences of the residual. Falls back to a gradient step on
// 0.5*||r||^2 when the Jacobian solve is unusable at a trial point.
inline RootResult solve_root(const VectorFn& residual, const MatrixFn& jac_or_null,
                             const VectorXd& x0, double tol = 1e-8,
                             int max_iter = 100) {
  RootResult out;
  out.x = x0;
  VectorXd r = residual(out.x);
  out.residual_norm = r.norm();
  out.trace.push_back(out.residual_norm);
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    if (out.residual_norm <= tol) {
      out.converged = true;
      return out;
    }
    MatrixXd jac;
    if (jac_or_null) {
      jac = jac_or_null(out.x);
    } else {
      jac = fd_jacobian(residual, out.x);
    }
    VectorXd step;
    bool usable = jac.allFinite();
    if (usable) {
      Eigen::FullPivLU<MatrixXd> lu(jac);
      lu.setThreshold(1e-12);
      if (lu.isInvertible()) {
        step = lu.solve(-r);
      } else {
        usable = false;
      }
    }
    if (!usable) {
      // descent direction for 0.5*||r||^2
      step = -jac.transpose() * r;
      const double norm = step.norm();
      if (!(norm > 0.0) || !step.allFinite()) {
        break;  // flat residual, nothing to do
      }
      step *= std::max(1.0, out.residual_norm) / norm;
    }
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      const VectorXd trial = out.x + scale * step;
      VectorXd rt;
      bool ok = true;
      try {
        rt = residual(trial);
      } catch (const SolverError&) {
        ok = false;
      }
      if (ok && rt.allFinite() && rt.norm() < out.residual_norm) {
        out.x = trial;
        r = rt;
        out.residual_norm = rt.norm();
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    out.trace.push_back(out.residual_norm);
    if (!improved) break;
  }
  out.converged = out.residual_norm <= tol;
  return out;
}

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Nelder-Mead on f; tolerance is on the simplex spread of function values.
inline MinimizeResult nelder_mead(const ScalarFn& f, const VectorXd& x0,
                                  double tol = 1e-6, int max_iter = 2000,
                                  double initial_step = 0.1) {
  const Eigen::Index dim = x0.size();
  std::vector<VectorXd> pts(dim + 1, x0);
  std::vector<double> vals(dim + 1);
  for (Eigen::Index j = 0; j < dim; ++j) {
    pts[j + 1][j] += (x0[j] != 0.0) ? initial_step * std::abs(x0[j]) + initial_step
                                    : initial_step;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = f(pts[i]);

  auto order = [&] {
    for (std::size_t i = 1; i < pts.size(); ++i) {
      VectorXd p = pts[i];
      double v = vals[i];
      std::size_t j = i;
      while (j > 0 && vals[j - 1] > v) {
        pts[j] = pts[j - 1];
        vals[j] = vals[j - 1];
        --j;
      }
      pts[j] = p;
      vals[j] = v;
    }
  };

  MinimizeResult out;
  order();
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    if (std::abs(vals.back() - vals.front()) <= tol * (1.0 + std::abs(vals.front()))) {
      out.converged = true;
      break;
    }
    VectorXd centroid = VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < dim; ++i) centroid += pts[i];
    centroid /= static_cast<double>(dim);

    const VectorXd reflected = centroid + (centroid - pts.back());
    const double fr = f(reflected);
    if (fr < vals.front()) {
      const VectorXd expanded = centroid + 2.0 * (centroid - pts.back());
      const double fe = f(expanded);
      if (fe < fr) {
        pts.back() = expanded;
        vals.back() = fe;
      } else {
        pts.back() = reflected;
        vals.back() = fr;
      }
    } else if (fr < vals[dim - 1]) {
      pts.back() = reflected;
      vals.back() = fr;
    } else {
      const VectorXd contracted = centroid + 0.5 * (pts.back() - centroid);
      const double fc = f(contracted);
      if (fc < vals.back()) {
        pts.back() = contracted;
        vals.back() = fc;
      } else {
        for (std::size_t i = 1; i < pts.size(); ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          vals[i] = f(pts[i]);
        }
      }
    }
    order();
  }
  out.x = pts.front();
  out.value = vals.front();
  return out;
}

}  // namespace edr
