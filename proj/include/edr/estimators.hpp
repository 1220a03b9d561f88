#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edr/data.hpp"
#include "edr/el.hpp"
#include "edr/numerics.hpp"
#include "edr/nuisance.hpp"

namespace edr {

enum class Method { ALL, CCA, HT, RRZ, EDR, ELProfile };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::ALL: return "ALL";
    case Method::CCA: return "CCA";
    case Method::HT: return "HT";
    case Method::RRZ: return "RRZ";
    case Method::EDR: return "EDR";
    case Method::ELProfile: return "EL-profile";
  }
  return "?";
}

inline std::optional<Method> method_from_name(const std::string& name) {
  for (Method m : {Method::ALL, Method::CCA, Method::HT, Method::RRZ,
                   Method::EDR, Method::ELProfile}) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

enum class CcaDivisor { n_complete, n };

struct EstimatorConfig {
  CcaDivisor cca_divisor = CcaDivisor::n_complete;
  double outer_tol = 1e-8;
  int outer_max_iter = 100;
  bool force_two_step = false;  // exercise the r>p machinery even when r=p
  std::optional<VectorXd> beta0;
};

struct EstimateReport {
  Method method = Method::ALL;
  VectorXd beta_hat;
  VectorXd gamma_hat;
  VectorXd alpha_hat;
  VectorXd lambda_hat;
  std::optional<MatrixXd> covariance;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<Diagnostic> diagnostics;
};

// ---------------------------------------------------------------------------
// generic outer solver
// ---------------------------------------------------------------------------

inline RootResult solve_outer(const VectorFn& residual, const MatrixFn& jac,
                              const VectorXd& beta0, double tol = 1e-8,
                              int max_iter = 100) {
  return solve_root(residual, jac, beta0, tol, max_iter);
}

// Gauss-Newton stage for overidentified systems: minimizes ||res(x)|| with
// step halving; stops when the GN step stalls or the stationarity gradient
// J^T res is small.
inline RootResult gauss_newton(const VectorFn& res, const VectorXd& x0,
                               double tol = 1e-8, int max_iter = 100) {
  RootResult out;
  out.x = x0;
  VectorXd r = res(out.x);
  out.residual_norm = r.norm();
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const MatrixXd jac = fd_jacobian(res, out.x);
    const VectorXd grad = jac.transpose() * r;
    if (grad.norm() <= tol) {
      out.converged = true;
      return out;
    }
    VectorXd step = (jac.transpose() * jac)
                        .ldlt()
                        .solve(-grad);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      VectorXd rt;
      try {
        rt = res(out.x + scale * step);
      } catch (const SolverError&) {
        scale *= 0.5;
        continue;
      }
      if (rt.allFinite() && rt.norm() < out.residual_norm) {
        out.x += scale * step;
        r = rt;
        out.residual_norm = rt.norm();
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      out.converged = true;  // stalled at a stationary point
      return out;
    }
  }
  out.converged = false;
  return out;
}

// Guard for the optimally weighted stage of a two-step fit: the weighting
// collapses r moment conditions to p, and the collapsed system can acquire
// spurious far-away roots when the estimated weight is noisy. A root whose
// unweighted residual is far above the stage-1 minimum is one of those; keep
// the stage-1 minimizer instead.
inline RootResult guard_weighted_root(const VectorFn& res, const RootResult& stage1,
                                      RootResult root) {
  double unweighted = std::numeric_limits<double>::infinity();
  try {
    const VectorXd r = res(root.x);
    if (root.converged && r.allFinite()) unweighted = r.norm();
  } catch (const std::exception&) {
  }
  if (stage1.converged && unweighted > 3.0 * stage1.residual_norm + 1e-6) {
    RootResult out = stage1;
    out.iterations += root.iterations;
    return out;
  }
  return root;
}

// ---------------------------------------------------------------------------
// estimating-equation building blocks
// ---------------------------------------------------------------------------

// phi1 = delta * s / pi; zero for incomplete rows (s is never evaluated
// without y).
inline VectorXd phi1(const Observation& t, const VectorXd& beta, double pi,
                     const EstimatingFunction& ef) {
  if (t.delta == 0) return VectorXd::Zero(ef.r);
  return ef.eval(t.x, *t.y, beta) / pi;
}

// phi2 = delta*s/pi - (delta-pi)/pi * u
inline VectorXd phi2(const Observation& t, const VectorXd& beta, double pi,
                     const VectorXd& alpha, const EstimatingFunction& ef,
                     const RegressionModel& rm) {
  const VectorXd u = rm.u_eval(t.x, beta, alpha);
  VectorXd out = -((t.delta - pi) / pi) * u;
  if (t.delta == 1) out += ef.eval(t.x, *t.y, beta) / pi;
  return out;
}

// phi3 = delta*s / (pi*D) + u * (g^T lambda) / D  with D = 1 + lambda^T g
inline VectorXd phi3(const Observation& t, const VectorXd& beta,
                     const VectorXd& gamma, const VectorXd& alpha,
                     const VectorXd& lambda, const PropensityModel& pm,
                     const RegressionModel& rm, const EstimatingFunction& ef) {
  const double pi = pm.pi(t.x, gamma);
  const VectorXd g = build_g(t, beta, gamma, alpha, pm, rm);
  const double denom = 1.0 + lambda.dot(g);
  if (denom <= 0.0) throw SolverError("phi3 at nonpositive EL denominator");
  const VectorXd u = rm.u_eval(t.x, beta, alpha);
  VectorXd out = u * (g.dot(lambda) / denom);
  if (t.delta == 1) out += ef.eval(t.x, *t.y, beta) / (pi * denom);
  return out;
}

// U3 = g / (1 + lambda^T g)
inline VectorXd score_U3(const Observation& t, const VectorXd& beta,
                         const VectorXd& gamma, const VectorXd& alpha,
                         const VectorXd& lambda, const PropensityModel& pm,
                         const RegressionModel& rm) {
  const VectorXd g = build_g(t, beta, gamma, alpha, pm, rm);
  const double denom = 1.0 + lambda.dot(g);
  if (denom <= 0.0) throw SolverError("U3 at nonpositive EL denominator");
  return g / denom;
}

// ---------------------------------------------------------------------------
// nuisance bootstrap helpers
// ---------------------------------------------------------------------------

inline VectorXd ensure_gamma(const Dataset& ds, PropensityModel& pm) {
  if (pm.fixed_pi) return VectorXd(0);
  if (!pm.gamma) pm.gamma = fit_propensity(ds, pm).gamma_hat;
  return *pm.gamma;
}

inline VectorXd ensure_alpha(const Dataset& ds, RegressionModel& rm) {
  if (!rm.alpha) rm.alpha = fit_regression(ds, rm).alpha_hat;
  return *rm.alpha;
}

// ---------------------------------------------------------------------------
// benchmark estimators
// ---------------------------------------------------------------------------

// Full-data estimator: r=p root of the sample moments, r>p the one-sample
// profile-EL maximizer. Refuses incomplete datasets.
inline EstimateReport estimate_all(const Dataset& ds, const EstimatingFunction& ef,
                                   const EstimatorConfig& cfg = {}) {
  for (const auto& row : ds.rows) {
    if (row.delta != 1) {
      throw std::runtime_error("estimate_all requires fully observed data");
    }
  }
  EstimateReport report;
  report.method = Method::ALL;
  const double n = static_cast<double>(ds.size());
  const VectorXd beta0 = cfg.beta0 ? *cfg.beta0 : VectorXd::Zero(ef.p);

  if (ef.r == ef.p) {
    auto residual = [&](const VectorXd& beta) {
      VectorXd acc = VectorXd::Zero(ef.r);
      for (const auto& row : ds.rows) acc += ef.eval(row.x, *row.y, beta);
      return VectorXd(acc / n);
    };
    auto jac = [&](const VectorXd& beta) {
      MatrixXd acc = MatrixXd::Zero(ef.r, ef.p);
      for (const auto& row : ds.rows) acc += ef.jacobian(row.x, *row.y, beta);
      return MatrixXd(acc / n);
    };
    const RootResult root = solve_outer(residual, jac, beta0, cfg.outer_tol,
                                        cfg.outer_max_iter);
    report.beta_hat = root.x;
    report.residual_norm = root.residual_norm;
    report.iterations = root.iterations;
    report.converged = root.converged;
    if (!root.converged) throw std::runtime_error("estimate_all non-convergence");
    return report;
  }

  // overidentified: maximize the one-sample profile EL over beta
  auto neg_log_el = [&](const VectorXd& beta) {
    MatrixXd s_matrix(ds.size(), ef.r);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      s_matrix.row(i) = ef.eval(ds.rows[i].x, *ds.rows[i].y, beta).transpose();
    }
    ELState state;
    try {
      state = solve_lambda(s_matrix);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
    if (!state.converged) return std::numeric_limits<double>::infinity();
    return -state.log_el;
  };
  const MinimizeResult opt = nelder_mead(neg_log_el, beta0, 1e-10, 4000);
  report.beta_hat = opt.x;
  report.iterations = opt.iterations;
  report.converged = opt.converged && std::isfinite(opt.value);
  if (!report.converged) throw std::runtime_error("estimate_all non-convergence");
  return report;
}

// Complete-case analysis. The n-divisor option reproduces the mean-response
// convention beta_hat = n^-1 sum delta_i y_i by zeroing missing y.
inline EstimateReport estimate_cca(const Dataset& ds, const EstimatingFunction& ef,
                                   const EstimatorConfig& cfg = {}) {
  EstimateReport report;
  if (cfg.cca_divisor == CcaDivisor::n) {
    Dataset zeroed = ds;
    for (auto& row : zeroed.rows) {
      if (row.delta == 0) {
        row.y = VectorXd::Zero(ds.dim_y);
        row.delta = 1;
      }
    }
    report = estimate_all(zeroed, ef, cfg);
  } else {
    report = estimate_all(complete_cases(ds), ef, cfg);
  }
  report.method = Method::CCA;
  return report;
}

inline VectorXd default_start(const Dataset& ds, const EstimatingFunction& ef,
                              const EstimatorConfig& cfg) {
  if (cfg.beta0) return *cfg.beta0;
  EstimatorConfig cca_cfg = cfg;
  cca_cfg.beta0 = VectorXd::Zero(ef.p);
  return estimate_cca(ds, ef, cca_cfg).beta_hat;
}

// ---------------------------------------------------------------------------
// HT estimator
// ---------------------------------------------------------------------------

struct HtBlocks {
  MatrixXd V11, V12, A1, A2;
  MatrixXd weight() const {
    if (A2.size() == 0 && V11.size() == 0) return MatrixXd();
    return V12.transpose() * V11.inverse();
  }
};

inline HtBlocks ht_blocks(const Dataset& ds, const EstimatingFunction& ef,
                          const PropensityModel& pm, const VectorXd& beta) {
  const double n = static_cast<double>(ds.size());
  const int q = pm.fixed_pi ? 0 : pm.q;
  const VectorXd gamma = pm.fixed_pi ? VectorXd(0) : *pm.gamma;
  HtBlocks blocks;
  blocks.V12 = MatrixXd::Zero(ef.r, ef.p);
  blocks.A1 = MatrixXd::Zero(ef.r, q);
  blocks.A2 = MatrixXd::Zero(q, q);
  std::vector<VectorXd> phis(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.rows[i];
    const double pi = pm.pi(t.x, gamma);
    phis[i] = phi1(t, beta, pi, ef);
    if (t.delta == 1) {
      blocks.V12 += ef.jacobian(t.x, *t.y, beta) / pi;
      if (q > 0) {
        blocks.A1 += -(1.0 - pi) * phis[i] * pm.design(t.x).transpose();
      }
    }
    if (q > 0) blocks.A2 += jac_U1(t, gamma, pm);
  }
  blocks.V12 /= n;
  blocks.A1 /= n;
  blocks.A2 /= n;

  MatrixXd correction;
  if (q > 0) correction = blocks.A1 * blocks.A2.inverse();
  blocks.V11 = MatrixXd::Zero(ef.r, ef.r);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    VectorXd centered = phis[i];
    if (q > 0) centered -= correction * score_U1(ds.rows[i], gamma, pm);
    blocks.V11 += centered * centered.transpose();
  }
  blocks.V11 /= n;
  return blocks;
}

inline EstimateReport estimate_ht(const Dataset& ds, const EstimatingFunction& ef,
                                  PropensityModel pm,
                                  const EstimatorConfig& cfg = {}) {
  const VectorXd gamma = ensure_gamma(ds, pm);
  const double n = static_cast<double>(ds.size());
  VectorXd pis(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    pis[static_cast<Eigen::Index>(i)] = pm.pi(ds.rows[i].x, gamma);
  }
  auto residual = [&](const VectorXd& beta) {
    VectorXd acc = VectorXd::Zero(ef.r);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      acc += phi1(ds.rows[i], beta, pis[static_cast<Eigen::Index>(i)], ef);
    }
    return VectorXd(acc / n);
  };

  EstimateReport report;
  report.method = Method::HT;
  report.gamma_hat = gamma;
  const VectorXd beta0 = default_start(ds, ef, cfg);

  if (ef.r == ef.p && !cfg.force_two_step) {
    auto jac = [&](const VectorXd& beta) {
      MatrixXd acc = MatrixXd::Zero(ef.r, ef.p);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& t = ds.rows[i];
        if (t.delta == 1) {
          acc += ef.jacobian(t.x, *t.y, beta) / pis[static_cast<Eigen::Index>(i)];
        }
      }
      return MatrixXd(acc / n);
    };
    const RootResult root = solve_outer(residual, jac, beta0, cfg.outer_tol,
                                        cfg.outer_max_iter);
    report.beta_hat = root.x;
    report.residual_norm = root.residual_norm;
    report.iterations = root.iterations;
    report.converged = root.converged;
    if (!root.converged) throw std::runtime_error("estimate_ht non-convergence");
    return report;
  }

  // two-step: identity weighting first, then the optimal V1 rebuilt once
  const RootResult stage1 = gauss_newton(residual, beta0, cfg.outer_tol,
                                         cfg.outer_max_iter);
  MatrixXd weight = MatrixXd::Identity(ef.p, ef.r);
  if (ef.r > ef.p) {
    PropensityModel pm_fit = pm;
    pm_fit.gamma = gamma;
    weight = ht_blocks(ds, ef, pm_fit, stage1.x).weight();
  }
  auto weighted = [&](const VectorXd& beta) { return VectorXd(weight * residual(beta)); };
  const RootResult root = guard_weighted_root(
      residual, stage1,
      solve_outer(weighted, nullptr, stage1.x, cfg.outer_tol, cfg.outer_max_iter));
  report.beta_hat = root.x;
  report.residual_norm = root.residual_norm;
  report.iterations = stage1.iterations + root.iterations;
  report.converged = root.converged;
  if (!root.converged) throw std::runtime_error("estimate_ht non-convergence");
  return report;
}

// ---------------------------------------------------------------------------
// RRZ estimator
// ---------------------------------------------------------------------------

struct RrzBlocks {
  MatrixXd V21, V22, B1, B2;
  MatrixXd weight() const { return V22.transpose() * V21.inverse(); }
};

inline RrzBlocks rrz_blocks(const Dataset& ds, const EstimatingFunction& ef,
                            const PropensityModel& pm, const RegressionModel& rm,
                            const VectorXd& beta) {
  const double n = static_cast<double>(ds.size());
  const int q = pm.fixed_pi ? 0 : pm.q;
  const int adim = rm.alpha_dim;
  const VectorXd gamma = pm.fixed_pi ? VectorXd(0) : *pm.gamma;
  const VectorXd alpha = *rm.alpha;

  RrzBlocks blocks;
  blocks.V22 = MatrixXd::Zero(ef.r, ef.p);
  blocks.B1 = MatrixXd::Zero(ef.r, q + adim);
  blocks.B2 = MatrixXd::Zero(q + adim, q + adim);
  std::vector<VectorXd> phis(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.rows[i];
    const double pi = pm.pi(t.x, gamma);
    phis[i] = phi2(t, beta, pi, alpha, ef, rm);

    // d phi2 / d beta
    MatrixXd du_dbeta = fd_jacobian(
        [&](const VectorXd& b) { return rm.u_eval(t.x, b, alpha); }, beta);
    MatrixXd dphi = -((t.delta - pi) / pi) * du_dbeta;
    if (t.delta == 1) dphi += ef.jacobian(t.x, *t.y, beta) / pi;
    blocks.V22 += dphi;

    if (q > 0 && t.delta == 1) {
      const VectorXd s_minus_u =
          ef.eval(t.x, *t.y, beta) - rm.u_eval(t.x, beta, alpha);
      blocks.B1.leftCols(q) +=
          -(1.0 - pi) / pi * s_minus_u * pm.design(t.x).transpose();
    }
    if (adim > 0) {
      const MatrixXd du_dalpha = fd_jacobian(
          [&](const VectorXd& a) { return rm.u_eval(t.x, beta, a); }, alpha);
      blocks.B1.rightCols(adim) += -((t.delta - pi) / pi) * du_dalpha;
      blocks.B2.bottomRightCorner(adim, adim) += jac_U2(t, alpha, rm);
    }
    if (q > 0) blocks.B2.topLeftCorner(q, q) += jac_U1(t, gamma, pm);
  }
  blocks.V22 /= n;
  blocks.B1 /= n;
  blocks.B2 /= n;

  MatrixXd correction;
  if (q + adim > 0) correction = blocks.B1 * blocks.B2.inverse();
  blocks.V21 = MatrixXd::Zero(ef.r, ef.r);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    VectorXd centered = phis[i];
    if (q + adim > 0) {
      VectorXd u12(q + adim);
      u12.head(q) = score_U1(ds.rows[i], gamma, pm);
      u12.tail(adim) = score_U2(ds.rows[i], alpha, rm);
      centered -= correction * u12;
    }
    blocks.V21 += centered * centered.transpose();
  }
  blocks.V21 /= n;
  return blocks;
}

inline EstimateReport estimate_rrz(const Dataset& ds, const EstimatingFunction& ef,
                                   PropensityModel pm, RegressionModel rm,
                                   const EstimatorConfig& cfg = {}) {
  const VectorXd gamma = ensure_gamma(ds, pm);
  const VectorXd alpha = ensure_alpha(ds, rm);
  const double n = static_cast<double>(ds.size());
  VectorXd pis(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    pis[static_cast<Eigen::Index>(i)] = pm.pi(ds.rows[i].x, gamma);
  }
  auto residual = [&](const VectorXd& beta) {
    VectorXd acc = VectorXd::Zero(ef.r);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      acc += phi2(ds.rows[i], beta, pis[static_cast<Eigen::Index>(i)], alpha, ef, rm);
    }
    return VectorXd(acc / n);
  };

  EstimateReport report;
  report.method = Method::RRZ;
  report.gamma_hat = gamma;
  report.alpha_hat = alpha;
  const VectorXd beta0 = default_start(ds, ef, cfg);

  if (ef.r == ef.p && !cfg.force_two_step) {
    const RootResult root = solve_outer(residual, nullptr, beta0, cfg.outer_tol,
                                        cfg.outer_max_iter);
    report.beta_hat = root.x;
    report.residual_norm = root.residual_norm;
    report.iterations = root.iterations;
    report.converged = root.converged;
    if (!root.converged) throw std::runtime_error("estimate_rrz non-convergence");
    return report;
  }

  const RootResult stage1 = gauss_newton(residual, beta0, cfg.outer_tol,
                                         cfg.outer_max_iter);
  MatrixXd weight = MatrixXd::Identity(ef.p, ef.r);
  if (ef.r > ef.p) {
    PropensityModel pm_fit = pm;
    RegressionModel rm_fit = rm;
    pm_fit.gamma = gamma;
    rm_fit.alpha = alpha;
    weight = rrz_blocks(ds, ef, pm_fit, rm_fit, stage1.x).weight();
  }
  auto weighted = [&](const VectorXd& beta) { return VectorXd(weight * residual(beta)); };
  const RootResult root = guard_weighted_root(
      residual, stage1,
      solve_outer(weighted, nullptr, stage1.x, cfg.outer_tol, cfg.outer_max_iter));
  report.beta_hat = root.x;
  report.residual_norm = root.residual_norm;
  report.iterations = stage1.iterations + root.iterations;
  report.converged = root.converged;
  if (!root.converged) throw std::runtime_error("estimate_rrz non-convergence");
  return report;
}

// ---------------------------------------------------------------------------
// EDR estimator
// ---------------------------------------------------------------------------

struct EdrContext {
  const Dataset& ds;
  const EstimatingFunction& ef;
  const PropensityModel& pm;
  const RegressionModel& rm;
  VectorXd gamma;
  VectorXd alpha;
  // Indices of the EL constraint columns actually carried. Exactly redundant
  // columns (an augmentation block implied by the regression block, say) are
  // dropped once here so every downstream matrix stays invertible.
  std::vector<int> kept;

  int full_dim(const VectorXd& beta) const {
    return static_cast<int>(
        build_g(ds.rows.front(), beta, gamma, alpha, pm, rm).size());
  }

  void init_reduction(const VectorXd& beta) {
    const int m = full_dim(beta);
    MatrixXd full(ds.size(), m);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      full.row(i) = build_g(ds.rows[i], beta, gamma, alpha, pm, rm).transpose();
    }
    kept = independent_columns(full, reduction_rel_tol(full.rows()));
  }

  VectorXd g_r(const Observation& t, const VectorXd& beta,
               const VectorXd& gamma_v, const VectorXd& alpha_v) const {
    const VectorXd g = build_g(t, beta, gamma_v, alpha_v, pm, rm);
    if (kept.empty() || static_cast<Eigen::Index>(kept.size()) == g.size()) {
      return g;
    }
    VectorXd out(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
      out[static_cast<Eigen::Index>(j)] = g[kept[j]];
    }
    return out;
  }

  MatrixXd g_matrix(const VectorXd& beta) const {
    const Eigen::Index m = g_r(ds.rows.front(), beta, gamma, alpha).size();
    MatrixXd mat(ds.size(), m);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      mat.row(i) = g_r(ds.rows[i], beta, gamma, alpha).transpose();
    }
    return mat;
  }

  ELState inner_solve(const VectorXd& beta) const {
    const ELState state = solve_lambda(g_matrix(beta), 1e-9, 200, false);
    if (!state.converged) {
      throw SolverError("EL inner problem infeasible at trial beta");
    }
    return state;
  }

  VectorXd phi3_r(const Observation& t, const VectorXd& beta,
                  const VectorXd& gamma_v, const VectorXd& alpha_v,
                  const VectorXd& lambda) const {
    const VectorXd g = g_r(t, beta, gamma_v, alpha_v);
    const double denom = 1.0 + lambda.dot(g);
    if (denom <= 0.0) throw SolverError("phi3 at nonpositive EL denominator");
    const VectorXd u = rm.u_eval(t.x, beta, alpha_v);
    VectorXd out = u * (g.dot(lambda) / denom);
    if (t.delta == 1) {
      out += ef.eval(t.x, *t.y, beta) / (pm.pi(t.x, gamma_v) * denom);
    }
    return out;
  }

  VectorXd u3_r(const Observation& t, const VectorXd& beta,
                const VectorXd& gamma_v, const VectorXd& alpha_v,
                const VectorXd& lambda) const {
    const VectorXd g = g_r(t, beta, gamma_v, alpha_v);
    const double denom = 1.0 + lambda.dot(g);
    if (denom <= 0.0) throw SolverError("U3 at nonpositive EL denominator");
    return g / denom;
  }

  VectorXd residual(const VectorXd& beta, const ELState& state) const {
    VectorXd acc = VectorXd::Zero(ef.r);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      acc += phi3_r(ds.rows[i], beta, gamma, alpha, state.lambda);
    }
    return acc / static_cast<double>(ds.size());
  }

  VectorXd residual(const VectorXd& beta) const {
    return residual(beta, inner_solve(beta));
  }
};

struct EdrBlocks {
  MatrixXd V31, V32, C1, C2;
  MatrixXd weight() const { return V32.transpose() * V31.inverse(); }
};

// All the theta=(gamma,alpha,lambda) partials behind the EDR sandwich.
// The lambda blocks use closed forms; gamma/alpha blocks use per-observation
// central differences of the exact maps.
inline EdrBlocks edr_blocks(const EdrContext& ctx, const VectorXd& beta,
                            const VectorXd& lambda) {
  const Dataset& ds = ctx.ds;
  const EstimatingFunction& ef = ctx.ef;
  const PropensityModel& pm = ctx.pm;
  const RegressionModel& rm = ctx.rm;
  const double n = static_cast<double>(ds.size());
  const int q = pm.fixed_pi ? 0 : pm.q;
  const int adim = rm.alpha_dim;
  const int m = static_cast<int>(lambda.size());
  const int tdim = q + adim + m;
  const int udim = q + adim + m;  // U = (U1, U2, U3)

  EdrBlocks blocks;
  blocks.C1 = MatrixXd::Zero(ef.r, tdim);
  blocks.C2 = MatrixXd::Zero(udim, tdim);
  blocks.V32 = MatrixXd::Zero(ef.r, ef.p);
  MatrixXd dU_dbeta_sum = MatrixXd::Zero(udim, ef.p);

  std::vector<VectorXd> phis(ds.size());
  std::vector<VectorXd> scores(ds.size());
  std::vector<MatrixXd> dphi_dbeta(ds.size());
  std::vector<MatrixXd> dU_dbeta(ds.size());

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.rows[i];
    const VectorXd g = ctx.g_r(t, beta, ctx.gamma, ctx.alpha);
    const double denom = 1.0 + lambda.dot(g);
    const double pi = pm.pi(t.x, ctx.gamma);
    const VectorXd u = rm.u_eval(t.x, beta, ctx.alpha);

    phis[i] = ctx.phi3_r(t, beta, ctx.gamma, ctx.alpha, lambda);
    scores[i] = VectorXd(udim);
    scores[i].head(q) = score_U1(t, ctx.gamma, pm);
    scores[i].segment(q, adim) = score_U2(t, ctx.alpha, rm);
    scores[i].tail(m) = g / denom;

    // gamma / alpha blocks of C1 by finite differences
    if (q > 0) {
      blocks.C1.leftCols(q) += fd_jacobian(
          [&](const VectorXd& gm) {
            return ctx.phi3_r(t, beta, gm, ctx.alpha, lambda);
          },
          ctx.gamma);
      blocks.C2.topLeftCorner(q, q) += jac_U1(t, ctx.gamma, pm);
      blocks.C2.block(q + adim, 0, m, q) += fd_jacobian(
          [&](const VectorXd& gm) {
            return ctx.u3_r(t, beta, gm, ctx.alpha, lambda);
          },
          ctx.gamma);
    }
    if (adim > 0) {
      blocks.C1.middleCols(q, adim) += fd_jacobian(
          [&](const VectorXd& a) {
            return ctx.phi3_r(t, beta, ctx.gamma, a, lambda);
          },
          ctx.alpha);
      blocks.C2.block(q, q, adim, adim) += jac_U2(t, ctx.alpha, rm);
      blocks.C2.block(q + adim, q, m, adim) += fd_jacobian(
          [&](const VectorXd& a) {
            return ctx.u3_r(t, beta, ctx.gamma, a, lambda);
          },
          ctx.alpha);
    }
    // lambda blocks, closed form:
    //   d phi3/d lambda = (u - delta*s/pi) g^T / D^2
    //   d U3  /d lambda = -g g^T / D^2
    VectorXd front = u;
    if (t.delta == 1) front -= ef.eval(t.x, *t.y, beta) / pi;
    blocks.C1.rightCols(m) += front * g.transpose() / (denom * denom);
    blocks.C2.bottomRightCorner(m, m) += -g * g.transpose() / (denom * denom);

    dphi_dbeta[i] = fd_jacobian(
        [&](const VectorXd& b) {
          return ctx.phi3_r(t, b, ctx.gamma, ctx.alpha, lambda);
        },
        beta);
    dU_dbeta[i] = MatrixXd::Zero(udim, ef.p);
    dU_dbeta[i].bottomRows(m) = fd_jacobian(
        [&](const VectorXd& b) {
          return ctx.u3_r(t, b, ctx.gamma, ctx.alpha, lambda);
        },
        beta);
    dU_dbeta_sum += dU_dbeta[i];
  }
  blocks.C1 /= n;
  blocks.C2 /= n;

  const MatrixXd correction = blocks.C1 * blocks.C2.inverse();
  blocks.V31 = MatrixXd::Zero(ef.r, ef.r);
  blocks.V32 = MatrixXd::Zero(ef.r, ef.p);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const VectorXd centered = phis[i] - correction * scores[i];
    blocks.V31 += centered * centered.transpose();
    blocks.V32 += dphi_dbeta[i] - correction * dU_dbeta[i];
  }
  blocks.V31 /= n;
  blocks.V32 /= n;
  return blocks;
}

inline EstimateReport estimate_edr(const Dataset& ds, const EstimatingFunction& ef,
                                   PropensityModel pm, RegressionModel rm,
                                   const EstimatorConfig& cfg = {}) {
  EdrContext ctx{ds, ef, pm, rm, ensure_gamma(ds, pm), ensure_alpha(ds, rm)};

  EstimateReport report;
  report.method = Method::EDR;
  report.gamma_hat = ctx.gamma;
  report.alpha_hat = ctx.alpha;
  const VectorXd beta0 = default_start(ds, ef, cfg);
  ctx.init_reduction(beta0);
  if (static_cast<int>(ctx.kept.size()) < ctx.full_dim(beta0)) {
    report.diagnostics.push_back(
        {"redundant-constraints", -1,
         "dropped " +
             std::to_string(ctx.full_dim(beta0) -
                            static_cast<int>(ctx.kept.size())) +
             " implied EL constraint(s)"});
  }
  auto residual = [&](const VectorXd& beta) { return ctx.residual(beta); };

  RootResult root;
  if (ef.r == ef.p && !cfg.force_two_step) {
    root = solve_outer(residual, nullptr, beta0, cfg.outer_tol, cfg.outer_max_iter);
  } else {
    const RootResult stage1 = gauss_newton(residual, beta0, cfg.outer_tol,
                                           cfg.outer_max_iter);
    MatrixXd weight = MatrixXd::Identity(ef.p, ef.r);
    if (ef.r > ef.p) {
      try {
        const ELState st = ctx.inner_solve(stage1.x);
        const MatrixXd w = edr_blocks(ctx, stage1.x, st.lambda).weight();
        if (w.allFinite()) weight = w;
      } catch (const std::exception&) {
        // keep the identity weighting; stage 2 then just polishes stage 1
      }
    }
    auto weighted = [&](const VectorXd& beta) {
      return VectorXd(weight * ctx.residual(beta));
    };
    root = guard_weighted_root(
        residual, stage1,
        solve_outer(weighted, nullptr, stage1.x, cfg.outer_tol, cfg.outer_max_iter));
    root.iterations += stage1.iterations;
  }
  report.beta_hat = root.x;
  report.residual_norm = root.residual_norm;
  report.iterations = root.iterations;
  report.converged = root.converged;
  if (!root.converged) throw std::runtime_error("estimate_edr non-convergence");
  const ELState state = ctx.inner_solve(report.beta_hat);
  // inner_solve works on the kept columns; report lambda in full-constraint
  // coordinates (dropped columns are exact combinations of kept ones, so a
  // zero entry there leaves every EL denominator unchanged).
  if (!ctx.kept.empty() &&
      static_cast<int>(ctx.kept.size()) < ctx.full_dim(report.beta_hat)) {
    VectorXd full = VectorXd::Zero(ctx.full_dim(report.beta_hat));
    for (std::size_t j = 0; j < ctx.kept.size(); ++j) {
      full[ctx.kept[j]] = state.lambda[static_cast<Eigen::Index>(j)];
    }
    report.lambda_hat = full;
  } else {
    report.lambda_hat = state.lambda;
  }
  return report;
}

// Non-iterative mean-response fast path: s(z,beta)=y-beta with scalar y is
// implied, and the regression model must satisfy u(x,beta,alpha)=m(x,alpha)-beta
// so that the EL constraints do not depend on beta.
inline EstimateReport edr_mean_response(const Dataset& ds, PropensityModel pm,
                                        RegressionModel rm) {
  if (ds.dim_y != 1) {
    throw std::runtime_error("edr_mean_response requires scalar y");
  }
  const VectorXd gamma = ensure_gamma(ds, pm);
  const VectorXd alpha = ensure_alpha(ds, rm);
  const VectorXd beta_zero = VectorXd::Zero(1);
  auto mfun = [&](const VectorXd& x) { return rm.u_eval(x, beta_zero, alpha)[0]; };

  const std::size_t n = ds.size();
  const int q = pm.fixed_pi ? 0 : pm.q;
  MatrixXd g_matrix(n, 2 + q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = ds.rows[i];
    const double pi = pm.pi(t.x, gamma);
    const double w = (t.delta - pi) / pi;
    g_matrix(i, 0) = w * mfun(t.x);
    g_matrix(i, 1) = w;
    if (q > 0) g_matrix.row(i).tail(q) = score_U1(t, gamma, pm).transpose();
  }
  const ELState state =
      solve_lambda_reduced(g_matrix, 1e-9, 200, reduction_rel_tol(g_matrix.rows()));
  if (!state.converged) {
    throw std::runtime_error("edr_mean_response inner non-convergence");
  }

  double weighted_ht = 0.0;
  double correction = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = ds.rows[i];
    const double pi = pm.pi(t.x, gamma);
    const double p = state.weights[static_cast<Eigen::Index>(i)];
    if (t.delta == 1) weighted_ht += p * (*t.y)[0] / pi;
    correction += (static_cast<double>(n) * p - 1.0) * mfun(t.x);
  }
  correction /= static_cast<double>(n);

  EstimateReport report;
  report.method = Method::EDR;
  report.beta_hat = VectorXd::Constant(1, weighted_ht - correction);
  report.gamma_hat = gamma;
  report.alpha_hat = alpha;
  report.lambda_hat = state.lambda;
  report.converged = true;
  return report;
}

// ---------------------------------------------------------------------------
// experimental profile-EL estimator of (beta, gamma)
// ---------------------------------------------------------------------------

inline double profile_el_loglik(const Dataset& ds, const EstimatingFunction& ef,
                                const PropensityModel& pm, const RegressionModel& rm,
                                const VectorXd& beta, const VectorXd& gamma) {
  if (!rm.alpha) throw std::runtime_error("profile_el_loglik requires fitted alpha");
  const VectorXd& alpha = *rm.alpha;
  const int m_g = static_cast<int>(
      build_g(ds.rows.front(), beta, gamma, alpha, pm, rm).size());
  MatrixXd psi(ds.size(), ef.r + m_g);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.rows[i];
    const double pi = pm.pi(t.x, gamma);
    psi.row(i).head(ef.r) = phi1(t, beta, pi, ef).transpose();
    psi.row(i).tail(m_g) = build_g(t, beta, gamma, alpha, pm, rm).transpose();
  }
  ELState state;
  try {
    state = solve_lambda_reduced(psi, 1e-9, 200, reduction_rel_tol(psi.rows()));
  } catch (const std::exception&) {
    return -std::numeric_limits<double>::infinity();
  }
  if (!state.converged) return -std::numeric_limits<double>::infinity();
  return state.log_el;
}

inline EstimateReport estimate_el_profile(const Dataset& ds,
                                          const EstimatingFunction& ef,
                                          PropensityModel pm, RegressionModel rm,
                                          const EstimatorConfig& cfg = {}) {
  if (pm.fixed_pi) {
    throw std::runtime_error("estimate_el_profile requires a parametric propensity");
  }
  if (ef.p + pm.q > 8) {
    throw std::runtime_error("estimate_el_profile refused: p+q > 8");
  }
  const VectorXd gamma = ensure_gamma(ds, pm);
  ensure_alpha(ds, rm);
  const EstimateReport edr = estimate_edr(ds, ef, pm, rm, cfg);

  VectorXd start(ef.p + pm.q);
  start << edr.beta_hat, gamma;
  auto objective = [&](const VectorXd& v) {
    return -profile_el_loglik(ds, ef, pm, rm, v.head(ef.p), v.tail(pm.q));
  };
  const MinimizeResult opt = nelder_mead(objective, start, 1e-6, 4000, 0.05);

  EstimateReport report;
  report.method = Method::ELProfile;
  if (opt.value <= objective(start)) {
    report.beta_hat = opt.x.head(ef.p);
    report.gamma_hat = opt.x.tail(pm.q);
  } else {
    report.beta_hat = edr.beta_hat;
    report.gamma_hat = gamma;
  }
  report.alpha_hat = *rm.alpha;
  report.iterations = opt.iterations;
  report.converged = opt.converged && std::isfinite(opt.value);
  report.diagnostics.push_back({"experimental", -1, "profile-EL estimator"});
  if (!report.converged) {
    throw std::runtime_error("estimate_el_profile non-convergence");
  }
  return report;
}

}  // namespace edr
