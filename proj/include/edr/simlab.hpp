#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "edr/data.hpp"
#include "edr/estimators.hpp"
#include "edr/inference.hpp"
#include "edr/nuisance.hpp"
#include "edr/rng.hpp"

namespace edr {

// ---------------------------------------------------------------------------
// benchmark designs
// ---------------------------------------------------------------------------

struct SimDesign {
  int model = 1;
  int k = 1;  // response exponent; models 1-2 only
  VectorXd tau;
  int n = 200;
  int reps = 1000;
  std::uint64_t seed = 20260825;
  int jobs = 1;
  std::vector<Method> estimators = {Method::ALL, Method::CCA, Method::HT,
                                    Method::RRZ, Method::EDR};
  double ci_level = 0.95;
  bool with_coverage = true;
  int regression_exponent = 0;  // 0 -> cell-dependent rule below
  CcaDivisor cca_divisor = CcaDivisor::n_complete;
};

// Cell-dependent working-model rule, kept as a data table rather than
// branches: the regression basis exponent is 2 when the extra propensity
// term is absent and k otherwise.
enum class ExponentRule { fixed_two, match_k };

struct WorkingRule {
  int model;
  bool extra_term;  // interaction (model 1) / quadratic (model 2) tau != 0
  ExponentRule rule;
};

inline constexpr WorkingRule kWorkingRules[] = {
    {1, false, ExponentRule::fixed_two},
    {1, true, ExponentRule::match_k},
    {2, false, ExponentRule::fixed_two},
    {2, true, ExponentRule::match_k},
};

inline int regression_exponent(int model, const VectorXd& tau, int k) {
  const bool extra =
      (model == 1) ? tau[3] != 0.0 : (model == 2 ? tau[2] != 0.0 : false);
  for (const auto& rule : kWorkingRules) {
    if (rule.model == model && rule.extra_term == extra) {
      return rule.rule == ExponentRule::fixed_two ? 2 : k;
    }
  }
  throw std::runtime_error("no working-model rule for model " +
                           std::to_string(model));
}

// E[Z^k] for standard normal Z
inline double std_normal_moment(int k) {
  if (k % 2 == 1) return 0.0;
  double v = 1.0;
  for (int j = k - 1; j >= 1; j -= 2) v *= j;
  return v;
}

struct SimProblem {
  EstimatingFunction ef;
  PropensityModel pm;
  RegressionModel rm;
  VectorXd beta_true;
};

inline double ipow(double base, int e) {
  double v = 1.0;
  for (int j = 0; j < e; ++j) v *= base;
  return v;
}

inline SimProblem make_problem(const SimDesign& design) {
  SimProblem prob;
  const int k = design.k;
  const VectorXd tau = design.tau;

  if (design.model == 1) {
    if (tau.size() != 4) throw std::runtime_error("model 1 needs 4 tau entries");
    prob.ef.r = 1;
    prob.ef.p = 1;
    prob.ef.eval = [](const VectorXd&, const VectorXd& y, const VectorXd& beta) {
      return VectorXd::Constant(1, y[0] - beta[0]);
    };
    prob.ef.jac_beta = [](const VectorXd&, const VectorXd&, const VectorXd&) {
      return MatrixXd::Constant(1, 1, -1.0);
    };
    prob.pm.q = 3;
    prob.pm.design = [](const VectorXd& x) {
      VectorXd d(3);
      d << 1.0, x[0], x[1];
      return d;
    };
    const int e = design.regression_exponent > 0 ? design.regression_exponent
                                                 : regression_exponent(1, tau, k);
    prob.rm.alpha_dim = 3;
    prob.rm.ls_basis = [e](const VectorXd& x) {
      MatrixXd basis(1, 3);
      basis << 1.0, ipow(x[0], e), x[1] * x[1];
      return basis;
    };
    prob.rm.u_eval = [e](const VectorXd& x, const VectorXd& beta,
                         const VectorXd& alpha) {
      const double m = alpha[0] + alpha[1] * ipow(x[0], e) + alpha[2] * x[1] * x[1];
      return VectorXd::Constant(1, m - beta[0]);
    };
    prob.beta_true = VectorXd::Constant(1, 2.0 + 3.0 * std_normal_moment(k) + 1.0);
    return prob;
  }

  if (design.model == 2) {
    if (tau.size() != 3) throw std::runtime_error("model 2 needs 3 tau entries");
    prob.ef.r = 2;
    prob.ef.p = 1;
    prob.ef.eval = [](const VectorXd&, const VectorXd& y, const VectorXd& beta) {
      VectorXd s(2);
      s << y[0] - beta[0], y[1] - beta[0];
      return s;
    };
    prob.ef.jac_beta = [](const VectorXd&, const VectorXd&, const VectorXd&) {
      return MatrixXd::Constant(2, 1, -1.0);
    };
    prob.pm.q = 2;
    prob.pm.design = [](const VectorXd& x) {
      VectorXd d(2);
      d << 1.0, x[0];
      return d;
    };
    const int e = design.regression_exponent > 0 ? design.regression_exponent
                                                 : regression_exponent(2, tau, k);
    prob.rm.alpha_dim = 4;
    prob.rm.ls_basis = [e](const VectorXd& x) {
      MatrixXd basis = MatrixXd::Zero(2, 4);
      basis(0, 0) = 1.0;
      basis(0, 1) = ipow(x[0], e);
      basis(1, 2) = 1.0;
      basis(1, 3) = ipow(x[0], e);
      return basis;
    };
    prob.rm.u_eval = [e](const VectorXd& x, const VectorXd& beta,
                         const VectorXd& alpha) {
      VectorXd u(2);
      u[0] = alpha[0] + alpha[1] * ipow(x[0], e) - beta[0];
      u[1] = alpha[2] + alpha[3] * ipow(x[0], e) - beta[0];
      return u;
    };
    prob.beta_true = VectorXd::Constant(1, 2.0 + 3.0 * std_normal_moment(k));
    return prob;
  }

  if (design.model == 3) {
    if (design.k != 0) {
      throw std::runtime_error("design-mismatch: model 3 has no exponent k");
    }
    if (tau.size() != 4) throw std::runtime_error("model 3 needs 4 tau entries");
    prob.ef.r = 3;
    prob.ef.p = 3;
    prob.ef.eval = [](const VectorXd& x, const VectorXd& y, const VectorXd& beta) {
      VectorXd v(3);
      v << 1.0, x[0], y[0];
      return VectorXd(v * (x[1] - beta.dot(v)));
    };
    prob.ef.jac_beta = [](const VectorXd& x, const VectorXd& y, const VectorXd&) {
      VectorXd v(3);
      v << 1.0, x[0], y[0];
      return MatrixXd(-v * v.transpose());
    };
    prob.pm.q = 4;
    prob.pm.design = [](const VectorXd& x) {
      VectorXd d(4);
      d << 1.0, x[0], x[1], x[0] * x[1];
      return d;
    };
    prob.rm.alpha_dim = 3;
    prob.rm.ls_basis = [](const VectorXd& x) {
      MatrixXd basis(1, 3);
      basis << 1.0, x[0], x[1];
      return basis;
    };
    prob.rm.u_eval = [](const VectorXd& x, const VectorXd& beta,
                        const VectorXd& alpha) {
      const double yhat = alpha[0] + alpha[1] * x[0] + alpha[2] * x[1];
      VectorXd v(3);
      v << 1.0, x[0], yhat;
      return VectorXd(v * (x[1] - beta.dot(v)));
    };
    prob.beta_true = VectorXd::Ones(3);
    return prob;
  }
  throw std::runtime_error("unknown model " + std::to_string(design.model));
}

struct SimDraw {
  Dataset obs;   // y withheld where delta=0
  Dataset full;  // every y revealed (oracle view for the ALL benchmark)
  double miss_rate = 0.0;
};

inline SimDraw gen_draw(const SimDesign& design, Rng& rng) {
  SimDraw draw;
  const VectorXd& tau = design.tau;
  const int n = design.n;
  int missing = 0;

  if (design.model == 1) {
    draw.full.dim_x = 2;
    draw.full.dim_y = 1;
    for (int i = 0; i < n; ++i) {
      const double x1 = rng.normal();
      const double x2 = rng.normal();
      const double eps = rng.normal();
      VectorXd x(2);
      x << x1, x2;
      VectorXd y = VectorXd::Constant(
          1, 2.0 + 3.0 * ipow(x1, design.k) + x2 * x2 + x1 * eps);
      const double pi =
          logistic(tau[0] + tau[1] * x1 + tau[2] * x2 + tau[3] * x1 * x2);
      const int delta = rng.bernoulli(pi) ? 1 : 0;
      draw.full.rows.push_back({x, y, 1});
      missing += 1 - delta;
      draw.obs.rows.push_back(
          {x, delta == 1 ? std::optional<VectorXd>(y) : std::nullopt, delta});
    }
  } else if (design.model == 2) {
    draw.full.dim_x = 1;
    draw.full.dim_y = 2;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      const double e1 = rng.normal();
      const double e2 = rng.normal();
      VectorXd xv = VectorXd::Constant(1, x);
      VectorXd y(2);
      y << 2.0 + 3.0 * ipow(x, design.k) + e1,
          2.0 + 3.0 * ipow(x, design.k) + x * e2;
      const double pi = logistic(tau[0] + tau[1] * x + tau[2] * x * x);
      const int delta = rng.bernoulli(pi) ? 1 : 0;
      draw.full.rows.push_back({xv, y, 1});
      missing += 1 - delta;
      draw.obs.rows.push_back(
          {xv, delta == 1 ? std::optional<VectorXd>(y) : std::nullopt, delta});
    }
  } else if (design.model == 3) {
    draw.full.dim_x = 2;
    draw.full.dim_y = 1;
    for (int i = 0; i < n; ++i) {
      const double x1 = rng.exponential();
      const double yv = rng.chisq1();
      const double eps = rng.normal();
      const double x2 = 1.0 + x1 + yv + eps;
      VectorXd x(2);
      x << x1, x2;
      VectorXd y = VectorXd::Constant(1, yv);
      const double pi =
          logistic(tau[0] + tau[1] * x1 + tau[2] * x2 + tau[3] * x1 * x2);
      const int delta = rng.bernoulli(pi) ? 1 : 0;
      draw.full.rows.push_back({x, y, 1});
      missing += 1 - delta;
      draw.obs.rows.push_back(
          {x, delta == 1 ? std::optional<VectorXd>(y) : std::nullopt, delta});
    }
  } else {
    throw std::runtime_error("unknown model " + std::to_string(design.model));
  }
  draw.obs.dim_x = draw.full.dim_x;
  draw.obs.dim_y = draw.full.dim_y;
  draw.miss_rate = static_cast<double>(missing) / static_cast<double>(n);
  return draw;
}

// moment-based starting value for the outer solvers
inline VectorXd moment_start(const SimDesign& design, const Dataset& ds) {
  if (design.model == 3) return VectorXd::Zero(3);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& row : ds.rows) {
    if (row.delta != 1) continue;
    total += row.y->mean();
    ++count;
  }
  if (count == 0) return VectorXd::Zero(1);
  return VectorXd::Constant(1, total / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// Monte Carlo engine
// ---------------------------------------------------------------------------

struct EstimatorStats {
  Method method = Method::ALL;
  VectorXd bias, rmse, ev, mv, cp;  // per beta coordinate; mv/cp NaN without CIs
  int failures = 0;
};

struct SimCell {
  SimDesign design;
  VectorXd beta_true;
  double miss_rate = 0.0;
  std::vector<EstimatorStats> stats;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

struct RepOutcome {
  std::map<Method, VectorXd> beta;
  std::map<Method, VectorXd> se;  // empty when no CI was requested/possible
  std::map<Method, bool> ok;
  double miss_rate = 0.0;
};

inline RepOutcome run_rep(const SimDesign& design, const SimProblem& prob,
                          std::uint64_t rep) {
  RepOutcome out;
  Rng rng = Rng::stream(design.seed, rep);
  const SimDraw draw = gen_draw(design, rng);
  out.miss_rate = draw.miss_rate;

  auto want = [&](Method m) {
    for (Method e : design.estimators) {
      if (e == m) return true;
    }
    return false;
  };

  EstimatorConfig cfg;
  cfg.cca_divisor = design.cca_divisor;
  cfg.beta0 = moment_start(design, draw.obs);

  std::optional<VectorXd> cca_beta;
  if (want(Method::CCA) || want(Method::HT) || want(Method::RRZ) ||
      want(Method::EDR) || want(Method::ELProfile)) {
    try {
      const EstimateReport cca = estimate_cca(draw.obs, prob.ef, cfg);
      cca_beta = cca.beta_hat;
      if (want(Method::CCA)) {
        out.beta[Method::CCA] = cca.beta_hat;
        out.ok[Method::CCA] = true;
      }
    } catch (const std::exception&) {
      if (want(Method::CCA)) out.ok[Method::CCA] = false;
    }
  }

  if (want(Method::ALL)) {
    try {
      EstimatorConfig all_cfg = cfg;
      all_cfg.beta0 = moment_start(design, draw.full);
      out.beta[Method::ALL] = estimate_all(draw.full, prob.ef, all_cfg).beta_hat;
      out.ok[Method::ALL] = true;
    } catch (const std::exception&) {
      out.ok[Method::ALL] = false;
    }
  }

  // fit nuisance models once, reuse across HT/RRZ/EDR
  PropensityModel pm = prob.pm;
  RegressionModel rm = prob.rm;
  bool nuisance_ok = true;
  try {
    ensure_gamma(draw.obs, pm);
    ensure_alpha(draw.obs, rm);
  } catch (const std::exception&) {
    nuisance_ok = false;
  }

  EstimatorConfig warm = cfg;
  if (cca_beta) warm.beta0 = cca_beta;

  for (Method m : {Method::HT, Method::RRZ, Method::EDR, Method::ELProfile}) {
    if (!want(m)) continue;
    if (!nuisance_ok) {
      out.ok[m] = false;
      continue;
    }
    try {
      EstimateReport fit;
      switch (m) {
        case Method::HT:
          fit = estimate_ht(draw.obs, prob.ef, pm, warm);
          break;
        case Method::RRZ:
          fit = estimate_rrz(draw.obs, prob.ef, pm, rm, warm);
          break;
        case Method::EDR:
          fit = estimate_edr(draw.obs, prob.ef, pm, rm, warm);
          break;
        default:
          fit = estimate_el_profile(draw.obs, prob.ef, pm, rm, warm);
          break;
      }
      out.beta[m] = fit.beta_hat;
      out.ok[m] = true;
      if (design.with_coverage && m != Method::ELProfile) {
        CovarianceReport cov;
        if (m == Method::HT) {
          cov = var_ht(draw.obs, prob.ef, pm, fit.beta_hat, design.ci_level);
        } else if (m == Method::RRZ) {
          cov = var_rrz(draw.obs, prob.ef, pm, rm, fit.beta_hat, design.ci_level);
        } else {
          cov = var_edr(draw.obs, prob.ef, pm, rm, fit, design.ci_level);
        }
        out.se[m] = cov.se;
      }
    } catch (const std::exception&) {
      out.ok[m] = false;
    }
  }
  return out;
}

}  // namespace detail

inline SimCell run_monte_carlo(const SimDesign& design) {
  const SimProblem prob = make_problem(design);
  const int reps = design.reps;
  std::vector<detail::RepOutcome> outcomes(static_cast<std::size_t>(reps));

  const int jobs = std::max(1, design.jobs);
  if (jobs == 1) {
    for (int rep = 0; rep < reps; ++rep) {
      outcomes[static_cast<std::size_t>(rep)] =
          detail::run_rep(design, prob, static_cast<std::uint64_t>(rep));
    }
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < reps; rep = next.fetch_add(1)) {
          outcomes[static_cast<std::size_t>(rep)] =
              detail::run_rep(design, prob, static_cast<std::uint64_t>(rep));
        }
      });
    }
    for (auto& worker : workers) worker.join();
  }

  // deterministic aggregation in replicate order
  SimCell cell;
  cell.design = design;
  cell.beta_true = prob.beta_true;
  for (const auto& outcome : outcomes) cell.miss_rate += outcome.miss_rate;
  cell.miss_rate /= static_cast<double>(reps);

  const int p = prob.ef.p;
  const double z = normal_quantile(0.5 + design.ci_level / 2.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Method m : design.estimators) {
    EstimatorStats stats;
    stats.method = m;
    stats.bias = VectorXd::Zero(p);
    stats.rmse = VectorXd::Zero(p);
    stats.ev = VectorXd::Zero(p);
    stats.mv = VectorXd::Constant(p, nan);
    stats.cp = VectorXd::Constant(p, nan);

    std::vector<const detail::RepOutcome*> good;
    bool any_se = false;
    for (const auto& outcome : outcomes) {
      const auto it = outcome.ok.find(m);
      if (it == outcome.ok.end() || !it->second) {
        ++stats.failures;
        continue;
      }
      good.push_back(&outcome);
      any_se = any_se || outcome.se.count(m) > 0;
    }
    const double R = static_cast<double>(good.size());
    if (R > 1.5) {
      VectorXd mean = VectorXd::Zero(p);
      for (const auto* outcome : good) mean += outcome->beta.at(m);
      mean /= R;
      stats.bias = mean - prob.beta_true;
      VectorXd mse = VectorXd::Zero(p);
      VectorXd ss = VectorXd::Zero(p);
      for (const auto* outcome : good) {
        const VectorXd& b = outcome->beta.at(m);
        mse += (b - prob.beta_true).cwiseAbs2();
        ss += (b - mean).cwiseAbs2();
      }
      stats.rmse = (mse / R).cwiseSqrt();
      stats.ev = ss / (R - 1.0);
      if (any_se) {
        VectorXd mv = VectorXd::Zero(p);
        VectorXd hits = VectorXd::Zero(p);
        double with_se = 0.0;
        for (const auto* outcome : good) {
          const auto it = outcome->se.find(m);
          if (it == outcome->se.end()) continue;
          with_se += 1.0;
          mv += it->second.cwiseAbs2();
          const VectorXd& b = outcome->beta.at(m);
          for (int j = 0; j < p; ++j) {
            const double lo = b[j] - z * it->second[j];
            const double hi = b[j] + z * it->second[j];
            if (prob.beta_true[j] >= lo && prob.beta_true[j] <= hi) hits[j] += 1.0;
          }
        }
        if (with_se > 0.5) {
          stats.mv = mv / with_se;
          stats.cp = hits / with_se;
        }
      }
    } else {
      stats.bias = VectorXd::Constant(p, nan);
      stats.rmse = VectorXd::Constant(p, nan);
      stats.ev = VectorXd::Constant(p, nan);
    }
    if (stats.failures * 50 > reps) {
      cell.diagnostics.push_back(
          {"high-failure-rate", -1,
           method_name(m) + ": " + std::to_string(stats.failures) + " of " +
               std::to_string(reps) + " replicates failed"});
    }
    cell.stats.push_back(std::move(stats));
  }
  return cell;
}

// ---------------------------------------------------------------------------
// summaries
// ---------------------------------------------------------------------------

inline std::string format_double(double v, int decimals) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string format_tau(const VectorXd& tau) {
  std::string out;
  for (Eigen::Index j = 0; j < tau.size(); ++j) {
    if (j) out += "/";
    out += format_double(tau[j], 2);
  }
  return out;
}

inline const char* summary_header() {
  return "model,tau,k,estimator,n,reps,bias,rmse,ev,mv,cp,miss_rate,failures";
}

// One CSV row per estimator (per coordinate when p > 1, tagged EDR[j]).
inline std::string summarize(const std::vector<SimCell>& cells) {
  std::string out = summary_header();
  out += "\n";
  for (const auto& cell : cells) {
    const int p = static_cast<int>(cell.beta_true.size());
    for (const auto& stats : cell.stats) {
      for (int j = 0; j < p; ++j) {
        std::string tag = method_name(stats.method);
        if (p > 1) tag += "[" + std::to_string(j) + "]";
        out += std::to_string(cell.design.model) + "," +
               format_tau(cell.design.tau) + "," +
               std::to_string(cell.design.k) + "," + tag + "," +
               std::to_string(cell.design.n) + "," +
               std::to_string(cell.design.reps) + "," +
               format_double(stats.bias[j], 4) + "," +
               format_double(stats.rmse[j], 4) + "," +
               format_double(stats.ev[j], 4) + "," +
               format_double(stats.mv[j], 4) + "," +
               format_double(stats.cp[j], 4) + "," +
               format_double(cell.miss_rate, 3) + "," +
               std::to_string(stats.failures) + "\n";
      }
    }
  }
  return out;
}

}  // namespace edr
