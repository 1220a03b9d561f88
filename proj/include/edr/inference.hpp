#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "edr/data.hpp"
#include "edr/estimators.hpp"
#include "edr/rng.hpp"

namespace edr {

// Acklam's rational approximation to the standard normal quantile,
// |error| < 1.2e-9 over (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::runtime_error("normal_quantile requires p in (0,1)");
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

struct CovarianceReport {
  Method method = Method::HT;
  MatrixXd sigma;  // asymptotic covariance of sqrt(n)*(beta_hat - beta*)
  VectorXd se;     // sqrt(diag(sigma)/n)
  MatrixXd ci;     // p x 2 Wald interval
  double level = 0.95;
  std::string source = "sandwich";
  std::vector<Diagnostic> diagnostics;
};

inline double condition_number(const MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv[sv.size() - 1] <= 0.0) return std::numeric_limits<double>::infinity();
  return sv[0] / sv[sv.size() - 1];
}

inline MatrixXd guarded_inverse(const MatrixXd& m, const std::string& label,
                                std::vector<Diagnostic>& diagnostics) {
  if (m.size() == 0) return m;
  if (condition_number(m) > 1e10) {
    diagnostics.push_back(
        {"ill-conditioned", -1, label + " condition number > 1e10"});
  }
  return m.fullPivLu().inverse();
}

inline void finish_report(CovarianceReport& report, const VectorXd& beta,
                          std::size_t n, double level) {
  const int p = static_cast<int>(beta.size());
  report.level = level;
  report.se = (report.sigma.diagonal() / static_cast<double>(n)).cwiseSqrt();
  const double z = normal_quantile(0.5 + level / 2.0);
  report.ci.resize(p, 2);
  for (int j = 0; j < p; ++j) {
    report.ci(j, 0) = beta[j] - z * report.se[j];
    report.ci(j, 1) = beta[j] + z * report.se[j];
  }
}

// Sigma_HT = {V12^T V11^-1 V12}^-1 at the fitted (beta, gamma).
inline CovarianceReport var_ht(const Dataset& ds, const EstimatingFunction& ef,
                               const PropensityModel& pm, const VectorXd& beta,
                               double level = 0.95) {
  const HtBlocks blocks = ht_blocks(ds, ef, pm, beta);
  CovarianceReport report;
  report.method = Method::HT;
  const MatrixXd v11_inv = guarded_inverse(blocks.V11, "V11", report.diagnostics);
  report.sigma = guarded_inverse(
      blocks.V12.transpose() * v11_inv * blocks.V12, "V12'V11^-1 V12",
      report.diagnostics);
  finish_report(report, beta, ds.size(), level);
  return report;
}

inline CovarianceReport var_rrz(const Dataset& ds, const EstimatingFunction& ef,
                                const PropensityModel& pm, const RegressionModel& rm,
                                const VectorXd& beta, double level = 0.95) {
  const RrzBlocks blocks = rrz_blocks(ds, ef, pm, rm, beta);
  CovarianceReport report;
  report.method = Method::RRZ;
  const MatrixXd v21_inv = guarded_inverse(blocks.V21, "V21", report.diagnostics);
  report.sigma = guarded_inverse(
      blocks.V22.transpose() * v21_inv * blocks.V22, "V22'V21^-1 V22",
      report.diagnostics);
  finish_report(report, beta, ds.size(), level);
  return report;
}

inline CovarianceReport var_edr(const Dataset& ds, const EstimatingFunction& ef,
                                const PropensityModel& pm, const RegressionModel& rm,
                                const EstimateReport& fit, double level = 0.95) {
  EdrContext ctx{ds, ef, pm, rm, fit.gamma_hat, fit.alpha_hat};
  ctx.init_reduction(fit.beta_hat);
  const VectorXd lambda = ctx.inner_solve(fit.beta_hat).lambda;
  const EdrBlocks blocks = edr_blocks(ctx, fit.beta_hat, lambda);
  CovarianceReport report;
  report.method = Method::EDR;
  const MatrixXd v31_inv = guarded_inverse(blocks.V31, "V31", report.diagnostics);
  report.sigma = guarded_inverse(
      blocks.V32.transpose() * v31_inv * blocks.V32, "V32'V31^-1 V32",
      report.diagnostics);
  finish_report(report, fit.beta_hat, ds.size(), level);
  return report;
}

// Nonparametric bootstrap of an estimator functional: resamples rows with
// replacement, refits everything inside the supplied closure. Replicates that
// throw are dropped; more than 5% failures aborts.
inline CovarianceReport bootstrap_se(
    const Dataset& ds, const std::function<VectorXd(const Dataset&)>& estimator,
    const VectorXd& beta_hat, int B, std::uint64_t seed, double level = 0.95) {
  if (B < 50) throw std::runtime_error("bootstrap requires B >= 50");
  const std::size_t n = ds.size();
  std::vector<VectorXd> draws;
  draws.reserve(static_cast<std::size_t>(B));
  int failures = 0;
  for (int b = 0; b < B; ++b) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(b));
    Dataset resampled;
    resampled.dim_x = ds.dim_x;
    resampled.dim_y = ds.dim_y;
    resampled.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      resampled.rows.push_back(ds.rows[rng.below(n)]);
    }
    try {
      draws.push_back(estimator(resampled));
    } catch (const std::exception&) {
      ++failures;
    }
  }
  if (failures * 20 > B) {
    throw std::runtime_error("bootstrap failure rate above 5%");
  }

  const int p = static_cast<int>(beta_hat.size());
  const double m = static_cast<double>(draws.size());
  VectorXd mean = VectorXd::Zero(p);
  for (const auto& d : draws) mean += d;
  mean /= m;
  MatrixXd cov = MatrixXd::Zero(p, p);
  for (const auto& d : draws) cov += (d - mean) * (d - mean).transpose();
  cov /= (m - 1.0);

  CovarianceReport report;
  report.source = "bootstrap";
  report.sigma = cov * static_cast<double>(n);
  if (failures > 0) {
    report.diagnostics.push_back(
        {"bootstrap-failures", -1, std::to_string(failures) + " of " +
                                       std::to_string(B) + " replicates dropped"});
  }
  finish_report(report, beta_hat, n, level);
  return report;
}

}  // namespace edr
