#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "edr/numerics.hpp"

using edr::MatrixXd;
using edr::VectorXd;

TEST_CASE("central-difference jacobian matches hand derivatives") {
  // f(x) = (x0^2, x0*x1) at (1.5, 2): rows ((3, 0), (2, 1.5))
  auto f = [](const VectorXd& x) {
    VectorXd out(2);
    out << x[0] * x[0], x[0] * x[1];
    return out;
  };
  VectorXd x(2);
  x << 1.5, 2.0;
  const MatrixXd jac = edr::fd_jacobian(f, x);
  CHECK(jac(0, 0) == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(jac(0, 1) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(jac(1, 0) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(jac(1, 1) == doctest::Approx(1.5).epsilon(1e-7));
}

TEST_CASE("gradient of a smooth scalar field") {
  auto f = [](const VectorXd& x) { return std::sin(x[0]) + x[1] * x[1]; };
  VectorXd x(2);
  x << 0.7, -1.2;
  const VectorXd grad = edr::fd_gradient(f, x);
  CHECK(grad[0] == doctest::Approx(std::cos(0.7)).epsilon(1e-7));
  CHECK(grad[1] == doctest::Approx(-2.4).epsilon(1e-7));
}

TEST_CASE("newton solves a linear system in one step") {
  // x0 + 2 x1 = 3, 3 x0 - x1 = 2  ->  (1, 1)
  auto residual = [](const VectorXd& x) {
    VectorXd r(2);
    r << x[0] + 2.0 * x[1] - 3.0, 3.0 * x[0] - x[1] - 2.0;
    return r;
  };
  const edr::RootResult root = edr::solve_root(residual, nullptr, VectorXd::Zero(2));
  REQUIRE(root.converged);
  CHECK(root.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(root.x[1] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("newton with analytic jacobian on a scalar nonlinearity") {
  auto residual = [](const VectorXd& x) {
    return VectorXd::Constant(1, x[0] * x[0] - 4.0);
  };
  auto jac = [](const VectorXd& x) { return MatrixXd::Constant(1, 1, 2.0 * x[0]); };
  const edr::RootResult root =
      edr::solve_root(residual, jac, VectorXd::Constant(1, 5.0));
  REQUIRE(root.converged);
  CHECK(root.x[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(root.trace.size() >= 2);
}

TEST_CASE("newton reports failure on an inconsistent system") {
  auto residual = [](const VectorXd& x) {
    return VectorXd::Constant(1, x[0] * x[0] + 1.0);
  };
  const edr::RootResult root =
      edr::solve_root(residual, nullptr, VectorXd::Constant(1, 3.0), 1e-8, 50);
  CHECK(!root.converged);
  CHECK(root.residual_norm >= 1.0 - 1e-9);
}

TEST_CASE("solver survives exceptions thrown along the line search") {
  // residual undefined left of x = 0.5; root at x = 1
  auto residual = [](const VectorXd& x) {
    if (x[0] < 0.5) throw edr::SolverError("out of domain");
    return VectorXd::Constant(1, std::log(x[0]));
  };
  const edr::RootResult root =
      edr::solve_root(residual, nullptr, VectorXd::Constant(1, 4.0));
  REQUIRE(root.converged);
  CHECK(root.x[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("nelder-mead finds a quadratic minimum") {
  auto f = [](const VectorXd& x) {
    return (x[0] - 1.0) * (x[0] - 1.0) + (x[1] + 2.0) * (x[1] + 2.0);
  };
  VectorXd x0(2);
  x0 << 0.0, 0.0;
  const edr::MinimizeResult opt = edr::nelder_mead(f, x0, 1e-12, 4000);
  REQUIRE(opt.converged);
  CHECK(opt.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(opt.x[1] == doctest::Approx(-2.0).epsilon(1e-3));
  CHECK(opt.value == doctest::Approx(0.0).epsilon(1e-6));
}
