#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edr/numerics.hpp"

namespace edr {

// One incomplete-data record: x always observed, y present iff delta=1.
struct Observation {
  VectorXd x;
  std::optional<VectorXd> y;
  int delta = 0;
};

struct Dataset {
  std::vector<Observation> rows;
  int dim_x = 0;
  int dim_y = 0;

  std::size_t size() const { return rows.size(); }
  std::size_t n_complete() const {
    std::size_t c = 0;
    for (const auto& row : rows) c += (row.delta == 1);
    return c;
  }
};

struct Diagnostic {
  std::string code;
  int row = -1;  // -1 when dataset-level
  std::string detail;
};

inline std::vector<Diagnostic> validate_dataset(const Dataset& ds) {
  std::vector<Diagnostic> out;
  std::size_t complete = 0;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const auto& row = ds.rows[i];
    const int idx = static_cast<int>(i);
    if (row.delta != 0 && row.delta != 1) {
      out.push_back({"invalid-delta", idx, "delta must be 0 or 1"});
    }
    if ((row.delta == 1) != row.y.has_value()) {
      out.push_back({"inconsistent-delta", idx, "y present iff delta=1"});
    }
    if (row.x.size() != ds.dim_x) {
      out.push_back({"bad-x-length", idx, "x length != dim_x"});
    } else if (!row.x.allFinite()) {
      out.push_back({"non-finite-x", idx, ""});
    }
    if (row.y) {
      if (row.y->size() != ds.dim_y) {
        out.push_back({"bad-y-length", idx, "y length != dim_y"});
      } else if (!row.y->allFinite()) {
        out.push_back({"non-finite-y", idx, ""});
      }
    }
    complete += (row.delta == 1 && row.y.has_value());
  }
  if (complete == 0) {
    out.push_back({"no-complete-cases", -1, "all rows have delta=0"});
  }
  return out;
}

inline Dataset complete_cases(const Dataset& ds) {
  Dataset out;
  out.dim_x = ds.dim_x;
  out.dim_y = ds.dim_y;
  for (const auto& row : ds.rows) {
    if (row.delta == 1) out.rows.push_back(row);
  }
  if (out.rows.empty()) {
    throw std::runtime_error("complete-cases-empty: no rows with delta=1");
  }
  return out;
}

// r moment functions of z=(x,y) and a p-dimensional parameter, r >= p.
struct EstimatingFunction {
  int r = 0;
  int p = 0;
  std::function<VectorXd(const VectorXd& x, const VectorXd& y, const VectorXd& beta)> eval;
  // optional analytic r x p Jacobian in beta; finite differences otherwise
  std::function<MatrixXd(const VectorXd& x, const VectorXd& y, const VectorXd& beta)> jac_beta;

  MatrixXd jacobian(const VectorXd& x, const VectorXd& y, const VectorXd& beta) const {
    if (jac_beta) return jac_beta(x, y, beta);
    return fd_jacobian([&](const VectorXd& b) { return eval(x, y, b); }, beta);
  }
};

}  // namespace edr
