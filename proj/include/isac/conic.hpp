#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Sparse>

#include "isac/types.hpp"

// Primal-dual interior-point solver for linear + second-order cone programs
//
//   minimize    c^T x
//   subject to  G x + s = h,   s in K = R_+^l x Q^{n_1} x ... x Q^{n_k}
//
// where Q^n = { (t, y) in R x R^{n-1} : ||y|| <= t }. Rows of G are ordered
// as the linear block followed by each cone; a cone's first row is its t.
// G must have full column rank (there is no equality block).
//
// The iteration follows the homogeneous self-dual embedding with
// Nesterov-Todd scaling and a Mehrotra predictor-corrector step, so primal
// or dual infeasibility is reported with a certificate instead of stalling.
namespace isac::conic {

struct ConeSpec {
  int linear = 0;
  std::vector<int> soc;

  int rows() const;
  // Barrier degree: one per linear row plus one per second-order cone.
  int degree() const { return linear + static_cast<int>(soc.size()); }
};

struct Problem {
  RVector c;
  Eigen::SparseMatrix<double> g;
  RVector h;
  ConeSpec cones;

  void validate() const;
};

struct Settings {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  int max_iter = 100;
  int refinement_steps = 3;
};

enum class Status { optimal, primal_infeasible, dual_infeasible, max_iter };

std::string_view to_string(Status s);

struct Result {
  Status status = Status::max_iter;
  RVector x, s, z;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;       // s^T z at the returned point
  double pres = 0.0;      // relative primal residual
  double dres = 0.0;      // relative dual residual
  int iterations = 0;
};

Result solve(const Problem& problem, const Settings& settings = {});

}  // namespace isac::conic
