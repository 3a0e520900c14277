#pragma once

// Independent reference solver for the regularized empirical risk
//
//   L(theta) = (1/n) sum_j ||Lambda (Phi_{t_j} theta - Y_{t_j})||^2
//            + ||M theta||^2.
//
// Instead of the library's Hermitian normal equations, the oracle stacks the
// weighted observations over sqrt(n) together with the dense penalty rows and
// solves the tall least-squares system by column-pivoted QR. Agreement
// between the two routes validates the closed form end to end.

#include <Eigen/Dense>

#include <cmath>

#include "weakl/rng.hpp"
#include "weakl/solver.hpp"

namespace testutil {

inline Eigen::VectorXcd oracle_solve(const weakl::WeaklProblem& problem) {
  Eigen::MatrixXcd C;
  Eigen::VectorXcd w;
  problem.weighted_system(C, w);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(problem.n()));
  const Eigen::MatrixXcd M = problem.penalty.dense();
  Eigen::MatrixXcd A(C.rows() + M.rows(), C.cols());
  A.topRows(C.rows()) = C * inv_sqrt_n;
  A.bottomRows(M.rows()) = M;
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(A.rows());
  b.head(C.rows()) = w * inv_sqrt_n;
  return A.colPivHouseholderQr().solve(b);
}

inline double rel_err(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

struct InstanceSpec {
  Eigen::Index dim = 4;
  Eigen::Index n = 20;
  Eigen::Index d2 = 1;
  bool complex_entries = true;
  bool use_blocks = false;  // forced on when d2 > 1 or with_lambda
  bool with_lambda = false;
  bool with_rows = false;
};

inline Eigen::MatrixXcd random_matrix(weakl::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                      bool complex_entries) {
  Eigen::MatrixXcd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      out(r, c) = complex_entries ? weakl::cplx(rng.normal(), rng.normal())
                                  : weakl::cplx(rng.normal(), 0.0);
  return out;
}

inline weakl::WeaklProblem random_instance(weakl::Rng& rng, const InstanceSpec& spec) {
  weakl::PenaltyMatrix penalty;
  penalty.diag.resize(spec.dim);
  for (Eigen::Index i = 0; i < spec.dim; ++i) penalty.diag(i) = 0.3 + 1.2 * rng.uniform();
  if (spec.with_rows) {
    penalty.rows = random_matrix(rng, 2, spec.dim, spec.complex_entries) * 0.4;
  } else {
    penalty.rows.resize(0, spec.dim);
  }

  // Per-step weights only exist on the block layout, so lambda forces it.
  const bool blocks = spec.use_blocks || spec.d2 > 1 || spec.with_lambda;
  if (!blocks) {
    const Eigen::MatrixXcd design = random_matrix(rng, spec.n, spec.dim, spec.complex_entries);
    const Eigen::VectorXcd y = random_matrix(rng, spec.n, 1, spec.complex_entries);
    return weakl::WeaklProblem::from_design(design, y, std::move(penalty));
  }

  std::vector<Eigen::MatrixXcd> mats;
  mats.reserve(static_cast<std::size_t>(spec.n));
  for (Eigen::Index j = 0; j < spec.n; ++j)
    mats.push_back(random_matrix(rng, spec.d2, spec.dim, spec.complex_entries));
  const Eigen::MatrixXcd Y = random_matrix(rng, spec.n, spec.d2, spec.complex_entries);
  Eigen::VectorXd lambda;
  if (spec.with_lambda) {
    lambda.resize(spec.d2);
    for (Eigen::Index l = 0; l < spec.d2; ++l) lambda(l) = 0.5 + rng.uniform();
  }
  return weakl::WeaklProblem::from_blocks(std::move(mats), Y, std::move(penalty), lambda);
}

}  // namespace testutil
