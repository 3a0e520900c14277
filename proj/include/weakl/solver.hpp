#pragma once

#include <Eigen/Dense>

#include <vector>

#include "weakl/common.hpp"
#include "weakl/constraints.hpp"

namespace weakl {

/// One regularized empirical-risk problem,
///
///   L(theta) = (1/n) sum_j || Lambda (Phi_{t_j} theta - Y_{t_j}) ||^2
///              + || M theta ||^2,
///
/// whose minimizer is the solution of the Hermitian normal equations
/// G theta = rhs with G = sum_j Phi^* Lambda^*Lambda Phi + n M^*M.
///
/// Two storage layouts: a stacked design (single-output models, row j equals
/// phi(X_{t_j})^*) or one d2 x dim feature matrix per time step. Weights are
/// optional: a diagonal Lambda (d2 entries, possibly zero) or a dense real
/// Lambda; both default to the identity.
struct WeaklProblem {
  Eigen::MatrixXcd design;                // n x dim, or empty
  std::vector<Eigen::MatrixXcd> blocks;   // n feature matrices, or empty
  Eigen::MatrixXcd targets;               // n x d2
  Eigen::VectorXd lambda_diag;            // size d2 or empty
  Eigen::MatrixXd lambda_dense;           // d2 x d2 or empty
  PenaltyMatrix penalty;

  static WeaklProblem from_design(Eigen::MatrixXcd design, Eigen::VectorXcd y,
                                  PenaltyMatrix penalty);
  static WeaklProblem from_blocks(std::vector<Eigen::MatrixXcd> blocks, Eigen::MatrixXcd Y,
                                  PenaltyMatrix penalty, Eigen::VectorXd lambda_diag = {},
                                  Eigen::MatrixXd lambda_dense = {});

  Eigen::Index n() const { return targets.rows(); }
  Eigen::Index d2() const { return targets.cols(); }
  Eigen::Index dim() const;

  /// All inputs have exactly zero imaginary part (real solve is valid).
  bool is_real() const;

  /// Stacked weighted system: C is (n*d2) x dim with Lambda folded in, w the
  /// matching weighted target vector. The risk is ||C theta - w||^2 / n +
  /// ||M theta||^2.
  void weighted_system(Eigen::MatrixXcd& C, Eigen::VectorXcd& w) const;

  void validate() const;
};

struct FitDiagnostics {
  double gram_rcond = 0.0;   // reciprocal condition estimate of G
  double residual = 0.0;     // ||G theta - rhs|| / ||rhs||
  bool jittered = false;     // diagonal jitter was needed
  bool real_path = false;    // solved in real arithmetic
  Eigen::Index dim = 0;
  Eigen::Index n_obs = 0;
};

struct FitResult {
  Eigen::VectorXcd theta;
  FitDiagnostics diagnostics;
};

/// Closed-form fit via Hermitian factorization of the normal equations, with
/// one step of iterative refinement. Cost O(dim^3 + dim^2 n d2). Problems
/// whose inputs are all real take a real fast path with identical results up
/// to 1e-12. On factorization failure one diagonal jitter retry
/// (1e-10 trace(G)/dim) is attempted before raising a numerical error; the
/// error names any penalty blocks assembled with lambda = 0.
FitResult fit_weakl(const WeaklProblem& problem);

/// The regularized empirical risk at an arbitrary coefficient vector.
double empirical_risk(const Eigen::VectorXcd& theta, const WeaklProblem& problem);

/// Per-time-step model outputs (n x d2) at a coefficient vector.
Eigen::MatrixXcd predict_outputs(const WeaklProblem& problem, const Eigen::VectorXcd& theta);

}  // namespace weakl
