#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "weakl/common.hpp"

namespace weakl {

/// One diagonal penalty block. Ridge scales the identity; Sobolev scales each
/// Fourier coefficient by sqrt(lambda * (1 + ||k||_2^(2s))) over the canonical
/// frequency grid, which realizes the squared Sobolev norm of smoothness s.
struct PenaltyBlock {
  enum class Kind { Ridge, Sobolev };

  Kind kind = Kind::Ridge;
  double lambda = 0.0;
  Eigen::Index dim = 0;  // ridge block size
  int m = 0;             // sobolev truncation
  int q = 1;             // sobolev input count
  int s = 2;
  std::string label;

  Eigen::Index size() const;
  Eigen::VectorXd diagonal() const;  // realized nonnegative entries
};

PenaltyBlock ridge_block(Eigen::Index dim, double lambda, std::string label = "");
PenaltyBlock sobolev_block(int m, int q, int s, double lambda, std::string label = "");

/// Diagonal of the univariate Sobolev penalty: entries
/// sqrt(lambda * (1 + k^(2s))) for k = -m..m.
Eigen::VectorXd sobolev_diagonal(int m, int s, double lambda);
/// Multivariate version over the grid {-m..m}^q with ||k||_2 weights.
Eigen::VectorXd sobolev_diagonal(int m, int q, int s, double lambda);

/// The matrix M of the regularized risk: a nonnegative diagonal assembled
/// from blocks, optionally augmented with dense rows (soft constraint
/// projectors, transfer penalties). M^*M = diag^2 + rows^* rows.
struct PenaltyMatrix {
  Eigen::VectorXd diag;                  // sqrt-scale entries, one per coefficient
  Eigen::MatrixXcd rows;                 // stacked extra rows, 0 x dim when unused
  std::vector<std::string> zero_blocks;  // labels of blocks assembled with lambda = 0

  Eigen::Index dim() const { return diag.size(); }
  /// True when the diagonal alone is positive definite (every lambda > 0).
  bool injective() const { return diag.size() > 0 && (diag.array() > 0.0).all(); }
  /// Dense realization [diag; rows], for oracles and serialization.
  Eigen::MatrixXcd dense() const;
  /// M^*M, the Gram contribution.
  Eigen::MatrixXcd gram() const;
  Eigen::MatrixXd gram_real() const;  // valid only when rows are real
  /// ||M theta||^2.
  double squared_norm(const Eigen::VectorXcd& theta) const;
};

/// Block-diagonal assembly in block order. Blocks with lambda = 0 are legal
/// (the solver checks overall positive definiteness) and are recorded by
/// label for error reporting.
PenaltyMatrix assemble_block_penalty(const std::vector<PenaltyBlock>& blocks);

/// Appends sqrt(weight) * C to the penalty rows (inexact constraint).
void add_constraint_rows(PenaltyMatrix& penalty, const Eigen::MatrixXcd& constraint,
                         double weight);

/// Orthogonal projector onto Im(P)^perp for injective P:
/// C = I - P (P^*P)^{-1} P^*. Computed from a singular value decomposition;
/// rank deficiency or condition number above 1e12 is a numerical error.
/// C is Hermitian, idempotent, and annihilates Im(P).
Eigen::MatrixXcd orthogonal_complement_projector(const Eigen::MatrixXcd& P);

/// Exact constraint by reparameterization: restricting theta to Im(P) turns
/// the feature matrix Phi_t into Phi_t P; the fitted reduced vector lifts
/// back as theta = P theta'.
Eigen::MatrixXcd exact_constraint_reparam(const Eigen::MatrixXcd& phi_t,
                                          const Eigen::MatrixXcd& P);

/// Rows realizing the transfer penalty between coefficient blocks: with
/// M_J = (alpha_1 I_D, ..., alpha_J I_D)^T and P_J the projector onto its
/// image, returns (I - P_J) Pi_J, a (D|J|) x dim matrix whose squared norm
/// vanishes exactly on {theta : Pi_J theta in Im(M_J)}. `offsets[i]` locates
/// block i (length D) inside the full coefficient vector.
Eigen::MatrixXcd transfer_penalty_rows(Eigen::Index dim_theta,
                                       const std::vector<Eigen::Index>& offsets, Eigen::Index D,
                                       const Eigen::VectorXd& alpha);

/// The quadratic form Pi_J^* (I - P_J) Pi_J itself.
Eigen::MatrixXcd transfer_penalty(Eigen::Index dim_theta,
                                  const std::vector<Eigen::Index>& offsets, Eigen::Index D,
                                  const Eigen::VectorXd& alpha);

}  // namespace weakl
