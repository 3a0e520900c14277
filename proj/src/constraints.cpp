#include "weakl/constraints.hpp"

#include <cmath>

#include "weakl/feature_maps.hpp"

namespace weakl {

Eigen::Index PenaltyBlock::size() const {
  if (kind == Kind::Ridge) return dim;
  Eigen::Index r = 1;
  for (int i = 0; i < q; ++i) r *= 2 * m + 1;
  return r;
}

Eigen::VectorXd PenaltyBlock::diagonal() const {
  if (lambda < 0.0) throw ConfigError("penalty weight must be >= 0 (block '" + label + "')");
  if (kind == Kind::Ridge) {
    if (dim < 1) throw ConfigError("ridge block needs dim >= 1");
    return Eigen::VectorXd::Constant(dim, std::sqrt(lambda));
  }
  return sobolev_diagonal(m, q, s, lambda);
}

PenaltyBlock ridge_block(Eigen::Index dim, double lambda, std::string label) {
  PenaltyBlock b;
  b.kind = PenaltyBlock::Kind::Ridge;
  b.dim = dim;
  b.lambda = lambda;
  b.label = std::move(label);
  return b;
}

PenaltyBlock sobolev_block(int m, int q, int s, double lambda, std::string label) {
  PenaltyBlock b;
  b.kind = PenaltyBlock::Kind::Sobolev;
  b.m = m;
  b.q = q;
  b.s = s;
  b.lambda = lambda;
  b.label = std::move(label);
  return b;
}

Eigen::VectorXd sobolev_diagonal(int m, int s, double lambda) {
  return sobolev_diagonal(m, 1, s, lambda);
}

Eigen::VectorXd sobolev_diagonal(int m, int q, int s, double lambda) {
  if (s < 1) throw ConfigError("sobolev smoothness s must be >= 1");
  if (lambda < 0.0) throw ConfigError("penalty weight must be >= 0");
  const Eigen::MatrixXi grid = frequency_grid(m, q);
  Eigen::VectorXd diag(grid.rows());
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    const double k2 = grid.row(r).cast<double>().squaredNorm();
    diag(r) = std::sqrt(lambda * (1.0 + std::pow(k2, s)));
  }
  return diag;
}

Eigen::MatrixXcd PenaltyMatrix::dense() const {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(diag.size() + rows.rows(), dim());
  out.topRows(diag.size()) = diag.cast<cplx>().asDiagonal();
  if (rows.rows() > 0) out.bottomRows(rows.rows()) = rows;
  return out;
}

Eigen::MatrixXcd PenaltyMatrix::gram() const {
  Eigen::MatrixXcd g = diag.array().square().matrix().cast<cplx>().asDiagonal();
  if (rows.rows() > 0) g += rows.adjoint() * rows;
  return g;
}

Eigen::MatrixXd PenaltyMatrix::gram_real() const {
  Eigen::MatrixXd g = diag.array().square().matrix().asDiagonal();
  if (rows.rows() > 0) {
    if (rows.imag().cwiseAbs().maxCoeff() != 0.0)
      throw NumericalError("penalty has complex rows; real Gram unavailable");
    const Eigen::MatrixXd r = rows.real();
    g += r.transpose() * r;
  }
  return g;
}

double PenaltyMatrix::squared_norm(const Eigen::VectorXcd& theta) const {
  double value = (diag.cast<cplx>().asDiagonal() * theta).squaredNorm();
  if (rows.rows() > 0) value += (rows * theta).squaredNorm();
  return value;
}

PenaltyMatrix assemble_block_penalty(const std::vector<PenaltyBlock>& blocks) {
  Eigen::Index dim = 0;
  for (const auto& b : blocks) dim += b.size();
  PenaltyMatrix out;
  out.diag.resize(dim);
  out.rows.resize(0, dim);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Eigen::VectorXd d = blocks[i].diagonal();
    out.diag.segment(at, d.size()) = d;
    at += d.size();
    if (blocks[i].lambda == 0.0)
      out.zero_blocks.push_back(blocks[i].label.empty() ? "block " + std::to_string(i)
                                                        : blocks[i].label);
  }
  return out;
}

void add_constraint_rows(PenaltyMatrix& penalty, const Eigen::MatrixXcd& constraint,
                         double weight) {
  if (constraint.cols() != penalty.dim())
    throw ConfigError("constraint rows have " + std::to_string(constraint.cols()) +
                      " columns, penalty has dimension " + std::to_string(penalty.dim()));
  if (weight < 0.0) throw ConfigError("constraint weight must be >= 0");
  const Eigen::Index old = penalty.rows.rows();
  Eigen::MatrixXcd stacked(old + constraint.rows(), penalty.dim());
  stacked.topRows(old) = penalty.rows;
  stacked.bottomRows(constraint.rows()) = std::sqrt(weight) * constraint;
  penalty.rows = std::move(stacked);
}

Eigen::MatrixXcd orthogonal_complement_projector(const Eigen::MatrixXcd& P) {
  const Eigen::Index dim = P.rows();
  const Eigen::Index k = P.cols();
  if (k < 1) throw ConfigError("constraint matrix P has no columns");
  if (k > dim)
    throw NumericalError("constraint matrix P cannot be injective: " + std::to_string(k) +
                         " columns but only " + std::to_string(dim) + " rows");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(P, Eigen::ComputeThinU);
  const Eigen::VectorXd sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(k - 1);
  if (smin <= 0.0 || smax / smin > 1e12)
    throw NumericalError("constraint matrix P is rank-deficient or too ill-conditioned "
                         "(condition estimate above 1e12)");
  const Eigen::MatrixXcd U = svd.matrixU();
  return Eigen::MatrixXcd::Identity(dim, dim) - U * U.adjoint();
}

Eigen::MatrixXcd exact_constraint_reparam(const Eigen::MatrixXcd& phi_t,
                                          const Eigen::MatrixXcd& P) {
  if (phi_t.cols() != P.rows())
    throw ConfigError("feature matrix has " + std::to_string(phi_t.cols()) +
                      " columns but P has " + std::to_string(P.rows()) + " rows");
  return phi_t * P;
}

Eigen::MatrixXcd transfer_penalty_rows(Eigen::Index dim_theta,
                                       const std::vector<Eigen::Index>& offsets, Eigen::Index D,
                                       const Eigen::VectorXd& alpha) {
  const Eigen::Index J = static_cast<Eigen::Index>(offsets.size());
  if (J < 2) throw ConfigError("transfer penalty needs at least two blocks, got " +
                               std::to_string(J));
  if (alpha.size() != J) throw ConfigError("transfer penalty: one weight per block required");
  if (D < 1) throw ConfigError("transfer penalty: block dimension must be >= 1");
  for (Eigen::Index j = 0; j < J; ++j) {
    if (alpha(j) == 0.0) throw ConfigError("transfer penalty: zero weight for block " +
                                           std::to_string(j));
    if (offsets[j] < 0 || offsets[j] + D > dim_theta)
      throw ConfigError("transfer penalty: block " + std::to_string(j) +
                        " does not fit inside the coefficient vector");
  }

  // Pi_J: select the J blocks; M_J = (alpha_1 I_D; ...); I - P_J via the
  // closed form P_J = (alpha alpha^T / ||alpha||^2) (x) I_D.
  Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(J * D, dim_theta);
  for (Eigen::Index j = 0; j < J; ++j)
    selector.block(j * D, offsets[j], D, D).setIdentity();

  const Eigen::MatrixXd outer = alpha * alpha.transpose() / alpha.squaredNorm();
  Eigen::MatrixXd complement = Eigen::MatrixXd::Identity(J * D, J * D);
  for (Eigen::Index a = 0; a < J; ++a)
    for (Eigen::Index b = 0; b < J; ++b)
      complement.block(a * D, b * D, D, D) -=
          outer(a, b) * Eigen::MatrixXd::Identity(D, D);

  return (complement * selector).cast<cplx>();
}

Eigen::MatrixXcd transfer_penalty(Eigen::Index dim_theta,
                                  const std::vector<Eigen::Index>& offsets, Eigen::Index D,
                                  const Eigen::VectorXd& alpha) {
  const Eigen::MatrixXcd rows = transfer_penalty_rows(dim_theta, offsets, D, alpha);
  return rows.adjoint() * rows;
}

}  // namespace weakl
