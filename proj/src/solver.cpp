#include "weakl/solver.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace weakl {

namespace {

bool all_finite(const Eigen::MatrixXcd& m) { return m.allFinite(); }

template <typename Scalar>
struct SolveOutput {
  Vec<Scalar> theta;
  double rcond = 0.0;
  double residual = 0.0;
  bool jittered = false;
};

/// Factor G = C^H C + n M^H M, solve, refine. Scalar is double or cplx; the
/// real instantiation is the fast path and must agree with the complex one.
template <typename Scalar>
SolveOutput<Scalar> solve_normal_equations(const Mat<Scalar>& C, const Vec<Scalar>& w,
                                           const Mat<Scalar>& penalty_gram, Eigen::Index n_obs,
                                           const std::vector<std::string>& zero_blocks) {
  const Eigen::Index dim = C.cols();
  Mat<Scalar> G = Mat<Scalar>(dim, dim);
  G.noalias() = C.adjoint() * C;
  G += static_cast<double>(n_obs) * penalty_gram;
  G = ((G + G.adjoint()) * 0.5).eval();
  const Vec<Scalar> rhs = C.adjoint() * w;
  const double rhs_norm = rhs.norm();
  const double denom = rhs_norm > 0.0 ? rhs_norm : 1.0;

  auto attempt = [&](const Mat<Scalar>& gram, SolveOutput<Scalar>& out) {
    Eigen::LDLT<Mat<Scalar>> ldlt(gram);
    if (ldlt.info() != Eigen::Success) return false;
    out.theta = ldlt.solve(rhs);
    if (!out.theta.allFinite()) return false;
    for (int pass = 0; pass < 3; ++pass) {
      const Vec<Scalar> r = rhs - gram * out.theta;
      out.residual = r.norm() / denom;
      if (out.residual <= 1e-10) break;
      const Vec<Scalar> dtheta = ldlt.solve(r);
      if (!dtheta.allFinite()) break;
      out.theta += dtheta;
    }
    out.residual = (rhs - gram * out.theta).norm() / denom;
    out.rcond = ldlt.rcond();
    return out.theta.allFinite() && out.residual <= 1e-8;
  };

  SolveOutput<Scalar> out;
  if (attempt(G, out)) return out;

  const double jitter = 1e-10 * std::abs(G.trace()) / static_cast<double>(dim);
  std::cerr << "weakl: Gram factorization unstable, retrying with diagonal jitter " << jitter
            << "\n";
  Mat<Scalar> Gj = G;
  Gj += jitter * Mat<Scalar>::Identity(dim, dim);
  SolveOutput<Scalar> retry;
  retry.jittered = true;
  if (attempt(Gj, retry)) return retry;

  std::ostringstream msg;
  msg << "normal equations could not be solved (residual " << retry.residual
      << ", reciprocal condition " << retry.rcond << ")";
  if (!zero_blocks.empty()) {
    msg << "; penalty blocks with zero weight:";
    for (const auto& label : zero_blocks) msg << " " << label;
  }
  throw NumericalError(msg.str());
}

}  // namespace

WeaklProblem WeaklProblem::from_design(Eigen::MatrixXcd design, Eigen::VectorXcd y,
                                       PenaltyMatrix penalty) {
  WeaklProblem p;
  p.design = std::move(design);
  p.targets = std::move(y);
  p.penalty = std::move(penalty);
  p.validate();
  return p;
}

WeaklProblem WeaklProblem::from_blocks(std::vector<Eigen::MatrixXcd> blocks, Eigen::MatrixXcd Y,
                                       PenaltyMatrix penalty, Eigen::VectorXd lambda_diag,
                                       Eigen::MatrixXd lambda_dense) {
  WeaklProblem p;
  p.blocks = std::move(blocks);
  p.targets = std::move(Y);
  p.penalty = std::move(penalty);
  p.lambda_diag = std::move(lambda_diag);
  p.lambda_dense = std::move(lambda_dense);
  p.validate();
  return p;
}

Eigen::Index WeaklProblem::dim() const {
  if (design.size() > 0) return design.cols();
  return blocks.empty() ? penalty.dim() : blocks.front().cols();
}

void WeaklProblem::validate() const {
  const bool stacked = design.size() > 0;
  if (stacked == !blocks.empty())
    throw ConfigError("problem must use exactly one of stacked design / per-step blocks");
  if (targets.rows() < 1) throw DataError("problem has no observations");
  if (stacked) {
    if (targets.cols() != 1)
      throw ConfigError("stacked design problems are single-output (d2 = 1)");
    if (design.rows() != targets.rows())
      throw ConfigError("design and targets disagree on the number of observations");
    if (lambda_diag.size() > 0 || lambda_dense.size() > 0)
      throw ConfigError("weights are only supported on the per-step block layout");
    if (!all_finite(design)) throw NumericalError("non-finite values in the design matrix");
  } else {
    if (static_cast<Eigen::Index>(blocks.size()) != targets.rows())
      throw ConfigError("need one feature matrix per observation");
    const Eigen::Index d2v = targets.cols();
    const Eigen::Index d = blocks.front().cols();
    for (const auto& b : blocks) {
      if (b.rows() != d2v || b.cols() != d)
        throw ConfigError("inconsistent feature matrix shapes across time steps");
      if (!all_finite(b)) throw NumericalError("non-finite values in a feature matrix");
    }
    if (lambda_diag.size() > 0 && lambda_diag.size() != d2v)
      throw ConfigError("diagonal weight needs one entry per output");
    if (lambda_diag.size() > 0 && (lambda_diag.array() < 0.0).any())
      throw ConfigError("diagonal weight entries must be >= 0");
    if (lambda_dense.size() > 0 &&
        (lambda_dense.rows() != d2v || lambda_dense.cols() != d2v))
      throw ConfigError("dense weight must be d2 x d2");
    if (lambda_diag.size() > 0 && lambda_dense.size() > 0)
      throw ConfigError("give either a diagonal or a dense weight, not both");
  }
  if (!all_finite(targets)) throw NumericalError("non-finite values in the targets");
  if (penalty.dim() != dim())
    throw ConfigError("penalty dimension " + std::to_string(penalty.dim()) +
                      " does not match coefficient dimension " + std::to_string(dim()));
  if (penalty.rows.rows() > 0 && !all_finite(penalty.rows))
    throw NumericalError("non-finite values in the penalty rows");
}

bool WeaklProblem::is_real() const {
  auto real_only = [](const Eigen::MatrixXcd& m) {
    return m.size() == 0 || m.imag().cwiseAbs().maxCoeff() == 0.0;
  };
  if (!real_only(design) || !real_only(targets) || !real_only(penalty.rows)) return false;
  for (const auto& b : blocks)
    if (!real_only(b)) return false;
  return true;
}

void WeaklProblem::weighted_system(Eigen::MatrixXcd& C, Eigen::VectorXcd& w) const {
  if (design.size() > 0) {
    C = design;
    w = targets.col(0);
    return;
  }
  const Eigen::Index nv = n();
  const Eigen::Index d2v = d2();
  C.resize(nv * d2v, dim());
  w.resize(nv * d2v);
  const Eigen::MatrixXcd lam =
      lambda_dense.size() > 0
          ? Eigen::MatrixXcd(lambda_dense.cast<cplx>())
          : (lambda_diag.size() > 0
                 ? Eigen::MatrixXcd(lambda_diag.cast<cplx>().asDiagonal())
                 : Eigen::MatrixXcd());
  for (Eigen::Index j = 0; j < nv; ++j) {
    if (lam.size() > 0) {
      C.middleRows(j * d2v, d2v).noalias() = lam * blocks[j];
      w.segment(j * d2v, d2v).noalias() = lam * targets.row(j).transpose();
    } else {
      C.middleRows(j * d2v, d2v) = blocks[j];
      w.segment(j * d2v, d2v) = targets.row(j).transpose();
    }
  }
}

FitResult fit_weakl(const WeaklProblem& problem) {
  problem.validate();
  Eigen::MatrixXcd C;
  Eigen::VectorXcd w;
  problem.weighted_system(C, w);
  if (C.cols() < 1) throw ConfigError("problem has no coefficients to fit");

  FitResult result;
  result.diagnostics.dim = C.cols();
  result.diagnostics.n_obs = problem.n();

  if (problem.is_real()) {
    const Eigen::MatrixXd Cr = C.real();
    const Eigen::VectorXd wr = w.real();
    const auto out = solve_normal_equations<double>(Cr, wr, problem.penalty.gram_real(),
                                                    problem.n(), problem.penalty.zero_blocks);
    result.theta = out.theta.cast<cplx>();
    result.diagnostics.gram_rcond = out.rcond;
    result.diagnostics.residual = out.residual;
    result.diagnostics.jittered = out.jittered;
    result.diagnostics.real_path = true;
    return result;
  }

  const auto out = solve_normal_equations<cplx>(C, w, problem.penalty.gram(), problem.n(),
                                                problem.penalty.zero_blocks);
  result.theta = out.theta;
  result.diagnostics.gram_rcond = out.rcond;
  result.diagnostics.residual = out.residual;
  return result;
}

double empirical_risk(const Eigen::VectorXcd& theta, const WeaklProblem& problem) {
  problem.validate();
  if (theta.size() != problem.dim())
    throw ConfigError("coefficient vector has wrong dimension for this problem");
  Eigen::MatrixXcd C;
  Eigen::VectorXcd w;
  problem.weighted_system(C, w);
  return (C * theta - w).squaredNorm() / static_cast<double>(problem.n()) +
         problem.penalty.squared_norm(theta);
}

Eigen::MatrixXcd predict_outputs(const WeaklProblem& problem, const Eigen::VectorXcd& theta) {
  if (problem.design.size() > 0) return problem.design * theta;
  Eigen::MatrixXcd out(problem.n(), problem.d2());
  for (Eigen::Index j = 0; j < problem.n(); ++j)
    out.row(j) = (problem.blocks[j] * theta).transpose();
  return out;
}

}  // namespace weakl
