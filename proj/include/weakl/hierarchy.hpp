#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "weakl/data.hpp"
#include "weakl/feature_maps.hpp"
#include "weakl/solver.hpp"

namespace weakl {

// ---------------------------------------------------------------------------
// Hierarchy structure
// ---------------------------------------------------------------------------

/// Node/parent/level row of a hierarchy definition table. Roots leave
/// `parent` empty.
struct HierNodeRow {
  std::string node;
  std::string parent;
  std::string level;
};

/// Aggregation hierarchy in canonical node order: bottom nodes first (in
/// input order), then aggregates by decreasing depth, roots last. The
/// summation matrix S maps bottom values to all node values; its top l2 rows
/// are the identity and a single root's row is all ones.
struct Hierarchy {
  std::vector<std::string> labels;
  std::vector<std::string> levels;
  std::vector<Eigen::Index> parent;  // index into labels, -1 for roots
  Eigen::MatrixXd S;                 // l1 x l2

  Eigen::Index l1() const { return S.rows(); }
  Eigen::Index l2() const { return S.cols(); }
  Eigen::Index find(const std::string& label) const;  // -1 if absent
};

/// Builds the canonical hierarchy from a node/parent/level table.
/// Duplicate nodes, unknown parents, and cycles are errors.
Hierarchy build_summation_matrix(const std::vector<HierNodeRow>& rows);

// ---------------------------------------------------------------------------
// Hierarchical WeaKL fits
// ---------------------------------------------------------------------------

struct HierConfig {
  /// Per-node effect lists: l2 entries (bottom-up, transfer) or l1 entries
  /// (coherency), in canonical node order.
  std::vector<std::vector<FeatureMapSpec>> node_effects;
  std::vector<Eigen::VectorXd> node_lambdas;  // penalty weights per node

  Eigen::VectorXd lambda_weights;  // diag of Lambda (l1), empty = identity
  Eigen::VectorXd gamma_weights;   // diag of Gamma (l1), coherency fit only

  std::vector<Eigen::Index> transfer_nodes;  // bottom-node indices, transfer fit only
  Eigen::VectorXd transfer_alpha;            // empty = all ones
  double transfer_strength = 1.0;
};

enum class HierFamily { BottomUp, Coherency, Transfer };

struct HierModel {
  HierFamily family = HierFamily::BottomUp;
  Hierarchy hierarchy;
  std::vector<std::vector<FeatureMapSpec>> node_effects;
  std::vector<Eigen::VectorXd> node_lambdas;
  Eigen::VectorXcd theta;
  std::vector<Eigen::Index> node_offsets;
  std::shared_ptr<const Preprocess> prep;
  FitDiagnostics diagnostics;

  /// Bottom-node forecasts (rows x l2).
  Eigen::MatrixXd predict_bottom(const Eigen::MatrixXd& X, double* max_imag = nullptr) const;
  /// All-node forecasts (rows x l1): aggregated bottom forecasts for the
  /// bottom-up and transfer families, direct per-node forecasts for the
  /// coherency family.
  Eigen::MatrixXd predict_all(const Eigen::MatrixXd& X, double* max_imag = nullptr) const;
};

/// Bottom-up fit: models the l2 bottom nodes, matches all l1 observed series
/// through S, weights residuals by Lambda. Targets must hold all node series
/// in canonical order.
HierModel fit_weakl_bu(const Dataset& train, const Hierarchy& hierarchy,
                       const HierConfig& config);

/// Coherency fit: one model per node plus the penalty
/// ||Gamma (S Pi_b - I) Phi theta||^2 pushing forecasts toward Im(S).
HierModel fit_weakl_g(const Dataset& train, const Hierarchy& hierarchy,
                      const HierConfig& config);

/// Transfer fit: bottom-up plus a transfer penalty tying the coefficient
/// blocks of the selected bottom nodes together.
HierModel fit_weakl_t(const Dataset& train, const Hierarchy& hierarchy,
                      const HierConfig& config);

// ---------------------------------------------------------------------------
// Reconciliation of base forecasts
// ---------------------------------------------------------------------------

enum class ReconcileMethod { Ols, Mint };

/// Projects base forecasts (rows x l1, same node order as S) onto coherent
/// forecasts. Ols uses the orthogonal projection S (S^T S)^{-1} S^T; MinT
/// uses S (S^T W^{-1} S)^{-1} S^T W^{-1} after shrinking W toward its
/// diagonal with the given intensity. W must be provided and positive
/// definite after shrinkage for MinT.
Eigen::MatrixXd reconcile(const Eigen::MatrixXd& base, ReconcileMethod method,
                          const Eigen::MatrixXd& S, const Eigen::MatrixXd& W = {},
                          double shrinkage = 0.1);

/// Mean squared error per hierarchy level, in first-appearance order of the
/// level names, followed by an "all" row holding the sum of the level rows.
struct LevelMse {
  std::string level;
  double mse = 0.0;
};
std::vector<LevelMse> per_level_mse(const Hierarchy& hierarchy,
                                    const Eigen::MatrixXd& forecasts,
                                    const Eigen::MatrixXd& actual);

// ---------------------------------------------------------------------------
// Two-level toy benchmark
// ---------------------------------------------------------------------------

/// Synthetic two-leaf hierarchy: Y1 = <X1, theta1> + e1,
/// Y2 = <X2, theta2> - e1 + e2 with e1 ~ N(0,1), e2 ~ N(0, sigma2^2), all
/// regressors and coefficients standard normal. Targets are (Y1, Y2, Y1+Y2).
struct ToyHierarchyInstance {
  Eigen::MatrixXd X1_train, X2_train, X1_test, X2_test;
  Eigen::MatrixXd Y_train, Y_test;  // n x 3
  Eigen::VectorXd theta1, theta2;
  double sigma2 = 0.0;
  int d = 0;
};

/// Deterministic per seed: the same seed yields bit-identical data.
ToyHierarchyInstance gen_toy_hierarchy(int d, Eigen::Index n_train, Eigen::Index n_test,
                                       double sigma2, std::uint64_t seed);

struct ToyBenchmarkConfig {
  int d = 20;
  Eigen::Index n_train = 80;
  Eigen::Index n_test = 20;
  std::vector<double> sigma2{0.25, 0.5, 0.75, 1.0};
  int runs = 200;
  std::vector<std::string> methods{"BU", "Rec", "MinT", "WeaKL"};
  std::uint64_t seed = 1;
  int workers = 1;
};

struct ToyBenchmarkRow {
  std::string method;
  double sigma2 = 0.0;
  double mse_y1 = 0.0;
  double mse_y2 = 0.0;
  double mse_total = 0.0;  // aggregate node
  double mse_hier = 0.0;   // sum of the three
  bool applicable = true;
  int runs = 0;
};

/// Paired Monte Carlo comparison of BU (independent least squares), Rec
/// (OLS projection of independent forecasts), MinT (covariance-weighted
/// projection) and WeaKL (joint bottom-up fit with M = 0 and
/// Lambda = Diag(1, 1, min(sigma2^{-2}, 1e8))). Every method sees the same
/// data in the same run. Rec and MinT are reported inapplicable when the
/// stacked aggregate regression is numerically rank-deficient or retains
/// fewer than 2*l1 residual degrees of freedom for estimating W.
std::vector<ToyBenchmarkRow> run_toy_benchmark(const ToyBenchmarkConfig& config);

/// Mean test error of a plain OLS fit of the aggregate Y1+Y2 on all 2d
/// regressors. `fixed_design` evaluates on the training inputs with an
/// independent noise draw (expectation exactly sigma2^2 (1 + 2d/n));
/// otherwise on fresh inputs.
double toy_ols_aggregate_mse(int d, Eigen::Index n, int runs, double sigma2,
                             std::uint64_t seed, bool fixed_design, int workers = 1);

}  // namespace weakl
