#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "weakl/common.hpp"
#include "weakl/data.hpp"

namespace weakl {

enum class MapKind { Linear, Fourier, Categorical };

/// One additive effect: which columns it reads and which basis it expands
/// them in.
///
///  - Linear: identity on one column, output dimension 1.
///  - Fourier: x maps to (exp(i<x,k>/2)) over the grid ||k||_inf <= m, so the
///    basis has period 4*pi and dimension (2m+1)^q for q input columns.
///  - Categorical: the 1-based category index is placed uniformly on
///    [-pi, pi] and expanded in the Fourier basis with m = floor(|E|/2),
///    giving dimension 2*floor(|E|/2) + 1. The basis is kept full (spanning)
///    even when |E| is even.
struct FeatureMapSpec {
  MapKind kind = MapKind::Linear;
  std::vector<Eigen::Index> inputs;  // feature column indices
  int m = 0;                         // Fourier truncation
  int s = 2;                         // Sobolev smoothness used by the default penalty
  int cardinality = 0;               // categorical |E|
  std::string label;                 // optional name for diagnostics
};

/// Output dimension of one spec.
Eigen::Index map_dim(const FeatureMapSpec& spec);

/// Frequency grid {-m..m}^q in canonical order: odometer with the first axis
/// slowest, so the last axis ticks fastest and each axis runs -m..m. Row r of
/// the result is the exponent vector of basis entry r. The Sobolev penalty
/// uses the same enumeration, which keeps penalties aligned with coefficients.
Eigen::MatrixXi frequency_grid(int m, int q);

/// Evaluates phi(x) for the values `x` of the spec's input columns (encoded
/// scale). Categorical values must be valid 1-based indices.
Eigen::VectorXcd eval_map(const FeatureMapSpec& spec, const Eigen::VectorXd& x);

/// Concatenated evaluation of several effects against a full feature row.
Eigen::VectorXcd eval_effects(const std::vector<FeatureMapSpec>& effects,
                              const Eigen::RowVectorXd& row);

Eigen::Index effects_dim(const std::vector<FeatureMapSpec>& effects);

/// Offsets of each effect inside the concatenated coefficient vector
/// (size effects.size() + 1, last entry = total dimension).
std::vector<Eigen::Index> effect_offsets(const std::vector<FeatureMapSpec>& effects);

/// Feature matrix of one observation for a d2-dimensional model: block
/// diagonal, row l holding phi_l(X_t)^* in its block. Multiplying by theta
/// yields the d2 model outputs.
Eigen::MatrixXcd build_feature_matrix(const std::vector<std::vector<FeatureMapSpec>>& per_target,
                                      const Eigen::RowVectorXd& row);

/// Stacked design for d2 = 1: n x dim matrix whose row j is phi(X_{t_j})^*,
/// so predictions are design * theta.
Eigen::MatrixXcd stack_design(const std::vector<FeatureMapSpec>& effects, const Dataset& data);

/// Same, against an explicit feature matrix (n x d1, encoded scale).
Eigen::MatrixXcd stack_design(const std::vector<FeatureMapSpec>& effects,
                              const Eigen::MatrixXd& X);

}  // namespace weakl
