#pragma once

#include <Eigen/Dense>

#include <memory>
#include <vector>

#include "weakl/data.hpp"
#include "weakl/feature_maps.hpp"
#include "weakl/solver.hpp"

namespace weakl {

struct PredictResult {
  Eigen::VectorXd values;
  double max_imag = 0.0;  // largest imaginary residue dropped when taking real parts
};

// ---------------------------------------------------------------------------
// Additive model: y ~ sum_l g_l(x_l)
// ---------------------------------------------------------------------------

struct AdditiveConfig {
  std::vector<FeatureMapSpec> effects;
  Eigen::VectorXd lambdas;  // one penalty weight per effect
};

/// Fitted additive model. Each effect carries its default penalty block:
/// ridge for linear, Sobolev for Fourier, ridge (identity) for categorical.
struct AdditiveModel {
  std::vector<FeatureMapSpec> effects;
  Eigen::VectorXd lambdas;
  Eigen::VectorXcd theta;
  std::vector<Eigen::Index> offsets;  // effect -> coefficient range
  std::shared_ptr<const Preprocess> prep;
  FitDiagnostics diagnostics;

  PredictResult predict(const Dataset& data) const;
  PredictResult predict_rows(const Eigen::MatrixXd& X) const;

  /// g_l at one encoded input value (vector for multi-input effects).
  double effect_value(std::size_t l, const Eigen::VectorXd& encoded) const;

  /// g_l sampled on a grid of raw (original unit) values; single-input
  /// effects only. Categorical effects take category indices 1..|E|.
  /// The summed curves reproduce predict() exactly.
  Eigen::VectorXd effect_curve(std::size_t l, const Eigen::VectorXd& raw_grid,
                               double* max_imag = nullptr) const;
};

/// Penalty blocks the shape models attach to each effect kind.
std::vector<PenaltyBlock> default_penalty_blocks(const std::vector<FeatureMapSpec>& effects,
                                                 const Eigen::VectorXd& lambdas);

AdditiveModel fit_additive(const Dataset& train, const AdditiveConfig& config);

// ---------------------------------------------------------------------------
// Group-split fitting: one additive model per category of a key column
// ---------------------------------------------------------------------------

/// Independent additive fits per group key value (e.g. one model per
/// half-hour of the day), all sharing the same effect configuration.
struct GroupAdditiveModel {
  Eigen::Index key_column = -1;
  std::vector<std::string> labels;    // category labels, training order
  std::vector<AdditiveModel> models;  // aligned with labels

  /// Routes each row to its group's model; rows keep their input order.
  PredictResult predict(const Dataset& data) const;
};

/// Every category of the key column must have at least one training row.
GroupAdditiveModel fit_additive_by_group(const Dataset& train, Eigen::Index key_column,
                                         const AdditiveConfig& config);

// ---------------------------------------------------------------------------
// Online model: time-varying corrections around a frozen additive base
// ---------------------------------------------------------------------------

/// Corrections are Fourier expansions in rescaled time. With h0 enabled the
/// model is h0(t) + sum_l (1 + h_l(t)) g_l(x_l); m and lambdas then carry a
/// leading entry for h0 followed by one entry per base effect.
struct OnlineConfig {
  std::vector<int> m;
  Eigen::VectorXd lambdas;
  int s = 2;
  bool include_h0 = true;
};

struct OnlineModel {
  std::shared_ptr<const AdditiveModel> base;
  OnlineConfig config;
  Eigen::VectorXcd theta;
  std::vector<Eigen::Index> offsets;
  FitDiagnostics diagnostics;

  PredictResult predict(const Dataset& data) const;
};

/// Fits the corrections on the residuals W_t = y_t - sum_l g_l(x_l) of the
/// frozen base model. The dataset must use the base model's preprocessing.
OnlineModel fit_online(const Dataset& train, std::shared_ptr<const AdditiveModel> base,
                       const OnlineConfig& config);

// ---------------------------------------------------------------------------
// Rolling refit
// ---------------------------------------------------------------------------

/// window = 0 keeps all history since the first row; otherwise the trailing
/// `window` rows. Corrections are refitted every `stride` test steps.
struct RollingPolicy {
  Eigen::Index window = 0;
  Eigen::Index stride = 1;
};

struct ForecastStream {
  Eigen::VectorXd time_raw;
  Eigen::VectorXd predictions;
  Eigen::VectorXd actuals;
  double max_imag = 0.0;
};

/// One-step-ahead forecasts for rows [first_test, n): at each step the online
/// corrections are refitted on the trailing window ending just before the
/// step (base stays frozen). Returns an empty stream when first_test == n.
ForecastStream rolling_refit_online(const Dataset& full, Eigen::Index first_test,
                                    std::shared_ptr<const AdditiveModel> base,
                                    const OnlineConfig& config, const RollingPolicy& policy);

// ---------------------------------------------------------------------------
// Forecast combination
// ---------------------------------------------------------------------------

/// Aggregates p expert forecast streams with slowly varying weights:
/// prediction_t = sum_l (1/p + h_l(t)) expert_l(t), the h_l Fourier in time.
struct CombinationConfig {
  int m = 0;
  int s = 2;
  Eigen::VectorXd lambdas;  // one per expert
};

struct CombinationModel {
  CombinationConfig config;
  Eigen::Index p = 0;
  Eigen::VectorXcd theta;
  std::vector<Eigen::Index> offsets;
  FitDiagnostics diagnostics;
  Rescaler time_rescaler;                  // raw time -> fitted torus scale
  std::vector<std::string> expert_labels;  // optional deployment metadata

  PredictResult predict(const Eigen::VectorXd& time_scaled,
                        const Eigen::MatrixXd& experts) const;
};

CombinationModel fit_combination(const Eigen::VectorXd& time_scaled,
                                 const Eigen::MatrixXd& experts, const Eigen::VectorXd& y,
                                 const CombinationConfig& config);

}  // namespace weakl
