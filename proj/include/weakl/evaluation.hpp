#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "weakl/common.hpp"
#include "weakl/rng.hpp"

namespace weakl {

// ---------------------------------------------------------------------------
// Point metrics
// ---------------------------------------------------------------------------

struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;
};

enum class Metric { Mse, Rmse, Mae, Mape };

Metric metric_from_string(const std::string& name);
std::string metric_name(Metric metric);

/// Single metric of `forecast` against `actual`. Mape is the plain ratio
/// mean(|f - a| / |a|), not a percentage, and requires nonzero actuals.
double score(Metric metric, const Eigen::VectorXd& forecast, const Eigen::VectorXd& actual);

/// All four metrics at once; throws DataError when `actual` contains a zero
/// (mape undefined there).
Metrics metrics(const Eigen::VectorXd& actual, const Eigen::VectorXd& forecast);

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

enum class BootstrapScheme { FixedBlock, Stationary };

struct BootstrapConfig {
  BootstrapScheme scheme = BootstrapScheme::FixedBlock;
  Eigen::Index block_length = 0;       // fixed mode; 0 -> floor(n^(1/4)), min 1
  Eigen::Index mean_block_length = 0;  // stationary mode; 0 -> same default
  int resamples = 1000;
  std::uint64_t seed = 1;
  int workers = 1;
  double ci_level = 0.9;  // two-sided quantile interval level
};

struct BootstrapSummary {
  double point = 0.0;    // statistic of the full-sample mean
  double stddev = 0.0;   // standard deviation over resample statistics
  double ci_lo = 0.0;    // quantile interval over resample statistics
  double ci_hi = 0.0;
  double normal_lo = 0.0;  // point +- z * stddev at the same level
  double normal_hi = 0.0;
  int resamples = 0;
  Eigen::Index block_length = 0;  // resolved length (mean length in stationary mode)
  std::vector<double> stats;      // resample statistics in resample order
};

/// Statistic applied to the mean of the (possibly vector-valued) series.
using Statistic = std::function<double(const Eigen::VectorXd&)>;

/// Index sets drawn by one resample; exposed for property tests.
/// Fixed mode: floor(n/len)+1 contiguous non-circular blocks, truncated to n.
std::vector<Eigen::Index> block_bootstrap_indices(Eigen::Index n, Eigen::Index block_length,
                                                  Rng& rng);
/// Stationary mode: geometric block lengths with the given mean, circular.
std::vector<Eigen::Index> stationary_bootstrap_indices(Eigen::Index n,
                                                       Eigen::Index mean_length, Rng& rng);

/// Z holds one observation per row. Each resample recomputes g on the mean of
/// the resampled rows; the summary is a pure function of (Z, config.seed).
BootstrapSummary block_bootstrap(const Eigen::MatrixXd& Z, const Statistic& g,
                                 const BootstrapConfig& config);
BootstrapSummary stationary_bootstrap(const Eigen::MatrixXd& Z, const Statistic& g,
                                      const BootstrapConfig& config);

/// Convenience wrapper: bootstrap one metric of a forecast/actual pair.
BootstrapSummary bootstrap_metric(Metric metric, const Eigen::VectorXd& forecast,
                                  const Eigen::VectorXd& actual,
                                  const BootstrapConfig& config);

// ---------------------------------------------------------------------------
// Skill comparison
// ---------------------------------------------------------------------------

/// One-sided critical value. Pinned to 1.28 / 1.64 / 2.33 for alpha = 0.1 /
/// 0.05 / 0.01; other levels evaluate the inverse normal CDF.
double one_sided_z(double alpha);

/// Inverse standard-normal CDF (rational approximation, |rel err| < 2e-9).
double normal_quantile(double p);

struct SkillResult {
  double skill = 0.0;     // 1 - MAE1/MAE2 on the full sample
  double sigma = 0.0;     // bootstrap standard deviation of the skill
  double ci_lower = 0.0;  // skill - z * sigma
  bool significant = false;
  double z = 0.0;
  double alpha = 0.1;
  BootstrapSummary summary;
};

/// Compares two error series against the same truth: positive skill means the
/// first forecast has the smaller MAE. Inputs may be signed errors; absolute
/// values are taken. Bootstraps the paired series (|e1_t|, |e2_t|) with
/// g(x, y) = 1 - x/y so both means move together under resampling.
SkillResult skill_test(const Eigen::VectorXd& err1, const Eigen::VectorXd& err2,
                       const BootstrapConfig& config, double alpha = 0.1);

}  // namespace weakl
