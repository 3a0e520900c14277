#include "weakl/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "weakl/parallel.hpp"

namespace weakl {

// ---------------------------------------------------------------------------
// Point metrics
// ---------------------------------------------------------------------------

Metric metric_from_string(const std::string& name) {
  if (name == "mse") return Metric::Mse;
  if (name == "rmse") return Metric::Rmse;
  if (name == "mae") return Metric::Mae;
  if (name == "mape") return Metric::Mape;
  throw ConfigError("unknown metric '" + name + "' (expected mse, rmse, mae, or mape)");
}

std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::Mse: return "mse";
    case Metric::Rmse: return "rmse";
    case Metric::Mae: return "mae";
    case Metric::Mape: return "mape";
  }
  return "mse";
}

namespace {

void check_pair(const Eigen::VectorXd& forecast, const Eigen::VectorXd& actual) {
  if (forecast.size() != actual.size())
    throw DataError("forecast and actual series differ in length (" +
                    std::to_string(forecast.size()) + " vs " + std::to_string(actual.size()) +
                    ")");
  if (forecast.size() == 0) throw DataError("cannot score an empty series");
}

}  // namespace

double score(Metric metric, const Eigen::VectorXd& forecast, const Eigen::VectorXd& actual) {
  check_pair(forecast, actual);
  const Eigen::ArrayXd err = (forecast - actual).array();
  switch (metric) {
    case Metric::Mse: return err.square().mean();
    case Metric::Rmse: return std::sqrt(err.square().mean());
    case Metric::Mae: return err.abs().mean();
    case Metric::Mape:
      if ((actual.array() == 0.0).any())
        throw DataError("mape undefined: actual series contains zeros");
      return (err.abs() / actual.array().abs()).mean();
  }
  return 0.0;
}

Metrics metrics(const Eigen::VectorXd& actual, const Eigen::VectorXd& forecast) {
  Metrics out;
  out.mse = score(Metric::Mse, forecast, actual);
  out.rmse = std::sqrt(out.mse);
  out.mae = score(Metric::Mae, forecast, actual);
  out.mape = score(Metric::Mape, forecast, actual);
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

namespace {

Eigen::Index default_block_length(Eigen::Index n) {
  return std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(std::pow(static_cast<double>(n), 0.25))));
}

double sorted_quantile(const std::vector<double>& sorted, double q) {
  const std::size_t B = sorted.size();
  if (B == 1) return sorted[0];
  const double pos = q * static_cast<double>(B - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, B - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

BootstrapSummary run_bootstrap(const Eigen::MatrixXd& Z, const Statistic& g,
                               const BootstrapConfig& config, bool stationary) {
  const Eigen::Index n = Z.rows();
  if (n == 0) throw DataError("cannot bootstrap an empty series");
  if (config.resamples < 1) throw ConfigError("bootstrap needs at least one resample");
  if (config.ci_level <= 0.0 || config.ci_level >= 1.0)
    throw ConfigError("confidence level must lie in (0, 1)");

  Eigen::Index len = stationary ? config.mean_block_length : config.block_length;
  if (len == 0) len = default_block_length(n);
  if (len < 1) throw ConfigError("block length must be >= 1");
  if (!stationary && len > n)
    throw DataError("block length " + std::to_string(len) + " exceeds series length " +
                    std::to_string(n));

  BootstrapSummary out;
  out.resamples = config.resamples;
  out.block_length = len;
  out.point = g(Z.colwise().mean().transpose());
  out.stats.resize(static_cast<std::size_t>(config.resamples));

  parallel_for(static_cast<std::size_t>(config.resamples), config.workers, [&](std::size_t b) {
    Rng rng(derive_seed(config.seed, b));
    const std::vector<Eigen::Index> idx = stationary
                                              ? stationary_bootstrap_indices(n, len, rng)
                                              : block_bootstrap_indices(n, len, rng);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(Z.cols());
    for (const Eigen::Index i : idx) mean += Z.row(i).transpose();
    mean /= static_cast<double>(idx.size());
    out.stats[b] = g(mean);
  });

  double acc = 0.0;
  for (const double s : out.stats) acc += s;
  const double mean_stat = acc / config.resamples;
  double var = 0.0;
  for (const double s : out.stats) var += (s - mean_stat) * (s - mean_stat);
  out.stddev = config.resamples > 1 ? std::sqrt(var / (config.resamples - 1)) : 0.0;

  std::vector<double> sorted = out.stats;
  std::sort(sorted.begin(), sorted.end());
  const double tail = (1.0 - config.ci_level) / 2.0;
  out.ci_lo = sorted_quantile(sorted, tail);
  out.ci_hi = sorted_quantile(sorted, 1.0 - tail);
  const double z = one_sided_z(tail);
  out.normal_lo = out.point - z * out.stddev;
  out.normal_hi = out.point + z * out.stddev;
  return out;
}

}  // namespace

std::vector<Eigen::Index> block_bootstrap_indices(Eigen::Index n, Eigen::Index block_length,
                                                  Rng& rng) {
  const Eigen::Index b = n / block_length + 1;
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(b * block_length));
  for (Eigen::Index k = 0; k < b && static_cast<Eigen::Index>(idx.size()) < n; ++k) {
    const Eigen::Index start =
        static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n - block_length + 1)));
    for (Eigen::Index i = 0; i < block_length && static_cast<Eigen::Index>(idx.size()) < n; ++i)
      idx.push_back(start + i);
  }
  return idx;
}

std::vector<Eigen::Index> stationary_bootstrap_indices(Eigen::Index n,
                                                       Eigen::Index mean_length, Rng& rng) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(n));
  const double p = 1.0 / static_cast<double>(mean_length);
  while (static_cast<Eigen::Index>(idx.size()) < n) {
    const Eigen::Index start = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    const std::uint64_t len = rng.geometric(p);
    for (std::uint64_t i = 0; i < len && static_cast<Eigen::Index>(idx.size()) < n; ++i)
      idx.push_back(static_cast<Eigen::Index>((start + static_cast<Eigen::Index>(i)) % n));
  }
  return idx;
}

BootstrapSummary block_bootstrap(const Eigen::MatrixXd& Z, const Statistic& g,
                                 const BootstrapConfig& config) {
  return run_bootstrap(Z, g, config, /*stationary=*/false);
}

BootstrapSummary stationary_bootstrap(const Eigen::MatrixXd& Z, const Statistic& g,
                                      const BootstrapConfig& config) {
  return run_bootstrap(Z, g, config, /*stationary=*/true);
}

BootstrapSummary bootstrap_metric(Metric metric, const Eigen::VectorXd& forecast,
                                  const Eigen::VectorXd& actual,
                                  const BootstrapConfig& config) {
  check_pair(forecast, actual);
  const Eigen::ArrayXd err = (forecast - actual).array();
  Eigen::MatrixXd Z(actual.size(), 1);
  Statistic g = [](const Eigen::VectorXd& m) { return m(0); };
  switch (metric) {
    case Metric::Mse: Z.col(0) = err.square(); break;
    case Metric::Rmse:
      Z.col(0) = err.square();
      g = [](const Eigen::VectorXd& m) { return std::sqrt(m(0)); };
      break;
    case Metric::Mae: Z.col(0) = err.abs(); break;
    case Metric::Mape:
      if ((actual.array() == 0.0).any())
        throw DataError("mape undefined: actual series contains zeros");
      Z.col(0) = err.abs() / actual.array().abs();
      break;
  }
  return config.scheme == BootstrapScheme::Stationary ? stationary_bootstrap(Z, g, config)
                                                      : block_bootstrap(Z, g, config);
}

// ---------------------------------------------------------------------------
// Skill comparison
// ---------------------------------------------------------------------------

double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw ConfigError("normal quantile needs p in (0, 1)");
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double one_sided_z(double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("alpha must lie in (0, 1)");
  if (std::abs(alpha - 0.10) < 1e-12) return 1.28;
  if (std::abs(alpha - 0.05) < 1e-12) return 1.64;
  if (std::abs(alpha - 0.01) < 1e-12) return 2.33;
  return normal_quantile(1.0 - alpha);
}

SkillResult skill_test(const Eigen::VectorXd& err1, const Eigen::VectorXd& err2,
                       const BootstrapConfig& config, double alpha) {
  if (err1.size() != err2.size())
    throw DataError("error series differ in length (" + std::to_string(err1.size()) + " vs " +
                    std::to_string(err2.size()) + ")");
  if (err1.size() == 0) throw DataError("cannot compare empty error series");

  Eigen::MatrixXd Z(err1.size(), 2);
  Z.col(0) = err1.cwiseAbs();
  Z.col(1) = err2.cwiseAbs();
  if (Z.col(1).mean() <= 0.0)
    throw DataError("reference MAE is zero: skill score undefined");

  // Degenerate resamples (all-zero reference block) carry no evidence.
  const Statistic g = [](const Eigen::VectorXd& m) {
    return m(1) > 0.0 ? 1.0 - m(0) / m(1) : 0.0;
  };
  SkillResult out;
  out.summary = config.scheme == BootstrapScheme::Stationary
                    ? stationary_bootstrap(Z, g, config)
                    : block_bootstrap(Z, g, config);
  out.skill = out.summary.point;
  out.sigma = out.summary.stddev;
  out.alpha = alpha;
  out.z = one_sided_z(alpha);
  out.ci_lower = out.skill - out.z * out.sigma;
  out.significant = out.ci_lower > 0.0;
  return out;
}

}  // namespace weakl
