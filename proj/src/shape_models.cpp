#include "weakl/shape_models.hpp"

#include <algorithm>
#include <cmath>

namespace weakl {

namespace {

PredictResult real_with_diagnostic(const Eigen::VectorXcd& values) {
  PredictResult out;
  out.values = values.real();
  out.max_imag = values.size() > 0 ? values.imag().cwiseAbs().maxCoeff() : 0.0;
  return out;
}

/// Fourier-in-time block (e^{ikt/2})_{|k|<=m} as a design row segment
/// (conjugated), optionally scaled.
Eigen::RowVectorXcd time_row(double t, int m, double scale = 1.0) {
  Eigen::RowVectorXcd row(2 * m + 1);
  for (int k = -m; k <= m; ++k) row(k + m) = scale * std::polar(1.0, -0.5 * k * t);
  return row;
}

std::string effect_label(const FeatureMapSpec& spec, std::size_t index,
                         const std::shared_ptr<const Preprocess>& prep) {
  if (!spec.label.empty()) return spec.label;
  if (prep && spec.inputs.size() == 1 &&
      spec.inputs[0] < static_cast<Eigen::Index>(prep->feature_names.size()))
    return prep->feature_names[spec.inputs[0]];
  return "effect " + std::to_string(index);
}

}  // namespace

std::vector<PenaltyBlock> default_penalty_blocks(const std::vector<FeatureMapSpec>& effects,
                                                 const Eigen::VectorXd& lambdas) {
  if (static_cast<Eigen::Index>(effects.size()) != lambdas.size())
    throw ConfigError("need exactly one penalty weight per effect");
  std::vector<PenaltyBlock> blocks;
  blocks.reserve(effects.size());
  for (std::size_t l = 0; l < effects.size(); ++l) {
    const auto& spec = effects[l];
    const double lambda = lambdas(l);
    switch (spec.kind) {
      case MapKind::Linear:
        blocks.push_back(ridge_block(1, lambda, spec.label));
        break;
      case MapKind::Fourier:
        blocks.push_back(sobolev_block(spec.m, static_cast<int>(spec.inputs.size()), spec.s,
                                       lambda, spec.label));
        break;
      case MapKind::Categorical:
        blocks.push_back(ridge_block(map_dim(spec), lambda, spec.label));
        break;
    }
  }
  return blocks;
}

AdditiveModel fit_additive(const Dataset& train, const AdditiveConfig& config) {
  if (config.effects.empty()) throw ConfigError("additive model needs at least one effect");
  if (train.d2() != 1)
    throw ConfigError("additive models are single-target; got d2 = " +
                      std::to_string(train.d2()));

  AdditiveModel model;
  model.effects = config.effects;
  model.lambdas = config.lambdas;
  model.prep = train.prep;

  // Fill in cardinalities and labels from the preprocessing when available.
  for (std::size_t l = 0; l < model.effects.size(); ++l) {
    auto& spec = model.effects[l];
    if (spec.kind == MapKind::Categorical && spec.cardinality == 0 && train.prep) {
      const Eigen::Index col = spec.inputs.at(0);
      if (col >= 0 && col < static_cast<Eigen::Index>(train.prep->categories.size()))
        spec.cardinality = train.prep->categories[col].cardinality();
    }
    spec.label = effect_label(spec, l, train.prep);
  }

  model.offsets = effect_offsets(model.effects);
  const Eigen::MatrixXcd design = stack_design(model.effects, train.X);
  const PenaltyMatrix penalty =
      assemble_block_penalty(default_penalty_blocks(model.effects, model.lambdas));
  const FitResult fit =
      fit_weakl(WeaklProblem::from_design(design, train.Y.col(0).cast<cplx>(), penalty));
  model.theta = fit.theta;
  model.diagnostics = fit.diagnostics;
  return model;
}

PredictResult AdditiveModel::predict_rows(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXcd design = stack_design(effects, X);
  return real_with_diagnostic(design * theta);
}

PredictResult AdditiveModel::predict(const Dataset& data) const {
  return predict_rows(data.X);
}

double AdditiveModel::effect_value(std::size_t l, const Eigen::VectorXd& encoded) const {
  if (l >= effects.size()) throw ConfigError("effect index out of range");
  const Eigen::VectorXcd phi = eval_map(effects[l], encoded);
  const Eigen::Index at = offsets[l];
  return (phi.adjoint() * theta.segment(at, phi.size())).value().real();
}

Eigen::VectorXd AdditiveModel::effect_curve(std::size_t l, const Eigen::VectorXd& raw_grid,
                                            double* max_imag) const {
  if (l >= effects.size()) throw ConfigError("effect index out of range");
  const auto& spec = effects[l];
  if (spec.inputs.size() != 1)
    throw ConfigError("effect curves are defined for single-input effects only");
  const Eigen::Index col = spec.inputs[0];

  Eigen::VectorXd curve(raw_grid.size());
  double imag = 0.0;
  for (Eigen::Index i = 0; i < raw_grid.size(); ++i) {
    double encoded = raw_grid(i);
    if (spec.kind != MapKind::Categorical) {
      if (!prep) throw ConfigError("effect curve on raw values needs the fitted preprocess");
      encoded = prep->rescalers[col].apply(raw_grid(i));
    }
    const Eigen::VectorXcd phi = eval_map(spec, Eigen::VectorXd::Constant(1, encoded));
    const cplx value = (phi.adjoint() * theta.segment(offsets[l], phi.size())).value();
    curve(i) = value.real();
    imag = std::max(imag, std::abs(value.imag()));
  }
  if (max_imag) *max_imag = imag;
  return curve;
}

// ---------------------------------------------------------------------------
// Group-split fitting
// ---------------------------------------------------------------------------

GroupAdditiveModel fit_additive_by_group(const Dataset& train, Eigen::Index key_column,
                                         const AdditiveConfig& config) {
  const GroupPartition part = group_partition(train, key_column);
  GroupAdditiveModel out;
  out.key_column = key_column;
  out.labels = part.labels;
  out.models.reserve(part.groups.size());
  for (std::size_t g = 0; g < part.groups.size(); ++g) {
    if (part.groups[g].n() == 0)
      throw DataError("group '" + part.labels[g] + "' has no training rows");
    out.models.push_back(fit_additive(part.groups[g], config));
  }
  return out;
}

PredictResult GroupAdditiveModel::predict(const Dataset& data) const {
  const GroupPartition part = group_partition(data, key_column);
  if (part.labels.size() != models.size())
    throw DataError("dataset groups differ from the fitted groups");
  PredictResult out;
  out.values.resize(data.n());
  for (std::size_t g = 0; g < part.groups.size(); ++g) {
    if (part.groups[g].n() == 0) continue;
    const PredictResult r = models[g].predict(part.groups[g]);
    for (Eigen::Index i = 0; i < r.values.size(); ++i)
      out.values(part.row_indices[g][static_cast<std::size_t>(i)]) = r.values(i);
    out.max_imag = std::max(out.max_imag, r.max_imag);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Online corrections
// ---------------------------------------------------------------------------

namespace {

struct OnlineLayout {
  std::vector<int> m;  // per block: [h0,] effect 1, ..., effect d1
  Eigen::Index dim = 0;
  std::vector<Eigen::Index> offsets;
};

OnlineLayout online_layout(const OnlineConfig& cfg, std::size_t n_effects) {
  const std::size_t expected = n_effects + (cfg.include_h0 ? 1 : 0);
  if (cfg.m.size() != expected)
    throw ConfigError("online model expects " + std::to_string(expected) +
                      " truncation entries, got " + std::to_string(cfg.m.size()));
  if (static_cast<std::size_t>(cfg.lambdas.size()) != expected)
    throw ConfigError("online model expects " + std::to_string(expected) +
                      " penalty weights, got " + std::to_string(cfg.lambdas.size()));
  OnlineLayout layout;
  layout.m = cfg.m;
  layout.offsets.resize(expected + 1, 0);
  for (std::size_t b = 0; b < expected; ++b) {
    if (cfg.m[b] < 0) throw ConfigError("online truncation entries must be >= 0");
    layout.offsets[b + 1] = layout.offsets[b] + 2 * cfg.m[b] + 1;
  }
  layout.dim = layout.offsets.back();
  return layout;
}

/// Design row for one observation: [time block | g_1 * time block | ...].
Eigen::RowVectorXcd online_row(const AdditiveModel& base, const OnlineConfig& cfg,
                               const OnlineLayout& layout, double t,
                               const Eigen::RowVectorXd& x, double* base_sum) {
  Eigen::RowVectorXcd row(layout.dim);
  std::size_t b = 0;
  if (cfg.include_h0) row.segment(layout.offsets[0], 2 * cfg.m[0] + 1) = time_row(t, cfg.m[b++]);
  double total = 0.0;
  for (std::size_t l = 0; l < base.effects.size(); ++l, ++b) {
    Eigen::VectorXd encoded(base.effects[l].inputs.size());
    for (std::size_t a = 0; a < base.effects[l].inputs.size(); ++a)
      encoded(a) = x(base.effects[l].inputs[a]);
    const double g = base.effect_value(l, encoded);
    total += g;
    row.segment(layout.offsets[b], 2 * cfg.m[b] + 1) = time_row(t, cfg.m[b], g);
  }
  if (base_sum) *base_sum = total;
  return row;
}

PenaltyMatrix online_penalty(const OnlineConfig& cfg, const OnlineLayout& layout,
                             const AdditiveModel& base) {
  std::vector<PenaltyBlock> blocks;
  std::size_t b = 0;
  if (cfg.include_h0) {
    blocks.push_back(sobolev_block(cfg.m[b], 1, cfg.s, cfg.lambdas(b), "h0"));
    ++b;
  }
  for (std::size_t l = 0; l < base.effects.size(); ++l, ++b)
    blocks.push_back(sobolev_block(cfg.m[b], 1, cfg.s, cfg.lambdas(b),
                                   "h:" + base.effects[l].label));
  return assemble_block_penalty(blocks);
}

void check_same_preprocess(const Dataset& data, const AdditiveModel& base) {
  if (!base.prep || !data.prep) return;
  if (base.prep == data.prep) return;
  if (base.prep->feature_names != data.prep->feature_names)
    throw ConfigError("dataset preprocessing does not match the base model's");
}

}  // namespace

OnlineModel fit_online(const Dataset& train, std::shared_ptr<const AdditiveModel> base,
                       const OnlineConfig& config) {
  if (!base) throw ConfigError("online model needs a base model");
  if (train.d2() != 1) throw ConfigError("online models are single-target");
  check_same_preprocess(train, *base);
  const OnlineLayout layout = online_layout(config, base->effects.size());

  Eigen::MatrixXcd design(train.n(), layout.dim);
  Eigen::VectorXcd w(train.n());
  for (Eigen::Index j = 0; j < train.n(); ++j) {
    double base_sum = 0.0;
    design.row(j) =
        online_row(*base, config, layout, train.time(j), train.X.row(j), &base_sum);
    w(j) = train.Y(j, 0) - base_sum;
  }

  OnlineModel model;
  model.base = std::move(base);
  model.config = config;
  model.offsets = layout.offsets;
  const FitResult fit = fit_weakl(
      WeaklProblem::from_design(design, w, online_penalty(config, layout, *model.base)));
  model.theta = fit.theta;
  model.diagnostics = fit.diagnostics;
  return model;
}

PredictResult OnlineModel::predict(const Dataset& data) const {
  check_same_preprocess(data, *base);
  const OnlineLayout layout = online_layout(config, base->effects.size());
  Eigen::VectorXcd values(data.n());
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    double base_sum = 0.0;
    const Eigen::RowVectorXcd row =
        online_row(*base, config, layout, data.time(j), data.X.row(j), &base_sum);
    values(j) = base_sum + (row * theta).value();
  }
  return real_with_diagnostic(values);
}

ForecastStream rolling_refit_online(const Dataset& full, Eigen::Index first_test,
                                    std::shared_ptr<const AdditiveModel> base,
                                    const OnlineConfig& config, const RollingPolicy& policy) {
  if (first_test < 0 || first_test > full.n())
    throw ConfigError("first test row out of range");
  if (policy.stride < 1) throw ConfigError("rolling stride must be >= 1");
  if (policy.window < 0) throw ConfigError("rolling window must be >= 0");

  ForecastStream stream;
  const Eigen::Index horizon = full.n() - first_test;
  stream.time_raw.resize(horizon);
  stream.predictions.resize(horizon);
  stream.actuals.resize(horizon);
  if (horizon == 0) return stream;

  OnlineModel model;
  for (Eigen::Index step = 0; step < horizon; ++step) {
    const Eigen::Index t = first_test + step;
    if (step % policy.stride == 0) {
      const Eigen::Index begin = policy.window > 0 ? t - policy.window : 0;
      if (begin < 0)
        throw DataError("rolling window longer than available history at step " +
                        std::to_string(step));
      if (t - begin < 1) throw DataError("rolling refit has no history to fit on");
      model = fit_online(full.rows(begin, t), base, config);
    }
    const Dataset row = full.rows(t, t + 1);
    const PredictResult pred = model.predict(row);
    stream.time_raw(step) = full.time_raw(t);
    stream.predictions(step) = pred.values(0);
    stream.actuals(step) = full.d2() == 1 ? full.Y(t, 0) : 0.0;
    stream.max_imag = std::max(stream.max_imag, pred.max_imag);
  }
  return stream;
}

// ---------------------------------------------------------------------------
// Forecast combination
// ---------------------------------------------------------------------------

namespace {

Eigen::RowVectorXcd combination_row(double t, const Eigen::RowVectorXd& experts, int m) {
  const Eigen::Index p = experts.size();
  Eigen::RowVectorXcd row(p * (2 * m + 1));
  for (Eigen::Index l = 0; l < p; ++l)
    row.segment(l * (2 * m + 1), 2 * m + 1) = time_row(t, m, experts(l));
  return row;
}

}  // namespace

CombinationModel fit_combination(const Eigen::VectorXd& time_scaled,
                                 const Eigen::MatrixXd& experts, const Eigen::VectorXd& y,
                                 const CombinationConfig& config) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = experts.cols();
  if (p < 1) throw ConfigError("forecast combination needs at least one expert");
  if (experts.rows() != n || time_scaled.size() != n)
    throw DataError("expert streams, targets and timestamps must have equal length");
  if (config.m < 0) throw ConfigError("combination truncation m must be >= 0");
  if (config.lambdas.size() != p)
    throw ConfigError("forecast combination needs one penalty weight per expert");
  if (!experts.allFinite() || !y.allFinite())
    throw NumericalError("non-finite values in the combination inputs");

  CombinationModel model;
  model.config = config;
  model.p = p;
  model.offsets.resize(p + 1);
  for (Eigen::Index l = 0; l <= p; ++l) model.offsets[l] = l * (2 * config.m + 1);

  Eigen::MatrixXcd design(n, p * (2 * config.m + 1));
  Eigen::VectorXcd w(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    design.row(j) = combination_row(time_scaled(j), experts.row(j), config.m);
    w(j) = y(j) - experts.row(j).mean();
  }

  std::vector<PenaltyBlock> blocks;
  for (Eigen::Index l = 0; l < p; ++l)
    blocks.push_back(sobolev_block(config.m, 1, config.s, config.lambdas(l),
                                   "expert " + std::to_string(l)));
  const FitResult fit =
      fit_weakl(WeaklProblem::from_design(design, w, assemble_block_penalty(blocks)));
  model.theta = fit.theta;
  model.diagnostics = fit.diagnostics;
  return model;
}

PredictResult CombinationModel::predict(const Eigen::VectorXd& time_scaled,
                                        const Eigen::MatrixXd& experts) const {
  if (experts.cols() != p) throw ConfigError("expert count differs from the fitted model");
  if (experts.rows() != time_scaled.size())
    throw DataError("expert streams and timestamps must have equal length");
  Eigen::VectorXcd values(experts.rows());
  for (Eigen::Index j = 0; j < experts.rows(); ++j) {
    const Eigen::RowVectorXcd row = combination_row(time_scaled(j), experts.row(j), config.m);
    values(j) = experts.row(j).mean() + (row * theta).value();
  }
  return real_with_diagnostic(values);
}

}  // namespace weakl
