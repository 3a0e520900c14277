#include "weakl/feature_maps.hpp"

#include <cmath>

namespace weakl {

namespace {

void check_spec(const FeatureMapSpec& spec) {
  switch (spec.kind) {
    case MapKind::Linear:
      if (spec.inputs.size() != 1)
        throw ConfigError("linear map needs exactly one input column, got " +
                          std::to_string(spec.inputs.size()));
      break;
    case MapKind::Fourier:
      if (spec.inputs.empty()) throw ConfigError("fourier map needs at least one input column");
      if (spec.m < 0) throw ConfigError("fourier truncation m must be >= 0");
      break;
    case MapKind::Categorical:
      if (spec.inputs.size() != 1)
        throw ConfigError("categorical map needs exactly one input column");
      if (spec.cardinality < 1) throw ConfigError("categorical map needs cardinality >= 1");
      break;
  }
}

Eigen::Index ipow(Eigen::Index base, int exp) {
  Eigen::Index r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

/// phi entries exp(i * <x, k> / 2) over the canonical grid.
Eigen::VectorXcd fourier_eval(const Eigen::VectorXd& x, int m) {
  const int q = static_cast<int>(x.size());
  const Eigen::Index width = 2 * m + 1;
  const Eigen::Index dim = ipow(width, q);
  Eigen::VectorXcd phi(dim);
  Eigen::VectorXi digits = Eigen::VectorXi::Zero(q);
  for (Eigen::Index r = 0; r < dim; ++r) {
    double angle = 0.0;
    for (int a = 0; a < q; ++a) angle += (digits(a) - m) * x(a);
    phi(r) = std::polar(1.0, 0.5 * angle);
    for (int a = q - 1; a >= 0; --a) {  // last axis fastest
      if (++digits(a) < width) break;
      digits(a) = 0;
    }
  }
  return phi;
}

}  // namespace

Eigen::MatrixXi frequency_grid(int m, int q) {
  if (m < 0 || q < 1) throw ConfigError("frequency_grid needs m >= 0 and q >= 1");
  const Eigen::Index width = 2 * m + 1;
  const Eigen::Index dim = ipow(width, q);
  Eigen::MatrixXi grid(dim, q);
  Eigen::VectorXi digits = Eigen::VectorXi::Zero(q);
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (int a = 0; a < q; ++a) grid(r, a) = digits(a) - m;
    for (int a = q - 1; a >= 0; --a) {
      if (++digits(a) < width) break;
      digits(a) = 0;
    }
  }
  return grid;
}

Eigen::Index map_dim(const FeatureMapSpec& spec) {
  check_spec(spec);
  switch (spec.kind) {
    case MapKind::Linear:
      return 1;
    case MapKind::Fourier:
      return ipow(2 * spec.m + 1, static_cast<int>(spec.inputs.size()));
    case MapKind::Categorical:
      return 2 * (spec.cardinality / 2) + 1;
  }
  return 0;
}

Eigen::VectorXcd eval_map(const FeatureMapSpec& spec, const Eigen::VectorXd& x) {
  check_spec(spec);
  if (x.size() != static_cast<Eigen::Index>(spec.inputs.size()))
    throw ConfigError("eval_map: expected " + std::to_string(spec.inputs.size()) +
                      " values, got " + std::to_string(x.size()));
  switch (spec.kind) {
    case MapKind::Linear:
      return Eigen::VectorXcd::Constant(1, cplx(x(0), 0.0));
    case MapKind::Fourier:
      return fourier_eval(x, spec.m);
    case MapKind::Categorical: {
      const int E = spec.cardinality;
      const double raw = x(0);
      const int psi = static_cast<int>(raw);
      if (raw != psi || psi < 1 || psi > E)
        throw DataError("categorical value " + std::to_string(raw) +
                        " is not a category index in 1.." + std::to_string(E));
      Eigen::VectorXd u(1);
      u(0) = E == 1 ? 0.0 : -pi + 2.0 * pi * (psi - 1) / (E - 1);
      return fourier_eval(u, E / 2);
    }
  }
  return {};
}

Eigen::Index effects_dim(const std::vector<FeatureMapSpec>& effects) {
  Eigen::Index dim = 0;
  for (const auto& spec : effects) dim += map_dim(spec);
  return dim;
}

std::vector<Eigen::Index> effect_offsets(const std::vector<FeatureMapSpec>& effects) {
  std::vector<Eigen::Index> offsets(effects.size() + 1, 0);
  for (std::size_t i = 0; i < effects.size(); ++i) offsets[i + 1] = offsets[i] + map_dim(effects[i]);
  return offsets;
}

Eigen::VectorXcd eval_effects(const std::vector<FeatureMapSpec>& effects,
                              const Eigen::RowVectorXd& row) {
  Eigen::VectorXcd phi(effects_dim(effects));
  Eigen::Index at = 0;
  for (const auto& spec : effects) {
    Eigen::VectorXd x(spec.inputs.size());
    for (std::size_t a = 0; a < spec.inputs.size(); ++a) {
      const Eigen::Index col = spec.inputs[a];
      if (col < 0 || col >= row.size())
        throw ConfigError("effect input column " + std::to_string(col) + " out of range");
      x(a) = row(col);
    }
    const Eigen::VectorXcd block = eval_map(spec, x);
    phi.segment(at, block.size()) = block;
    at += block.size();
  }
  return phi;
}

Eigen::MatrixXcd build_feature_matrix(const std::vector<std::vector<FeatureMapSpec>>& per_target,
                                      const Eigen::RowVectorXd& row) {
  const Eigen::Index d2 = static_cast<Eigen::Index>(per_target.size());
  if (d2 < 1) throw ConfigError("build_feature_matrix: no targets");
  Eigen::Index dim = 0;
  for (const auto& effects : per_target) dim += effects_dim(effects);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d2, dim);
  Eigen::Index at = 0;
  for (Eigen::Index l = 0; l < d2; ++l) {
    const Eigen::VectorXcd phi = eval_effects(per_target[l], row);
    out.row(l).segment(at, phi.size()) = phi.adjoint();
    at += phi.size();
  }
  return out;
}

Eigen::MatrixXcd stack_design(const std::vector<FeatureMapSpec>& effects,
                              const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  if (n < 1) throw DataError("stack_design: empty dataset");
  Eigen::MatrixXcd design(n, effects_dim(effects));
  for (Eigen::Index j = 0; j < n; ++j)
    design.row(j) = eval_effects(effects, X.row(j)).adjoint();
  return design;
}

Eigen::MatrixXcd stack_design(const std::vector<FeatureMapSpec>& effects, const Dataset& data) {
  if (data.d2() > 1)
    throw ConfigError("stack_design expects a single-target dataset (d2 = 1), got d2 = " +
                      std::to_string(data.d2()));
  return stack_design(effects, data.X);
}

}  // namespace weakl
