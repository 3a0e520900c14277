#include "weakl/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "weakl/constraints.hpp"
#include "weakl/parallel.hpp"
#include "weakl/rng.hpp"
#include "weakl/shape_models.hpp"

namespace weakl {

// ---------------------------------------------------------------------------
// Summation matrix
// ---------------------------------------------------------------------------

Eigen::Index Hierarchy::find(const std::string& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<Eigen::Index>(i);
  return -1;
}

Hierarchy build_summation_matrix(const std::vector<HierNodeRow>& rows) {
  const std::size_t N = rows.size();
  if (N == 0) throw ConfigError("hierarchy definition is empty");

  std::unordered_map<std::string, std::size_t> by_label;
  for (std::size_t i = 0; i < N; ++i) {
    if (rows[i].node.empty()) throw ConfigError("hierarchy row with empty node id");
    if (!by_label.emplace(rows[i].node, i).second)
      throw ConfigError("duplicate hierarchy node '" + rows[i].node + "'");
  }

  std::vector<Eigen::Index> parent(N, -1);
  std::vector<bool> has_child(N, false);
  for (std::size_t i = 0; i < N; ++i) {
    if (rows[i].parent.empty()) continue;
    const auto it = by_label.find(rows[i].parent);
    if (it == by_label.end())
      throw ConfigError("hierarchy node '" + rows[i].node + "' references unknown parent '" +
                        rows[i].parent + "'");
    parent[i] = static_cast<Eigen::Index>(it->second);
    has_child[it->second] = true;
  }

  std::vector<Eigen::Index> depth(N, 0);
  for (std::size_t i = 0; i < N; ++i) {
    Eigen::Index at = static_cast<Eigen::Index>(i);
    Eigen::Index steps = 0;
    while (parent[at] >= 0) {
      at = parent[at];
      if (++steps > static_cast<Eigen::Index>(N))
        throw ConfigError("cycle detected in hierarchy at node '" + rows[i].node + "'");
    }
    depth[i] = steps;
  }

  // Canonical order: bottoms in input order, aggregates deepest-first, roots last.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < N; ++i)
    if (!has_child[i]) order.push_back(i);
  const std::size_t l2 = order.size();
  std::vector<std::size_t> aggregates;
  for (std::size_t i = 0; i < N; ++i)
    if (has_child[i]) aggregates.push_back(i);
  std::stable_sort(aggregates.begin(), aggregates.end(),
                   [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });
  order.insert(order.end(), aggregates.begin(), aggregates.end());

  std::vector<Eigen::Index> position(N);
  for (std::size_t p = 0; p < N; ++p) position[order[p]] = static_cast<Eigen::Index>(p);

  Hierarchy h;
  h.labels.resize(N);
  h.levels.resize(N);
  h.parent.resize(N);
  h.S = Eigen::MatrixXd::Zero(N, l2);
  for (std::size_t p = 0; p < N; ++p) {
    const std::size_t i = order[p];
    h.labels[p] = rows[i].node;
    h.levels[p] = rows[i].level;
    h.parent[p] = parent[i] < 0 ? -1 : position[parent[i]];
  }
  // Each bottom node contributes to itself and every ancestor.
  for (std::size_t b = 0; b < l2; ++b) {
    Eigen::Index at = static_cast<Eigen::Index>(b);
    h.S(at, b) = 1.0;
    while (h.parent[at] >= 0) {
      at = h.parent[at];
      h.S(at, b) = 1.0;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Hierarchical fits
// ---------------------------------------------------------------------------

namespace {

struct NodeDesign {
  std::vector<Eigen::MatrixXcd> blocks;  // per time step, L x dim
  std::vector<Eigen::Index> offsets;     // per node
  PenaltyMatrix penalty;
};

NodeDesign build_node_design(const Eigen::MatrixXd& X,
                             const std::vector<std::vector<FeatureMapSpec>>& node_effects,
                             const std::vector<Eigen::VectorXd>& node_lambdas,
                             const std::vector<std::string>& labels) {
  if (node_effects.size() != node_lambdas.size())
    throw ConfigError("need one penalty weight vector per node");
  NodeDesign out;
  out.offsets.resize(node_effects.size() + 1, 0);
  std::vector<PenaltyBlock> blocks;
  for (std::size_t l = 0; l < node_effects.size(); ++l) {
    if (node_effects[l].empty())
      throw ConfigError("node '" + labels[l] + "' has no effects");
    out.offsets[l + 1] = out.offsets[l] + effects_dim(node_effects[l]);
    auto node_blocks = default_penalty_blocks(node_effects[l], node_lambdas[l]);
    for (auto& b : node_blocks) {
      b.label = labels[l] + ":" + (b.label.empty() ? "effect" : b.label);
      blocks.push_back(std::move(b));
    }
  }
  out.penalty = assemble_block_penalty(blocks);

  out.blocks.reserve(X.rows());
  for (Eigen::Index j = 0; j < X.rows(); ++j)
    out.blocks.push_back(build_feature_matrix(node_effects, X.row(j)));
  return out;
}

void check_hier_inputs(const Dataset& train, const Hierarchy& h, const HierConfig& cfg,
                       bool per_bottom) {
  const Eigen::Index expected = per_bottom ? h.l2() : h.l1();
  if (static_cast<Eigen::Index>(cfg.node_effects.size()) != expected)
    throw ConfigError("expected effects for " + std::to_string(expected) + " nodes, got " +
                      std::to_string(cfg.node_effects.size()));
  if (train.d2() != h.l1())
    throw ConfigError("targets must carry all " + std::to_string(h.l1()) +
                      " node series in canonical order, got " + std::to_string(train.d2()));
  if (cfg.lambda_weights.size() > 0 && cfg.lambda_weights.size() != h.l1())
    throw ConfigError("Lambda needs one weight per node");
  if (cfg.lambda_weights.size() > 0 && (cfg.lambda_weights.array() < 0.0).any())
    throw ConfigError("Lambda weights must be >= 0");
}

std::vector<std::string> node_labels(const Hierarchy& h, Eigen::Index count) {
  std::vector<std::string> out(h.labels.begin(), h.labels.begin() + count);
  return out;
}

HierModel finish_fit(HierFamily family, const Dataset& train, const Hierarchy& h,
                     const HierConfig& cfg, NodeDesign&& design, WeaklProblem&& problem) {
  const FitResult fit = fit_weakl(problem);
  HierModel model;
  model.family = family;
  model.hierarchy = h;
  model.node_effects = cfg.node_effects;
  model.node_lambdas = cfg.node_lambdas;
  model.theta = fit.theta;
  model.node_offsets = std::move(design.offsets);
  model.prep = train.prep;
  model.diagnostics = fit.diagnostics;
  return model;
}

}  // namespace

HierModel fit_weakl_bu(const Dataset& train, const Hierarchy& hierarchy,
                       const HierConfig& config) {
  check_hier_inputs(train, hierarchy, config, /*per_bottom=*/true);
  NodeDesign design = build_node_design(train.X, config.node_effects, config.node_lambdas,
                                        node_labels(hierarchy, hierarchy.l2()));
  const Eigen::MatrixXcd Sc = hierarchy.S.cast<cplx>();
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(design.blocks.size());
  for (const auto& phi : design.blocks) blocks.push_back(Sc * phi);
  WeaklProblem problem = WeaklProblem::from_blocks(
      std::move(blocks), train.Y.cast<cplx>(), design.penalty, config.lambda_weights);
  return finish_fit(HierFamily::BottomUp, train, hierarchy, config, std::move(design),
                    std::move(problem));
}

HierModel fit_weakl_g(const Dataset& train, const Hierarchy& hierarchy,
                      const HierConfig& config) {
  check_hier_inputs(train, hierarchy, config, /*per_bottom=*/false);
  if (config.gamma_weights.size() > 0 && config.gamma_weights.size() != hierarchy.l1())
    throw ConfigError("Gamma needs one weight per node");
  NodeDesign design = build_node_design(train.X, config.node_effects, config.node_lambdas,
                                        node_labels(hierarchy, hierarchy.l1()));

  const Eigen::Index l1 = hierarchy.l1();
  const Eigen::Index l2 = hierarchy.l2();
  Eigen::MatrixXd coherence_gap = -Eigen::MatrixXd::Identity(l1, l1);
  coherence_gap.leftCols(l2) += hierarchy.S;  // S Pi_b - I with bottom-first order
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Identity(l1, l1);
  if (config.gamma_weights.size() > 0) gamma = config.gamma_weights.asDiagonal();
  const Eigen::MatrixXcd top_weight =
      config.lambda_weights.size() > 0
          ? Eigen::MatrixXcd(config.lambda_weights.cast<cplx>().asDiagonal())
          : Eigen::MatrixXcd(Eigen::MatrixXcd::Identity(l1, l1));
  const Eigen::MatrixXcd gap_weight = (gamma * coherence_gap).cast<cplx>();

  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(design.blocks.size());
  Eigen::MatrixXcd targets(train.n(), 2 * l1);
  for (Eigen::Index j = 0; j < train.n(); ++j) {
    Eigen::MatrixXcd stacked(2 * l1, design.blocks[j].cols());
    stacked.topRows(l1) = top_weight * design.blocks[j];
    stacked.bottomRows(l1) = gap_weight * design.blocks[j];
    blocks.push_back(std::move(stacked));
    targets.row(j).head(l1) =
        (top_weight * train.Y.row(j).transpose().cast<cplx>()).transpose();
    targets.row(j).tail(l1).setZero();
  }
  WeaklProblem problem =
      WeaklProblem::from_blocks(std::move(blocks), std::move(targets), design.penalty);
  return finish_fit(HierFamily::Coherency, train, hierarchy, config, std::move(design),
                    std::move(problem));
}

HierModel fit_weakl_t(const Dataset& train, const Hierarchy& hierarchy,
                      const HierConfig& config) {
  check_hier_inputs(train, hierarchy, config, /*per_bottom=*/true);
  if (config.transfer_nodes.size() < 2)
    throw ConfigError("transfer fit needs at least two bottom nodes in the transfer set");
  NodeDesign design = build_node_design(train.X, config.node_effects, config.node_lambdas,
                                        node_labels(hierarchy, hierarchy.l2()));

  std::vector<Eigen::Index> offsets;
  Eigen::Index D = -1;
  for (const Eigen::Index node : config.transfer_nodes) {
    if (node < 0 || node >= hierarchy.l2())
      throw ConfigError("transfer set references a node outside the bottom level");
    const Eigen::Index dim_node = design.offsets[node + 1] - design.offsets[node];
    if (D < 0) D = dim_node;
    if (dim_node != D)
      throw ConfigError("transfer set requires identical coefficient dimensions per node");
    offsets.push_back(design.offsets[node]);
  }
  Eigen::VectorXd alpha = config.transfer_alpha;
  if (alpha.size() == 0)
    alpha = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(config.transfer_nodes.size()));
  const Eigen::MatrixXcd rows =
      transfer_penalty_rows(design.offsets.back(), offsets, D, alpha);
  add_constraint_rows(design.penalty, rows, config.transfer_strength);

  const Eigen::MatrixXcd Sc = hierarchy.S.cast<cplx>();
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(design.blocks.size());
  for (const auto& phi : design.blocks) blocks.push_back(Sc * phi);
  WeaklProblem problem = WeaklProblem::from_blocks(
      std::move(blocks), train.Y.cast<cplx>(), design.penalty, config.lambda_weights);
  return finish_fit(HierFamily::Transfer, train, hierarchy, config, std::move(design),
                    std::move(problem));
}

Eigen::MatrixXd HierModel::predict_bottom(const Eigen::MatrixXd& X, double* max_imag) const {
  const Eigen::MatrixXd all = predict_all(X, max_imag);
  return all.leftCols(hierarchy.l2());
}

Eigen::MatrixXd HierModel::predict_all(const Eigen::MatrixXd& X, double* max_imag) const {
  const Eigen::Index L = static_cast<Eigen::Index>(node_effects.size());
  Eigen::MatrixXcd outputs(X.rows(), L);
  for (Eigen::Index j = 0; j < X.rows(); ++j)
    outputs.row(j) = (build_feature_matrix(node_effects, X.row(j)) * theta).transpose();
  if (max_imag) *max_imag = outputs.size() > 0 ? outputs.imag().cwiseAbs().maxCoeff() : 0.0;
  if (family == HierFamily::Coherency) return outputs.real();
  return outputs.real() * hierarchy.S.transpose();
}

// ---------------------------------------------------------------------------
// Reconciliation
// ---------------------------------------------------------------------------

Eigen::MatrixXd reconcile(const Eigen::MatrixXd& base, ReconcileMethod method,
                          const Eigen::MatrixXd& S, const Eigen::MatrixXd& W,
                          double shrinkage) {
  const Eigen::Index l1 = S.rows();
  const Eigen::Index l2 = S.cols();
  if (base.cols() != l1)
    throw ConfigError("base forecasts must have one column per node (" + std::to_string(l1) +
                      "), got " + std::to_string(base.cols()));

  Eigen::MatrixXd projector;
  if (method == ReconcileMethod::Ols) {
    const Eigen::MatrixXd StS = S.transpose() * S;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(StS);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12)
      throw NumericalError("summation matrix is numerically rank-deficient");
    projector = S * ldlt.solve(S.transpose());
  } else {
    if (W.rows() != l1 || W.cols() != l1)
      throw ConfigError("MinT needs an l1 x l1 error covariance matrix");
    if (shrinkage < 0.0 || shrinkage > 1.0)
      throw ConfigError("shrinkage intensity must lie in [0, 1]");
    Eigen::MatrixXd Ws = (1.0 - shrinkage) * W;
    Ws.diagonal() = W.diagonal();
    const Eigen::LLT<Eigen::MatrixXd> llt(Ws);
    if (llt.info() != Eigen::Success)
      throw NumericalError("error covariance is singular after shrinkage");
    const Eigen::MatrixXd WinvS = llt.solve(S);
    const Eigen::MatrixXd K = S.transpose() * WinvS;
    const Eigen::LDLT<Eigen::MatrixXd> kldlt(K);
    if (kldlt.info() != Eigen::Success || kldlt.rcond() < 1e-12)
      throw NumericalError("MinT normal matrix is numerically rank-deficient");
    projector = S * kldlt.solve(WinvS.transpose());
  }
  return base * projector.transpose();
}

std::vector<LevelMse> per_level_mse(const Hierarchy& hierarchy,
                                    const Eigen::MatrixXd& forecasts,
                                    const Eigen::MatrixXd& actual) {
  if (forecasts.cols() != hierarchy.l1() || actual.cols() != hierarchy.l1())
    throw ConfigError("per-level MSE needs one column per hierarchy node");
  if (forecasts.rows() != actual.rows())
    throw DataError("forecast and actual row counts differ");
  if (forecasts.rows() == 0) throw DataError("per-level MSE needs at least one row");

  std::vector<LevelMse> out;
  std::vector<int> counts;
  for (Eigen::Index node = 0; node < hierarchy.l1(); ++node) {
    const std::string& level = hierarchy.levels[node];
    std::size_t slot = out.size();
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i].level == level) { slot = i; break; }
    if (slot == out.size()) {
      out.push_back({level, 0.0});
      counts.push_back(0);
    }
    out[slot].mse +=
        (forecasts.col(node) - actual.col(node)).squaredNorm() / forecasts.rows();
    counts[slot] += 1;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mse /= counts[i];
    total += out[i].mse;
  }
  out.push_back({"all", total});
  return out;
}

// ---------------------------------------------------------------------------
// Toy benchmark
// ---------------------------------------------------------------------------

ToyHierarchyInstance gen_toy_hierarchy(int d, Eigen::Index n_train, Eigen::Index n_test,
                                       double sigma2, std::uint64_t seed) {
  if (d < 1) throw ConfigError("toy hierarchy needs d >= 1");
  if (n_train < 1 || n_test < 0) throw ConfigError("toy hierarchy needs n_train >= 1");
  if (sigma2 < 0.0 || sigma2 > 1.0)
    throw ConfigError("toy hierarchy noise level sigma2 must lie in [0, 1]");

  Rng rng(seed);
  ToyHierarchyInstance inst;
  inst.d = d;
  inst.sigma2 = sigma2;
  inst.theta1.resize(d);
  inst.theta2.resize(d);
  for (int i = 0; i < d; ++i) inst.theta1(i) = rng.normal();
  for (int i = 0; i < d; ++i) inst.theta2(i) = rng.normal();

  auto draw_set = [&](Eigen::Index n, Eigen::MatrixXd& X1, Eigen::MatrixXd& X2,
                      Eigen::MatrixXd& Y) {
    X1.resize(n, d);
    X2.resize(n, d);
    Y.resize(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int c = 0; c < d; ++c) X1(r, c) = rng.normal();
      for (int c = 0; c < d; ++c) X2(r, c) = rng.normal();
      const double e1 = rng.normal();
      const double e2 = sigma2 * rng.normal();
      Y(r, 0) = X1.row(r).dot(inst.theta1) + e1;
      Y(r, 1) = X2.row(r).dot(inst.theta2) - e1 + e2;
      Y(r, 2) = Y(r, 0) + Y(r, 1);
    }
  };
  draw_set(n_train, inst.X1_train, inst.X2_train, inst.Y_train);
  draw_set(n_test, inst.X1_test, inst.X2_test, inst.Y_test);
  return inst;
}

namespace {

struct ToyRunResult {
  // per method: mse on y1, y2, total node; NaN when not applicable
  Eigen::Vector3d bu, rec, mint, weakl;
  bool rec_ok = false, mint_ok = false;
};

Eigen::Vector3d column_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) out(c) = (pred.col(c) - truth.col(c)).squaredNorm() / truth.rows();
  return out;
}

/// Per-node OLS coefficient, shared by the BU baseline and the Rec/MinT base
/// forecasts. Kept independent of the WeaKL solver on purpose: the benchmark
/// compares two implementations, not one against itself.
Eigen::VectorXd ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return X.colPivHouseholderQr().solve(y);
}

ToyRunResult toy_single_run(const ToyBenchmarkConfig& cfg, double sigma2, std::uint64_t seed) {
  const ToyHierarchyInstance inst =
      gen_toy_hierarchy(cfg.d, cfg.n_train, cfg.n_test, sigma2, seed);
  const Eigen::Index n = cfg.n_train;
  const int d = cfg.d;
  ToyRunResult out;

  // BU: independent least squares per bottom node, aggregate by summation.
  const Eigen::VectorXd t1 = ols_fit(inst.X1_train, inst.Y_train.col(0));
  const Eigen::VectorXd t2 = ols_fit(inst.X2_train, inst.Y_train.col(1));
  Eigen::MatrixXd bu_pred(cfg.n_test, 3);
  bu_pred.col(0) = inst.X1_test * t1;
  bu_pred.col(1) = inst.X2_test * t2;
  bu_pred.col(2) = bu_pred.col(0) + bu_pred.col(1);
  out.bu = column_mse(bu_pred, inst.Y_test);

  // Stacked aggregate regression feeding Rec and MinT.
  Eigen::MatrixXd Xagg(n, 2 * d);
  Xagg << inst.X1_train, inst.X2_train;
  const bool enough_dof = n >= 2 * d + 2 * 3;
  bool stacked_ok = enough_dof;
  Eigen::VectorXd t3;
  if (stacked_ok) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xagg);
    stacked_ok = qr.rank() == 2 * d;
    if (stacked_ok) t3 = qr.solve(inst.Y_train.col(2));
  }
  out.rec_ok = out.mint_ok = stacked_ok;
  out.rec.setConstant(std::numeric_limits<double>::quiet_NaN());
  out.mint.setConstant(std::numeric_limits<double>::quiet_NaN());

  if (stacked_ok) {
    Eigen::MatrixXd Xagg_test(cfg.n_test, 2 * d);
    Xagg_test << inst.X1_test, inst.X2_test;
    // Base forecasts and training errors in top-first order (total, y1, y2).
    Eigen::MatrixXd base(cfg.n_test, 3);
    base.col(0) = Xagg_test * t3;
    base.col(1) = bu_pred.col(0);
    base.col(2) = bu_pred.col(1);
    Eigen::MatrixXd S_top(3, 2);
    S_top << 1, 1, 1, 0, 0, 1;
    Eigen::MatrixXd truth_top(cfg.n_test, 3);
    truth_top.col(0) = inst.Y_test.col(2);
    truth_top.col(1) = inst.Y_test.col(0);
    truth_top.col(2) = inst.Y_test.col(1);

    const Eigen::MatrixXd rec = reconcile(base, ReconcileMethod::Ols, S_top);
    out.rec(0) = (rec.col(1) - truth_top.col(1)).squaredNorm() / cfg.n_test;
    out.rec(1) = (rec.col(2) - truth_top.col(2)).squaredNorm() / cfg.n_test;
    out.rec(2) = (rec.col(0) - truth_top.col(0)).squaredNorm() / cfg.n_test;

    Eigen::MatrixXd train_err(n, 3);
    train_err.col(0) = inst.Y_train.col(2) - Xagg * t3;
    train_err.col(1) = inst.Y_train.col(0) - inst.X1_train * t1;
    train_err.col(2) = inst.Y_train.col(1) - inst.X2_train * t2;
    const Eigen::MatrixXd centered = train_err.rowwise() - train_err.colwise().mean();
    const Eigen::MatrixXd W = centered.transpose() * centered / static_cast<double>(n - 1);
    try {
      const Eigen::MatrixXd mint = reconcile(base, ReconcileMethod::Mint, S_top, W, 0.0);
      out.mint(0) = (mint.col(1) - truth_top.col(1)).squaredNorm() / cfg.n_test;
      out.mint(1) = (mint.col(2) - truth_top.col(2)).squaredNorm() / cfg.n_test;
      out.mint(2) = (mint.col(0) - truth_top.col(0)).squaredNorm() / cfg.n_test;
    } catch (const NumericalError&) {
      out.mint_ok = false;
    }
  }

  // WeaKL: joint bottom-up fit, M = 0, aggregate row weighted by 1/sigma2^2.
  const double lambda_w = sigma2 > 0.0 ? std::min(1.0 / (sigma2 * sigma2), 1e8) : 1e8;
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(n);
  Eigen::MatrixXd S_bottom(3, 2);
  S_bottom << 1, 0, 0, 1, 1, 1;
  const Eigen::MatrixXcd Sc = S_bottom.cast<cplx>();
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::MatrixXcd phi = Eigen::MatrixXcd::Zero(2, 2 * d);
    phi.row(0).head(d) = inst.X1_train.row(j).cast<cplx>();
    phi.row(1).tail(d) = inst.X2_train.row(j).cast<cplx>();
    blocks.push_back(Sc * phi);
  }
  PenaltyMatrix none;
  none.diag = Eigen::VectorXd::Zero(2 * d);
  none.rows.resize(0, 2 * d);
  none.zero_blocks = {"y1", "y2"};
  Eigen::Vector3d lam(1.0, 1.0, lambda_w);
  const FitResult fit = fit_weakl(
      WeaklProblem::from_blocks(std::move(blocks), inst.Y_train.cast<cplx>(), none, lam));
  const Eigen::VectorXd theta = fit.theta.real();
  Eigen::MatrixXd weakl_pred(cfg.n_test, 3);
  weakl_pred.col(0) = inst.X1_test * theta.head(d);
  weakl_pred.col(1) = inst.X2_test * theta.tail(d);
  weakl_pred.col(2) = weakl_pred.col(0) + weakl_pred.col(1);
  out.weakl = column_mse(weakl_pred, inst.Y_test);
  return out;
}

}  // namespace

std::vector<ToyBenchmarkRow> run_toy_benchmark(const ToyBenchmarkConfig& config) {
  for (const auto& m : config.methods)
    if (m != "BU" && m != "Rec" && m != "MinT" && m != "WeaKL")
      throw ConfigError("unknown toy benchmark method '" + m + "'");
  if (config.runs < 1) throw ConfigError("toy benchmark needs runs >= 1");
  if (config.n_test < 1) throw ConfigError("toy benchmark needs n_test >= 1");

  const std::size_t S = config.sigma2.size();
  const std::size_t R = static_cast<std::size_t>(config.runs);
  std::vector<ToyRunResult> results(S * R);
  parallel_for(S * R, config.workers, [&](std::size_t idx) {
    const std::size_t sidx = idx / R;
    const std::size_t run = idx % R;
    results[idx] =
        toy_single_run(config, config.sigma2[sidx], derive_seed(config.seed, sidx, run));
  });

  std::vector<ToyBenchmarkRow> rows;
  for (std::size_t sidx = 0; sidx < S; ++sidx) {
    for (const auto& method : config.methods) {
      ToyBenchmarkRow row;
      row.method = method;
      row.sigma2 = config.sigma2[sidx];
      row.runs = config.runs;
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      bool ok = true;
      for (std::size_t run = 0; run < R; ++run) {
        const ToyRunResult& r = results[sidx * R + run];
        const Eigen::Vector3d* v = nullptr;
        if (method == "BU") v = &r.bu;
        else if (method == "Rec") { v = &r.rec; ok = ok && r.rec_ok; }
        else if (method == "MinT") { v = &r.mint; ok = ok && r.mint_ok; }
        else v = &r.weakl;
        if (ok) sum += *v;
      }
      row.applicable = ok;
      if (ok) {
        row.mse_y1 = sum(0) / config.runs;
        row.mse_y2 = sum(1) / config.runs;
        row.mse_total = sum(2) / config.runs;
        row.mse_hier = row.mse_y1 + row.mse_y2 + row.mse_total;
      } else {
        row.mse_y1 = row.mse_y2 = row.mse_total = row.mse_hier =
            std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double toy_ols_aggregate_mse(int d, Eigen::Index n, int runs, double sigma2,
                             std::uint64_t seed, bool fixed_design, int workers) {
  if (d < 1 || n <= 2 * d) throw ConfigError("OLS check needs n > 2d");
  std::vector<double> mse(runs, 0.0);
  parallel_for(static_cast<std::size_t>(runs), workers, [&](std::size_t run) {
    Rng rng(derive_seed(seed, run, 0x015));
    const int p = 2 * d;
    Eigen::VectorXd theta(p);
    for (int i = 0; i < p; ++i) theta(i) = rng.normal();
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index r = 0; r < n; ++r)
      for (int c = 0; c < p; ++c) X(r, c) = rng.normal();
    Eigen::VectorXd y = X * theta;
    for (Eigen::Index r = 0; r < n; ++r) y(r) += sigma2 * rng.normal();
    const Eigen::VectorXd theta_hat = X.colPivHouseholderQr().solve(y);

    if (fixed_design) {
      // Same inputs, independent noise draw.
      double acc = 0.0;
      const Eigen::VectorXd fit_err = X * (theta_hat - theta);
      for (Eigen::Index r = 0; r < n; ++r) {
        const double e = fit_err(r) - sigma2 * rng.normal();
        acc += e * e;
      }
      mse[run] = acc / static_cast<double>(n);
    } else {
      const Eigen::Index n_test = 20;
      double acc = 0.0;
      for (Eigen::Index r = 0; r < n_test; ++r) {
        Eigen::VectorXd x(p);
        for (int c = 0; c < p; ++c) x(c) = rng.normal();
        const double e = x.dot(theta_hat - theta) - sigma2 * rng.normal();
        acc += e * e;
      }
      mse[run] = acc / static_cast<double>(n_test);
    }
  });
  double total = 0.0;
  for (const double v : mse) total += v;
  return total / runs;
}

}  // namespace weakl
