#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "oracle.hpp"
#include "weakl/constraints.hpp"
#include "weakl/data.hpp"
#include "weakl/feature_maps.hpp"
#include "weakl/rng.hpp"
#include "weakl/solver.hpp"

using namespace weakl;
using testutil::oracle_solve;
using testutil::random_matrix;
using testutil::rel_err;

namespace {

Frame demo_frame() {
  return parse_csv(
      "time,y,x,cat\n"
      "0,1.0,0.5,red\n"
      "1,2.0,1.5,blue\n"
      "2,3.0,2.5,red\n"
      "3,4.0,3.5,green\n"
      "4,5.0,4.5,blue\n"
      "5,6.0,5.5,red\n");
}

DataSchema demo_schema() {
  DataSchema s;
  s.timestamp = "time";
  s.targets = {"y"};
  s.features = {"x", "cat"};
  s.kinds = {ColumnKind::Numeric, ColumnKind::Categorical};
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV and encoding
// ---------------------------------------------------------------------------

TEST_CASE("csv parser handles quoted fields and reports malformed input") {
  const Frame f = parse_csv("a,b\n\"x,y\",\"she said \"\"hi\"\"\"\n1,2\n");
  REQUIRE(f.names.size() == 2);
  REQUIRE(f.rows() == 2);
  CHECK(f.columns[0][0] == "x,y");
  CHECK(f.columns[1][0] == "she said \"hi\"");
  CHECK(f.find("b") == 1);
  CHECK(f.find("missing") == -1);

  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), DataError);  // ragged row
  CHECK_THROWS_AS(read_csv("/nonexistent/file.csv"), DataError);

  // Empty cells are legal at the frame layer (hierarchy tables leave the
  // root's parent blank); they only fail once a numeric column needs them.
  const Frame blank = parse_csv("t,y,x\n0,2,\n");
  REQUIRE(blank.rows() == 1);
  CHECK(blank.columns[2][0].empty());
  DataSchema bs;
  bs.timestamp = "t";
  bs.targets = {"y"};
  bs.features = {"x"};
  bs.kinds = {ColumnKind::Numeric};
  SplitSpec bspec;
  bspec.train_begin = 0;
  bspec.train_end = 1;
  CHECK_THROWS_AS(split(blank, bs, bspec), DataError);
}

TEST_CASE("rescaler maps training extremes onto the boundary and inverts") {
  Eigen::VectorXd v(4);
  v << 2.0, 8.0, 5.0, 4.0;
  const Rescaler r = fit_rescaler(v);
  CHECK(r.apply(2.0) == doctest::Approx(-pi));
  CHECK(r.apply(8.0) == doctest::Approx(pi));
  CHECK(r.apply(5.0) == doctest::Approx(0.0));
  CHECK(r.invert(r.apply(3.3)) == doctest::Approx(3.3));

  Eigen::VectorXd c = Eigen::VectorXd::Constant(3, 7.0);
  const Rescaler rc = fit_rescaler(c);
  CHECK(rc.apply(7.0) == 0.0);
}

TEST_CASE("split encodes categories in first-appearance order and rejects unknowns") {
  const Frame f = demo_frame();
  SplitSpec spec;
  spec.train_begin = 0;
  spec.train_end = 4;
  spec.test_begin = 4;
  spec.test_end = 6;
  const SplitResult s = split(f, demo_schema(), spec);

  REQUIRE(s.train.n() == 4);
  REQUIRE(s.test.n() == 2);
  // categories: red=1, blue=2, green=3 (training appearance order)
  const CategoryMap& map = s.prep->categories[1];
  REQUIRE(map.cardinality() == 3);
  CHECK(map.labels[0] == "red");
  CHECK(map.lookup("green") == 3);
  CHECK(s.train.X(0, 1) == 1.0);
  CHECK(s.train.X(1, 1) == 2.0);
  CHECK(s.train.X(3, 1) == 3.0);
  CHECK_THROWS_AS(map.lookup("yellow"), DataError);

  // numeric feature hits the boundary at the training extremes
  CHECK(s.train.X(0, 0) == doctest::Approx(-pi));
  CHECK(s.train.X(3, 0) == doctest::Approx(pi));
  // test rows extrapolate beyond pi with the same affine map
  CHECK(s.test.X(1, 0) > pi);

  // predict-time frame with an unseen category is a data error
  const Frame bad = parse_csv("time,y,x,cat\n9,1.0,2.0,yellow\n");
  CHECK_THROWS_AS(encode(bad, s.prep), DataError);

  // frame without the target column produces an n x 0 target block
  const Frame no_target = parse_csv("time,x,cat\n9,2.0,red\n");
  const Dataset d = encode(no_target, s.prep);
  CHECK(d.Y.cols() == 0);
  CHECK(d.n() == 1);
}

TEST_CASE("split validates ranges and time ordering") {
  const Frame f = demo_frame();
  SplitSpec bad;
  bad.train_begin = 2;
  bad.train_end = 1;
  CHECK_THROWS_AS(split(f, demo_schema(), bad), ConfigError);

  SplitSpec overlap;
  overlap.train_begin = 0;
  overlap.train_end = 4;
  overlap.val_begin = 3;
  overlap.val_end = 5;
  CHECK_THROWS_AS(split(f, demo_schema(), overlap), ConfigError);

  const Frame unsorted = parse_csv("time,y,x,cat\n1,1.0,0.5,red\n0,2.0,1.5,blue\n");
  SplitSpec spec;
  spec.train_end = 2;
  CHECK_THROWS_AS(split(unsorted, demo_schema(), spec), DataError);
}

TEST_CASE("group partition is a permutation with one group per training category") {
  const Frame f = demo_frame();
  SplitSpec spec;
  spec.train_end = 6;
  const SplitResult s = split(f, demo_schema(), spec);
  const GroupPartition parts = group_partition(s.train, 1);

  REQUIRE(parts.labels.size() == 3);
  CHECK(parts.labels[0] == "red");
  std::vector<Eigen::Index> seen;
  for (const auto& idx : parts.row_indices)
    for (const Eigen::Index i : idx) seen.push_back(i);
  std::sort(seen.begin(), seen.end());
  REQUIRE(seen.size() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
  CHECK(parts.groups[0].n() == 3);  // red rows
  CHECK(parts.groups[2].n() == 1);  // green rows
}

// ---------------------------------------------------------------------------
// Feature maps
// ---------------------------------------------------------------------------

TEST_CASE("frequency grid runs the first axis slowest over -m..m") {
  const Eigen::MatrixXi g1 = frequency_grid(1, 1);
  REQUIRE(g1.rows() == 3);
  CHECK(g1(0, 0) == -1);
  CHECK(g1(1, 0) == 0);
  CHECK(g1(2, 0) == 1);

  const Eigen::MatrixXi g2 = frequency_grid(1, 2);
  REQUIRE(g2.rows() == 9);
  // first row (-1,-1), second (-1,0): second axis ticks fastest
  CHECK(g2(0, 0) == -1);
  CHECK(g2(0, 1) == -1);
  CHECK(g2(1, 0) == -1);
  CHECK(g2(1, 1) == 0);
  CHECK(g2(8, 0) == 1);
  CHECK(g2(8, 1) == 1);
}

TEST_CASE("fourier map evaluates exp(i<x,k>/2) on the frequency grid") {
  FeatureMapSpec spec;
  spec.kind = MapKind::Fourier;
  spec.inputs = {0};
  spec.m = 2;
  Eigen::VectorXd x(1);
  x << 1.7;
  const Eigen::VectorXcd phi = eval_map(spec, x);
  REQUIRE(phi.size() == 5);
  for (int k = -2; k <= 2; ++k) {
    const cplx expected = std::exp(cplx(0.0, 0.5 * k * 1.7));
    CHECK(std::abs(phi(k + 2) - expected) < 1e-14);
  }

  FeatureMapSpec two;
  two.kind = MapKind::Fourier;
  two.inputs = {0, 1};
  two.m = 1;
  Eigen::VectorXd xy(2);
  xy << 0.8, -0.3;
  const Eigen::VectorXcd phi2 = eval_map(two, xy);
  const Eigen::MatrixXi grid = frequency_grid(1, 2);
  REQUIRE(phi2.size() == grid.rows());
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    const double dot = grid(r, 0) * 0.8 + grid(r, 1) * -0.3;
    CHECK(std::abs(phi2(r) - std::exp(cplx(0.0, 0.5 * dot))) < 1e-14);
  }
}

TEST_CASE("categorical map spreads indices over [-pi, pi] with a full basis") {
  FeatureMapSpec spec;
  spec.kind = MapKind::Categorical;
  spec.inputs = {0};
  spec.cardinality = 4;
  CHECK(map_dim(spec) == 5);  // m = floor(4/2) = 2

  Eigen::VectorXd x(1);
  x << 1.0;
  const Eigen::VectorXcd first = eval_map(spec, x);
  // category 1 sits at -pi: entries exp(i*k*(-pi)/2)
  for (int k = -2; k <= 2; ++k)
    CHECK(std::abs(first(k + 2) - std::exp(cplx(0.0, -0.5 * k * pi))) < 1e-14);

  x << 2.0;  // category 2 at -pi + 2*pi/3
  const Eigen::VectorXcd second = eval_map(spec, x);
  const double u = -pi + 2.0 * pi / 3.0;
  CHECK(std::abs(second(4) - std::exp(cplx(0.0, u))) < 1e-14);

  x << 2.5;
  CHECK_THROWS_AS(eval_map(spec, x), DataError);  // non-integer index
  x << 5.0;
  CHECK_THROWS_AS(eval_map(spec, x), DataError);  // out of range
}

TEST_CASE("feature matrices are block diagonal across outputs") {
  FeatureMapSpec lin;
  lin.kind = MapKind::Linear;
  lin.inputs = {0};
  FeatureMapSpec fou;
  fou.kind = MapKind::Fourier;
  fou.inputs = {1};
  fou.m = 1;

  std::vector<std::vector<FeatureMapSpec>> per_target{{lin}, {fou}};
  Eigen::RowVectorXd row(2);
  row << 2.0, 0.7;
  const Eigen::MatrixXcd F = build_feature_matrix(per_target, row);
  REQUIRE(F.rows() == 2);
  REQUIRE(F.cols() == 4);
  CHECK(std::abs(F(0, 0) - cplx(2.0, 0.0)) < 1e-14);
  CHECK(F.row(0).tail(3).norm() == 0.0);  // output 0 reads only block 0
  CHECK(F(1, 0) == cplx(0.0, 0.0));       // output 1 reads only block 1
  // stacked rows hold phi^* so that design * theta evaluates the model
  const Eigen::VectorXcd phi = eval_map(fou, Eigen::VectorXd::Constant(1, 0.7));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(F(1, 1 + j) - std::conj(phi(j))) < 1e-14);
}

TEST_CASE("stacked design rows are conjugated maps with contiguous offsets") {
  FeatureMapSpec lin;
  lin.kind = MapKind::Linear;
  lin.inputs = {0};
  FeatureMapSpec fou;
  fou.kind = MapKind::Fourier;
  fou.inputs = {1};
  fou.m = 1;
  const std::vector<FeatureMapSpec> effects{lin, fou};

  CHECK(effects_dim(effects) == 4);
  const std::vector<Eigen::Index> offsets = effect_offsets(effects);
  REQUIRE(offsets.size() == 3);
  CHECK(offsets[0] == 0);
  CHECK(offsets[1] == 1);
  CHECK(offsets[2] == 4);

  Eigen::MatrixXd X(2, 2);
  X << 1.0, 0.5, -2.0, 1.5;
  const Eigen::MatrixXcd D = stack_design(effects, X);
  REQUIRE(D.rows() == 2);
  REQUIRE(D.cols() == 4);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const Eigen::VectorXcd full = eval_effects(effects, X.row(j));
    for (Eigen::Index c = 0; c < 4; ++c)
      CHECK(std::abs(D(j, c) - std::conj(full(c))) < 1e-14);
  }
}

// ---------------------------------------------------------------------------
// Penalties and constraints
// ---------------------------------------------------------------------------

TEST_CASE("sobolev penalty entries are sqrt(lambda (1 + |k|^(2s)))") {
  const Eigen::VectorXd d = sobolev_diagonal(2, 2, 0.1);
  REQUIRE(d.size() == 5);
  CHECK(d(0) == doctest::Approx(std::sqrt(0.1 * 17.0)));  // k = -2
  CHECK(d(1) == doctest::Approx(std::sqrt(0.1 * 2.0)));   // k = -1
  CHECK(d(2) == doctest::Approx(std::sqrt(0.1)));         // k = 0
  CHECK(d(4) == doctest::Approx(std::sqrt(0.1 * 17.0)));

  // multivariate: ||k||_2^(2s) over the odometer grid, first axis slowest
  const Eigen::VectorXd d2 = sobolev_diagonal(1, 2, 1, 1.0);
  const Eigen::MatrixXi grid = frequency_grid(1, 2);
  REQUIRE(d2.size() == grid.rows());
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    const double k2 = grid.row(r).cast<double>().squaredNorm();
    CHECK(d2(r) == doctest::Approx(std::sqrt(1.0 + k2)));
  }
}

TEST_CASE("penalty matrix gram equals M*M and tracks zero blocks") {
  PenaltyMatrix p = assemble_block_penalty(
      {ridge_block(2, 0.5, "a"), sobolev_block(1, 1, 2, 0.0, "b")});
  CHECK(p.dim() == 5);
  CHECK_FALSE(p.injective());
  REQUIRE(p.zero_blocks.size() == 1);
  CHECK(p.zero_blocks[0] == "b");

  weakl::Rng rng(11);
  const Eigen::MatrixXcd rows = random_matrix(rng, 2, 5, true);
  add_constraint_rows(p, rows, 2.0);
  const Eigen::MatrixXcd dense = p.dense();
  const Eigen::MatrixXcd gram = p.gram();
  CHECK((gram - dense.adjoint() * dense).norm() < 1e-12);

  Eigen::VectorXcd theta = random_matrix(rng, 5, 1, true);
  CHECK(p.squared_norm(theta) == doctest::Approx((dense * theta).squaredNorm()));
}

TEST_CASE("orthogonal complement projector satisfies the projector identities") {
  weakl::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index l1 = 3 + static_cast<Eigen::Index>(rng.index(4));
    const Eigen::Index l2 = 1 + static_cast<Eigen::Index>(rng.index(l1 - 1));
    const Eigen::MatrixXcd P = random_matrix(rng, l1, l2, trial % 2 == 0);
    const Eigen::MatrixXcd C = orthogonal_complement_projector(P);
    CHECK((C * C - C).norm() < 1e-10);
    CHECK((C - C.adjoint()).norm() < 1e-10);
    CHECK((C * P).norm() < 1e-10);
    // trace of a projector equals its rank: l1 - l2 here
    CHECK(std::abs(C.trace().real() - static_cast<double>(l1 - l2)) < 1e-8);
  }
  // rank-deficient input is rejected
  Eigen::MatrixXcd bad(3, 2);
  bad.col(0) = Eigen::Vector3cd(1, 1, 0);
  bad.col(1) = Eigen::Vector3cd(2, 2, 0);
  CHECK_THROWS_AS(orthogonal_complement_projector(bad), NumericalError);
}

TEST_CASE("exact reparameterization keeps the solution inside Im(P)") {
  weakl::Rng rng(17);
  const Eigen::Index dim = 5, red = 2, n = 15;
  const Eigen::MatrixXcd P = random_matrix(rng, dim, red, true);
  const Eigen::MatrixXcd design = random_matrix(rng, n, dim, true);
  const Eigen::VectorXcd y = random_matrix(rng, n, 1, true);

  const Eigen::MatrixXcd reduced = exact_constraint_reparam(design, P);
  REQUIRE(reduced.cols() == red);
  CHECK((reduced - design * P).norm() < 1e-12);

  PenaltyMatrix pen;
  pen.diag = Eigen::VectorXd::Constant(red, 0.4);
  pen.rows.resize(0, red);
  const FitResult fit = fit_weakl(WeaklProblem::from_design(reduced, y, pen));
  const Eigen::VectorXcd theta = P * fit.theta;  // lifted solution
  // theta lies in Im(P): the complement projector annihilates it
  const Eigen::MatrixXcd C = orthogonal_complement_projector(P);
  CHECK((C * theta).norm() < 1e-8 * std::max(1.0, theta.norm()));
}

TEST_CASE("transfer penalty rows vanish exactly on shared-coefficient states") {
  const Eigen::Index D = 3;
  const std::vector<Eigen::Index> offsets{0, 3};  // two blocks inside dim 8
  Eigen::VectorXd alpha(2);
  alpha << 1.0, 2.0;
  const Eigen::MatrixXcd rows = transfer_penalty_rows(8, offsets, D, alpha);
  REQUIRE(rows.cols() == 8);
  REQUIRE(rows.rows() == D * 2);

  weakl::Rng rng(23);
  // state with block_i = alpha_i * h for a shared h: penalty must vanish
  Eigen::VectorXcd h = random_matrix(rng, D, 1, true);
  Eigen::VectorXcd theta = random_matrix(rng, 8, 1, true);
  theta.segment(0, D) = alpha(0) * h;
  theta.segment(3, D) = alpha(1) * h;
  CHECK((rows * theta).norm() < 1e-12);

  // a generic state is penalized
  theta.segment(0, D) = random_matrix(rng, D, 1, true);
  CHECK((rows * theta).norm() > 1e-3);

  // quadratic form matches rows^* rows
  const Eigen::MatrixXcd quad = transfer_penalty(8, offsets, D, alpha);
  CHECK((quad - rows.adjoint() * rows).norm() < 1e-12);

  CHECK_THROWS_AS(transfer_penalty_rows(8, {0}, D, Eigen::VectorXd::Ones(1)), ConfigError);
}

// ---------------------------------------------------------------------------
// Solver against the oracle
// ---------------------------------------------------------------------------

TEST_CASE("solver matches the stacked least-squares oracle on random instances") {
  weakl::Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    testutil::InstanceSpec spec;
    spec.dim = 2 + static_cast<Eigen::Index>(rng.index(5));
    spec.n = 8 + static_cast<Eigen::Index>(rng.index(33));
    spec.d2 = 1 + static_cast<Eigen::Index>(rng.index(2));
    spec.complex_entries = trial % 3 != 0;
    spec.use_blocks = trial % 4 == 0;
    spec.with_lambda = trial % 2 == 0;
    spec.with_rows = trial % 5 == 0;
    const WeaklProblem problem = testutil::random_instance(rng, spec);
    const FitResult fit = fit_weakl(problem);
    const Eigen::VectorXcd ref = oracle_solve(problem);
    INFO("trial ", trial, " dim ", spec.dim, " n ", spec.n, " d2 ", spec.d2);
    CHECK(rel_err(fit.theta, ref) < 1e-8);
    CHECK(fit.diagnostics.residual < 1e-8);
  }
}

TEST_CASE("real instances solved on the real path match the complex route") {
  weakl::Rng rng(202);
  testutil::InstanceSpec spec;
  spec.dim = 4;
  spec.n = 25;
  spec.complex_entries = false;
  const WeaklProblem real_problem = testutil::random_instance(rng, spec);
  REQUIRE(real_problem.is_real());
  const FitResult fast = fit_weakl(real_problem);
  CHECK(fast.diagnostics.real_path);

  // force the complex route by adding a zero-weight imaginary perturbation
  WeaklProblem forced = real_problem;
  forced.design(0, 0) += cplx(0.0, 1e-30);
  const FitResult slow = fit_weakl(forced);
  CHECK_FALSE(slow.diagnostics.real_path);
  CHECK(rel_err(fast.theta, slow.theta) < 1e-10);
}

TEST_CASE("row order does not change the estimator") {
  weakl::Rng rng(303);
  testutil::InstanceSpec spec;
  spec.dim = 5;
  spec.n = 20;
  const WeaklProblem problem = testutil::random_instance(rng, spec);
  const Eigen::VectorXcd base = fit_weakl(problem).theta;

  WeaklProblem shuffled = problem;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(spec.n));
  for (Eigen::Index i = 0; i < spec.n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = spec.n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.index(static_cast<std::size_t>(i + 1)))]);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    shuffled.design.row(i) = problem.design.row(perm[static_cast<std::size_t>(i)]);
    shuffled.targets.row(i) = problem.targets.row(perm[static_cast<std::size_t>(i)]);
  }
  CHECK(rel_err(fit_weakl(shuffled).theta, base) < 1e-9);
}

TEST_CASE("fitted coefficients minimize the empirical risk") {
  weakl::Rng rng(404);
  testutil::InstanceSpec spec;
  spec.dim = 4;
  spec.n = 18;
  spec.with_lambda = true;
  const WeaklProblem problem = testutil::random_instance(rng, spec);
  const FitResult fit = fit_weakl(problem);
  const double best = empirical_risk(fit.theta, problem);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXcd delta = random_matrix(rng, spec.dim, 1, true);
    delta *= std::pow(10.0, -1.0 - static_cast<double>(rng.index(5))) / delta.norm();
    CHECK(empirical_risk(fit.theta + delta, problem) >= best - 1e-12);
  }
}

TEST_CASE("unpenalized singular systems raise a numerical error naming the block") {
  // duplicate columns with a zero penalty: the gram matrix is singular
  Eigen::MatrixXcd design(6, 2);
  design.col(0).setConstant(cplx(1.0, 0.0));
  design.col(1).setConstant(cplx(1.0, 0.0));
  PenaltyMatrix pen = assemble_block_penalty({ridge_block(2, 0.0, "dup")});
  CHECK(pen.zero_blocks == std::vector<std::string>{"dup"});
  const WeaklProblem problem =
      WeaklProblem::from_design(design, Eigen::VectorXcd::Ones(6), pen);
  try {
    // The targets lie in the column span, so the singular normal equations
    // are consistent and may still solve; any returned solution must then
    // attain the same minimal risk as the reference route.
    const FitResult fit = fit_weakl(problem);
    const double lib_risk = empirical_risk(fit.theta, problem);
    const double ref_risk = empirical_risk(oracle_solve(problem), problem);
    CHECK(lib_risk == doctest::Approx(ref_risk).epsilon(1e-9));
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("dup") != std::string::npos);
  }
}

TEST_CASE("zero lambda weights drop observations from the risk") {
  weakl::Rng rng(505);
  const Eigen::Index n = 12, dim = 3;
  std::vector<Eigen::MatrixXcd> blocks;
  for (Eigen::Index j = 0; j < n; ++j) blocks.push_back(random_matrix(rng, 2, dim, true));
  const Eigen::MatrixXcd Y = random_matrix(rng, n, 2, true);
  PenaltyMatrix pen;
  pen.diag = Eigen::VectorXd::Constant(dim, 0.5);
  pen.rows.resize(0, dim);

  Eigen::VectorXd lambda(2);
  lambda << 1.0, 0.0;  // second output carries no weight
  const WeaklProblem weighted =
      WeaklProblem::from_blocks(blocks, Y, pen, lambda);

  // the same problem with the second output rows removed
  std::vector<Eigen::MatrixXcd> kept;
  for (const auto& b : blocks) kept.push_back(b.topRows(1));
  const WeaklProblem reduced = WeaklProblem::from_blocks(
      kept, Y.leftCols(1), pen, Eigen::VectorXd::Ones(1));

  CHECK(rel_err(fit_weakl(weighted).theta, fit_weakl(reduced).theta) < 1e-9);
}
