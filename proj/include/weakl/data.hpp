#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "weakl/common.hpp"

namespace weakl {

// ---------------------------------------------------------------------------
// Raw tables
// ---------------------------------------------------------------------------

/// Column-major table of raw CSV cells (header consumed into `names`).
struct Frame {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> columns;

  Eigen::Index rows() const {
    return columns.empty() ? 0 : static_cast<Eigen::Index>(columns.front().size());
  }
  Eigen::Index find(const std::string& name) const;  // -1 if absent
};

/// Reads a comma-separated file with a header row. Quoted fields may contain
/// commas and doubled quotes. Ragged rows are data errors; empty cells are
/// kept as empty strings and only fail when a numeric column converts them.
Frame read_csv(const std::string& path);
Frame parse_csv(const std::string& text, const std::string& origin = "<string>");

// ---------------------------------------------------------------------------
// Schema and preprocessing
// ---------------------------------------------------------------------------

enum class ColumnKind { Numeric, Categorical };

struct DataSchema {
  std::string timestamp;
  std::vector<std::string> targets;
  std::vector<std::string> features;
  std::vector<ColumnKind> kinds;  // aligned with `features`
};

/// Affine map from a raw interval onto [-pi, pi]. A constant column maps to 0.
struct Rescaler {
  double lo = -pi;
  double hi = pi;

  double apply(double x) const {
    return hi == lo ? 0.0 : -pi + 2.0 * pi * (x - lo) / (hi - lo);
  }
  double invert(double u) const { return hi == lo ? lo : lo + (u + pi) * (hi - lo) / (2.0 * pi); }
};

/// Fits the affine range of `values`; the train extremes land exactly on ±pi.
Rescaler fit_rescaler(const Eigen::VectorXd& values);

/// Bijection between category labels and 1-based indices, in order of first
/// appearance in the training rows.
struct CategoryMap {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> index;  // label -> 1..|E|

  int cardinality() const { return static_cast<int>(labels.size()); }
  int lookup(const std::string& label) const;  // throws DataError on unknown label
};

/// Everything fitted on training rows that predict-time data must reuse.
struct Preprocess {
  std::string timestamp_name;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::vector<ColumnKind> kinds;
  std::vector<Rescaler> rescalers;       // per feature column; unused slots for categorical
  std::vector<CategoryMap> categories;   // per feature column; empty unless categorical
  Rescaler time_rescaler;                // fitted over the configured horizon
};

// ---------------------------------------------------------------------------
// Model-ready datasets
// ---------------------------------------------------------------------------

/// Encoded dataset: timestamps on the torus scale, numeric features rescaled
/// to [-pi, pi] by training statistics, categorical features as 1-based
/// category indices, real-valued targets.
struct Dataset {
  Eigen::VectorXd time;      // rescaled
  Eigen::VectorXd time_raw;  // original timestamps, kept for outputs
  Eigen::MatrixXd X;         // n x d1
  Eigen::MatrixXd Y;         // n x d2
  std::shared_ptr<const Preprocess> prep;

  Eigen::Index n() const { return time.size(); }
  Eigen::Index d1() const { return X.cols(); }
  Eigen::Index d2() const { return Y.cols(); }

  /// Copy of the half-open row range [begin, end).
  Dataset rows(Eigen::Index begin, Eigen::Index end) const;
  Dataset select(const std::vector<Eigen::Index>& idx) const;
};

struct SplitSpec {
  Eigen::Index train_begin = 0, train_end = 0;
  Eigen::Index val_begin = 0, val_end = 0;
  Eigen::Index test_begin = 0, test_end = 0;
  /// Raw-time horizon the timestamp rescaler covers; defaults to the full
  /// ingested range so online corrections can extrapolate past train.
  std::optional<std::pair<double, double>> horizon;
};

struct SplitResult {
  Dataset train, validation, test;
  std::shared_ptr<const Preprocess> prep;
};

/// Parses and encodes a frame, fitting all rescalers and category maps on the
/// train rows only. Ranges must be ordered train <= validation <= test and
/// non-overlapping; validation/test may be empty.
SplitResult split(const Frame& frame, const DataSchema& schema, const SplitSpec& spec);

/// Encodes a frame with an already-fitted preprocess (predict-time path).
/// Unknown categories and malformed numerics are data errors. Frames without
/// the target columns get an n x 0 target block.
Dataset encode(const Frame& frame, std::shared_ptr<const Preprocess> prep);

/// Single-dataset convenience: fit the preprocess on all rows.
Dataset encode_all(const Frame& frame, const DataSchema& schema,
                   std::optional<std::pair<double, double>> horizon = std::nullopt);

// ---------------------------------------------------------------------------
// Group partition
// ---------------------------------------------------------------------------

struct GroupPartition {
  std::vector<std::string> labels;                    // group key values, category order
  std::vector<Dataset> groups;                        // per-group rows, original order kept
  std::vector<std::vector<Eigen::Index>> row_indices; // into the source dataset
};

/// Partitions by a categorical key column so each group can be fitted
/// independently with the same configuration. Every row must carry a known
/// key value; concatenating the groups is a permutation of the source rows.
GroupPartition group_partition(const Dataset& data, Eigen::Index key_column);

}  // namespace weakl
