#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "weakl/common.hpp"

namespace weakl {

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

/// Cartesian product of named axes. Enumeration is row-major: the first axis
/// varies slowest, the last fastest.
struct GridSpec {
  std::vector<GridAxis> axes;

  std::size_t size() const;
  /// Values of grid point `index` in axis order.
  std::vector<double> point(std::size_t index) const;
  void validate() const;  // throws ConfigError on empty grid or empty axis
};

struct GridRow {
  std::size_t index = 0;       // enumeration index
  std::vector<double> point;   // axis values
  double mse = 0.0;            // +inf when the point was unsolvable
  bool solvable = true;
  double seconds = 0.0;
};

struct TuneResult {
  std::size_t best_index = 0;
  std::vector<double> best_point;
  double best_mse = 0.0;
  std::vector<GridRow> table;  // one row per grid point, enumeration order
  double total_seconds = 0.0;
};

/// Fits at one grid point and returns the validation MSE. A NumericalError
/// marks the point unsolvable (+inf MSE); other exceptions propagate.
using GridObjective = std::function<double(const std::vector<double>&)>;

/// Evaluates every grid point and returns the argmin, ties broken by earliest
/// enumeration index. The winner is independent of `workers`.
TuneResult grid_search(const GridSpec& grid, const GridObjective& objective, int workers = 1);

}  // namespace weakl
