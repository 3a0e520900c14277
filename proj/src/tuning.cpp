#include "weakl/tuning.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "weakl/parallel.hpp"

namespace weakl {

std::size_t GridSpec::size() const {
  std::size_t total = axes.empty() ? 0 : 1;
  for (const auto& axis : axes) total *= axis.values.size();
  return total;
}

std::vector<double> GridSpec::point(std::size_t index) const {
  std::vector<double> out(axes.size());
  // Row-major decode: last axis varies fastest.
  for (std::size_t a = axes.size(); a-- > 0;) {
    const std::size_t len = axes[a].values.size();
    out[a] = axes[a].values[index % len];
    index /= len;
  }
  return out;
}

void GridSpec::validate() const {
  if (axes.empty()) throw ConfigError("grid has no axes");
  for (const auto& axis : axes) {
    if (axis.name.empty()) throw ConfigError("grid axis with empty name");
    if (axis.values.empty())
      throw ConfigError("grid axis '" + axis.name + "' has no values");
    for (const double v : axis.values)
      if (!std::isfinite(v))
        throw ConfigError("grid axis '" + axis.name + "' contains a non-finite value");
  }
}

TuneResult grid_search(const GridSpec& grid, const GridObjective& objective, int workers) {
  grid.validate();
  const std::size_t total = grid.size();

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  TuneResult result;
  result.table.resize(total);
  parallel_for(total, workers, [&](std::size_t i) {
    GridRow row;
    row.index = i;
    row.point = grid.point(i);
    const auto start = clock::now();
    try {
      row.mse = objective(row.point);
    } catch (const NumericalError&) {
      row.mse = std::numeric_limits<double>::infinity();
      row.solvable = false;
    }
    if (std::isnan(row.mse)) {
      row.mse = std::numeric_limits<double>::infinity();
      row.solvable = false;
    }
    row.seconds = std::chrono::duration<double>(clock::now() - start).count();
    result.table[i] = std::move(row);
  });

  result.best_index = 0;
  result.best_mse = std::numeric_limits<double>::infinity();
  for (const GridRow& row : result.table) {
    if (row.mse < result.best_mse) {
      result.best_mse = row.mse;
      result.best_index = row.index;
    }
  }
  if (!std::isfinite(result.best_mse))
    throw NumericalError("every grid point was unsolvable");
  result.best_point = result.table[result.best_index].point;
  result.total_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

}  // namespace weakl
