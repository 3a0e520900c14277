#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace weakl {

/// Options shared by all CLI commands. Seed and worker overrides take
/// precedence over the values in the config file; every run writes the
/// resolved config and a run manifest into the output directory.
struct RunOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::ostream* log = &std::cout;
};

/// Command bodies. Each returns 0 on success and reports failures by
/// throwing ConfigError, DataError, or NumericalError (the CLI maps these
/// to exit codes 2, 3, and 4).
int run_fit(const RunOptions& options);
int run_tune(const RunOptions& options);
int run_toy_benchmark(const RunOptions& options);
int run_compare(const RunOptions& options);
int run_predict(const RunOptions& options);

}  // namespace weakl
