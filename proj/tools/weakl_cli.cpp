#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "weakl/common.hpp"
#include "weakl/experiment.hpp"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakl — additive time-series forecasting with closed-form fits"};
  app.set_version_flag("--version", std::string(WEAKL_VERSION));
  app.require_subcommand(1);

  Args args;
  auto add_common = [&args](CLI::App* sub) {
    sub->add_option("--config", args.config, "JSON experiment configuration")
        ->required();
    sub->add_option("--out", args.out, "directory for run outputs")->required();
    sub->add_option("--seed", args.seed, "master seed (overrides the config value)");
    sub->add_option("--workers", args.workers, "worker threads (overrides the config value)");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit one model and write its forecasts");
  CLI::App* tune = app.add_subcommand("tune", "grid-search hyperparameters on the validation split");
  CLI::App* toy = app.add_subcommand("toy-benchmark", "run the synthetic two-node hierarchy comparison");
  CLI::App* compare = app.add_subcommand("compare", "skill test between two forecast files");
  CLI::App* predict = app.add_subcommand("predict", "apply a saved model file to new data");
  for (CLI::App* sub : {fit, tune, toy, compare, predict}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  weakl::RunOptions opts;
  opts.config_path = args.config;
  opts.out_dir = args.out;
  opts.seed = args.seed;
  opts.workers = args.workers;

  try {
    if (fit->parsed()) return weakl::run_fit(opts);
    if (tune->parsed()) return weakl::run_tune(opts);
    if (toy->parsed()) return weakl::run_toy_benchmark(opts);
    if (compare->parsed()) return weakl::run_compare(opts);
    if (predict->parsed()) return weakl::run_predict(opts);
    std::cerr << "error: no command given\n";
    return 2;
  } catch (const weakl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const weakl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const weakl::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
