#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "cashbench/errors.hpp"
#include "cashbench/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cost-equivalent benchmarking toolkit for cluster-randomized trials"};
  app.require_subcommand(1);

  std::string config_path;
  if (const char* env = std::getenv("CASHBENCH_CONFIG")) config_path = env;

  std::string out_dir, variant;
  long long seed = -1;
  int threads = -1;

  for (const auto& name : cashbench::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Run configuration file (JSON)")
        ->envname("CASHBENCH_CONFIG");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Override the output directory");
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
    sub->add_option("--variant", variant, "Estimator variant (e.g. ce variant)");
  }

  CLI11_PARSE(app, argc, argv);
  std::string command = app.get_subcommands().front()->get_name();

  try {
    if (config_path.empty()) {
      throw cashbench::ValidationError(
          "no config: pass --config or set CASHBENCH_CONFIG");
    }
    cashbench::RunConfig config = cashbench::load_run_config(config_path);
    cashbench::RunOverrides overrides;
    if (seed >= 0) overrides.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) overrides.output_dir = out_dir;
    if (threads >= 0) overrides.threads = threads;
    if (!variant.empty()) overrides.variant = variant;
    cashbench::run_command(command, config, overrides, std::cout);
  } catch (const cashbench::ValidationError& e) {
    std::cerr << "{\"error\":\"validation\",\"message\":\"" << e.what()
              << "\"}\n";
    return 1;
  } catch (const cashbench::EstimationError& e) {
    std::cerr << "{\"error\":\"estimation\",\"message\":\"" << e.what()
              << "\"}\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"internal\",\"message\":\"" << e.what()
              << "\"}\n";
    return 2;
  }
  return 0;
}
