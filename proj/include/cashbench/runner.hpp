#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "cashbench/config.hpp"

namespace cashbench {

// Flag-level overrides applied on top of the config file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> threads;
  std::optional<std::string> variant;
};

// Executes one CLI command; writes artifacts under the output directory.
// Throws ValidationError for configuration/data problems (exit code 1) and
// EstimationError for estimation failures (exit code 2).
void run_command(const std::string& command, RunConfig config,
                 const RunOverrides& overrides, std::ostream& log);

const std::vector<std::string>& command_names();

}  // namespace cashbench
