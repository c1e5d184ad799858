#pragma once

#include <stdexcept>
#include <string>

namespace cashbench {

// Bad inputs: malformed config, impossible data, violated preconditions.
// The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Estimation failures: rank deficiency, too few clusters, non-convergence.
// The CLI maps these to exit code 2.
struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cashbench
