#pragma once

#include <stdexcept>
#include <string>

namespace expsgd {

/// Invalid configuration or argument (maps to CLI exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite score or norm encountered during optimization (CLI exit code 2).
/// Carries the 1-based iteration index at which the divergence was detected.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long long iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}

  long long iteration() const { return iteration_; }

 private:
  long long iteration_;
};

}  // namespace expsgd
