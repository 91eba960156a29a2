#pragma once

#include <stdexcept>
#include <string>

namespace gfmesc {

// Model or configuration violates a structural invariant.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A referenced element (bus, branch, device) does not exist.
class NotFoundError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Newton iteration failed. Carries the worst residual at the last iterate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double worst_residual)
      : std::runtime_error(what), worst_residual_(worst_residual) {}

  double worst_residual() const noexcept { return worst_residual_; }

 private:
  double worst_residual_;
};

// Time-domain run aborted (network failure mid-run or divergence guard).
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

// Input document failed to parse or validate. Message is "file:line:col: ...".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line)
      : std::runtime_error(what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace gfmesc
