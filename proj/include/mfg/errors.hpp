#pragma once

#include <stdexcept>
#include <string>

namespace mfg {

/// Invalid parameters, malformed files, violated preconditions. The CLI maps
/// these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base for failures that happen while numbers are being pushed around.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CouplingError : public NumericalError {
 public:
  CouplingError(const std::string& what, double exponent)
      : NumericalError(what), exponent_(exponent) {}
  double exponent() const { return exponent_; }

 private:
  double exponent_;
};

class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, long step)
      : NumericalError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class IntegrationError : public NumericalError {
 public:
  IntegrationError(const std::string& what, int particle, int step)
      : NumericalError(what), particle_(particle), step_(step) {}
  int particle() const { return particle_; }
  int step() const { return step_; }

 private:
  int particle_;
  int step_;
};

class OptimizationError : public NumericalError {
 public:
  OptimizationError(const std::string& what, int particle, int node)
      : NumericalError(what), particle_(particle), node_(node) {}
  int particle() const { return particle_; }
  int node() const { return node_; }

 private:
  int particle_;
  int node_;
};

}  // namespace mfg
