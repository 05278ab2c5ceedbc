#pragma once

#include <stdexcept>
#include <string>

namespace brasr {

struct InvalidInputError : std::runtime_error {
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateInputError : std::runtime_error {
  explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingDivergedError : std::runtime_error {
  TrainingDivergedError(const std::string& msg, long long step)
      : std::runtime_error(msg + " (step " + std::to_string(step) + ")"), step(step) {}
  long long step;
};

}  // namespace brasr
