#pragma once

#include <stdexcept>
#include <string>

namespace geomae {

// Base class for all errors raised by this library.
class GeomaeError : public std::runtime_error {
 public:
  explicit GeomaeError(const std::string& msg) : std::runtime_error(msg) {}
};

// File/parse problems. CLI maps these to exit code 2.
class IoError : public GeomaeError {
 public:
  explicit IoError(const std::string& msg) : GeomaeError(msg) {}
};

// Invalid configuration (grid, model, scene spec). CLI exit code 3.
class ConfigError : public GeomaeError {
 public:
  explicit ConfigError(const std::string& msg) : GeomaeError(msg) {}
};

// Non-finite loss during training. CLI exit code 4.
class DivergedError : public GeomaeError {
 public:
  DivergedError(const std::string& msg, int step) : GeomaeError(msg), step(step) {}
  int step;
};

}  // namespace geomae
