#pragma once

#include <stdexcept>
#include <string>

namespace diffl2o {

// Malformed or inconsistent user input (config files, overrides, shapes
// supplied from outside). The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss or state became NaN/inf during optimization or training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary/text artifact on disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffl2o
