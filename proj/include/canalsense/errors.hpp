#pragma once

#include <stdexcept>
#include <string>

namespace canalsense {

// Error categories map one-to-one onto the CLI exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace canalsense
