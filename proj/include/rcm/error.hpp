#pragma once

#include <stdexcept>
#include <string>

namespace rcm {

// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched shapes (dimensions, sizes) between arguments.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// The operation declines to run: the answer would be meaningless or the
// resources required exceed configured ceilings.
class RefusalError : public Error {
 public:
  using Error::Error;
};

// Invalid or unknown configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rcm
