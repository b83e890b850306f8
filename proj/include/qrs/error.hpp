#pragma once

#include <stdexcept>
#include <string>

namespace qrs {

// Base for all library errors. Callers that only need a message catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data or configuration that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A numerical routine could not produce a usable answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace qrs
