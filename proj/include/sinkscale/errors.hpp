#pragma once

#include <stdexcept>
#include <string>

namespace sinkscale {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input (dimension mismatch, nonpositive target, zero row/column, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// A dividing row/column sum is zero: the matrix has a zero row or column in
// its support and the Sinkhorn update is undefined.
class ZeroMarginalError : public Error {
 public:
  using Error::Error;
};

// An entry or scaler over/underflowed to a non-finite value in the direct
// domain. The caller should switch to the log-domain engine.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class NotStandardizedError : public Error {
 public:
  using Error::Error;
};

class TooLargeError : public Error {
 public:
  using Error::Error;
};

class LTooSmallError : public Error {
 public:
  using Error::Error;
};

class AllZeroKernelError : public Error {
 public:
  using Error::Error;
};

class EmptySupportError : public Error {
 public:
  using Error::Error;
};

class InfeasibleWindowError : public Error {
 public:
  InfeasibleWindowError(int condition_index, const std::string& what)
      : Error(what), condition_index(condition_index) {}
  int condition_index;
};

class BadDimError : public Error {
 public:
  using Error::Error;
};

class NotScalableError : public Error {
 public:
  using Error::Error;
};

class InfeasibleGammaPairError : public Error {
 public:
  using Error::Error;
};

}  // namespace sinkscale
