#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fewer than three usable points, or the weighted source points are
/// collinear / coincident.
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class SumWeightsZero : public Error {
 public:
  using Error::Error;
};

class AllHypothesesDegenerate : public Error {
 public:
  using Error::Error;
};

class AllSamplesDegenerate : public Error {
 public:
  using Error::Error;
};

class TooFewCorrespondences : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t step, double value)
      : Error("non-finite loss " + std::to_string(value) + " at step " +
              std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Malformed input text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : Error(where + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InconsistentColumns : public ParseError {
 public:
  using ParseError::ParseError;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsc
