#pragma once

#include <stdexcept>
#include <string>

namespace mfd {

// Base of every error raised by the library. Subclasses name the failure
// category so callers (and the CLI exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Image is in the wrong value domain (raw [0,255] vs unit [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong state (e.g. backward without a training forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Dataset root does not follow the category-directory convention.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Checkpoint errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Cascade document errors. Each failure mode has its own type.
class ParseError : public Error {
 public:
  using Error::Error;
};

class MalformedDocumentError : public ParseError {
 public:
  using ParseError::ParseError;
};

class MissingElementError : public ParseError {
 public:
  MissingElementError(const std::string& element)
      : ParseError("cascade: missing required element '" + element + "'"),
        element_(element) {}
  const std::string& element() const noexcept { return element_; }

 private:
  std::string element_;
};

class UnsupportedFeatureError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace mfd
