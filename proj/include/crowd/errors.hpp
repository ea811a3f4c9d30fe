#pragma once

#include <stdexcept>
#include <string>

namespace crowd {

/// Failure classes, mapped one-to-one onto CLI exit codes.
enum class ErrorKind {
  Geometry,    ///< degenerate geometry (coincident centers, center on wall)
  Validation,  ///< malformed or infeasible scenario / input
  Solver,      ///< projection did not converge, step could not be made feasible
  Io,          ///< file could not be read or written
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error(ErrorKind::Geometry, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(ErrorKind::Solver, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace crowd
