#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpmap {

/// Base of every error thrown by the library. `kind()` is a stable short
/// identifier used by the CLI for its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// The closest point is not unique (query on the medial axis / cut locus).
class DegenerateQuery : public Error {
 public:
  explicit DegenerateQuery(const std::string& what) : Error("DegenerateQuery", what) {}
};

class Unsupported : public Error {
 public:
  explicit Unsupported(const std::string& what) : Error("Unsupported", what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("ParseError", what) {}
};

class DegenerateFace : public Error {
 public:
  explicit DegenerateFace(std::vector<std::size_t> faces);
  const std::vector<std::size_t>& faces() const noexcept { return faces_; }

 private:
  std::vector<std::size_t> faces_;
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what) : Error("CapacityError", what) {}
};

class OutOfCoverage : public Error {
 public:
  explicit OutOfCoverage(const std::string& what) : Error("OutOfCoverage", what) {}
};

class MissingStencilNode : public Error {
 public:
  explicit MissingStencilNode(const std::string& what) : Error("MissingStencilNode", what) {}
};

class EmptyBand : public Error {
 public:
  explicit EmptyBand(const std::string& what) : Error("EmptyBand", what) {}
};

class ValidationError : public Error {
 public:
  ValidationError(std::string key, const std::string& what)
      : Error("ValidationError", what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

/// A time step failed at a specific band node.
class SolverError : public Error {
 public:
  SolverError(std::string kind, std::size_t node, const std::string& what)
      : Error(std::move(kind), what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

}  // namespace cpmap
