#pragma once

#include <stdexcept>
#include <string>

namespace sobolattr {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Requested sequence dimension exceeds the loaded direction-number table.
class UnsupportedDimensionError : public Error {
 public:
  using Error::Error;
};

// Mismatched matrix/vector shapes in design construction or estimation.
class DesignShapeError : public Error {
 public:
  using Error::Error;
};

// Model output variance below the floor; no attribution possible.
class DegenerateFunctionError : public Error {
 public:
  using Error::Error;
};

// Brute-force oracle refused: dimension too large for tensor-grid quadrature.
class OracleIntractableError : public Error {
 public:
  using Error::Error;
};

// Backend unreachable or not responding (retryable).
class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend reachable but the response violates the wire protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Backend returned a k-vector but no target output component was selected.
class AmbiguousOutputError : public Error {
 public:
  using Error::Error;
};

// Pointing game invoked with an empty box list.
class UndefinedTargetError : public Error {
 public:
  using Error::Error;
};

// Rank correlation of a constant vector.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

// File/parse problems (images, manifests, direction tables, configs).
class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sobolattr
