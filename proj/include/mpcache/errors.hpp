#pragma once

#include <stdexcept>
#include <string>

namespace mpcache {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid scalar/step-size/count argument (e.g. gamma outside (0,2), rho <= 0).
struct ParameterError : Error {
  using Error::Error;
};

// Graph-structure violations: disconnected graph, self loop, duplicate or
// out-of-range edge, impossible edge count.
struct TopologyError : Error {
  using Error::Error;
};

// Mismatched matrix/block shapes between coupled objects.
struct DimensionError : Error {
  using Error::Error;
};

// Malformed or inconsistent external data (CSV rows, timestamps, pmfs).
struct DataError : Error {
  using Error::Error;
};

// A required message/artifact from a peer agent is missing, e.g. a transfer
// weight with a positive combiner.
struct ProtocolError : Error {
  using Error::Error;
};

// Reference-solution machinery failed (no convergence, size cap exceeded,
// cache corruption).
struct OracleError : Error {
  using Error::Error;
};

// Iterates stopped being finite. Carries the iteration index at which the
// first non-finite entry appeared.
struct DivergenceError : Error {
  int iteration;
  DivergenceError(const std::string& what, int k) : Error(what), iteration(k) {}
};

}  // namespace mpcache
