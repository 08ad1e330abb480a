#pragma once

#include <stdexcept>
#include <string>

namespace treeradar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (shape, range, grid mismatch).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A serialized file (BSCN, MLFW, JSON config) is malformed or truncated.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Numerical degeneracy: zero-power noise region, no boundaries, etc.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// The C3 gating stage could not find the air-bark clutter cluster.
class NoSurfaceClutter : public Error {
 public:
  using Error::Error;
};

/// No admissible hyperbola could be fitted to a cluster.
class NonHyperbolicCluster : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared in a network activation or training loss.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace treeradar
