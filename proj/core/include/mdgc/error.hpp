#pragma once

#include <stdexcept>
#include <string>

namespace mdgc {

// Error hierarchy. Each condition named by the operation contracts gets its
// own type so callers (and the CLI exit-code mapping) can distinguish them.

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : MeshError {
  using MeshError::MeshError;
};
struct NonManifold : MeshError {
  using MeshError::MeshError;
};
struct DegenerateFace : MeshError {
  using MeshError::MeshError;
};
struct NonManifoldStar : MeshError {
  using MeshError::MeshError;
};
struct TargetTooSmall : MeshError {
  using MeshError::MeshError;
};

struct SourceOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotAdjacent : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooManyInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingContext : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace mdgc
