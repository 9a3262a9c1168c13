#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdgc/gpc.hpp"
#include "mdgc/mesh.hpp"
#include "mdgc/network.hpp"
#include "mdgc/windows.hpp"

namespace mdgc {

// One resolution level of a precompute artifact.
struct PrecomputeLevel {
  TriangleMesh mesh;
  std::vector<GpcMap> gpcs; // one truncated map per source vertex
  WindowTensors windows;
  bool has_down = false;    // map to the next (coarser) level
  SimplificationMap down;
};

struct PrecomputeParams {
  WindowSpec spec;     // base-level bins and window radius
  double r_max = 0;    // chart truncation radius, >= spec.radius
  double eps = 1e-12;
  std::vector<int> level_targets; // vertex counts of levels 1..k, decreasing
  double radius_scale = 1.0;      // per-level multiplier on radius and r_max
};

struct PrecomputeContainer {
  std::uint64_t mesh_hash = 0; // content hash of the base mesh
  WindowSpec spec;             // base-level spec
  double r_max = 0;
  double eps = 1e-12;
  double radius_scale = 1.0;
  std::vector<PrecomputeLevel> levels;
};

// Charts, windows, and coarser levels for a mesh. Deterministic: repeated
// runs produce byte-identical files.
PrecomputeContainer precompute(const TriangleMesh& mesh, const PrecomputeParams& p);

void save_container(const PrecomputeContainer& c, const std::string& path);
PrecomputeContainer load_container(const std::string& path);

// Internal-consistency audit; returns human-readable problems (empty = ok).
std::vector<std::string> verify_container(const PrecomputeContainer& c);

// Network context viewing a container's levels. Pointers reference the
// container, which must outlive the context.
NetContext make_context(const PrecomputeContainer& c);

} // namespace mdgc
