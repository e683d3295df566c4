#pragma once

#include <vector>

#include "gsrecon/forward.hpp"
#include "gsrecon/observation.hpp"
#include "gsrecon/twin.hpp"

namespace gsr::test {

/// Desk-scale twin: reference equilibrium and its exact measurements,
/// built once per process.
struct TwinFixture {
  TwinScenario s;
  Mesh mesh;
  FemSystem fem;
  TwinReference ref;
  MeasurementSet clean;

  TwinFixture()
      : mesh(make_twin_mesh(s)), fem(mesh), ref(make_twin_reference(fem, s)) {
    const auto pts = boundary_points(mesh);
    clean = synthesize_measurements(mesh, ref.eq, twin_chords(s), pts, ref.ne, ref.ne_scale);
  }

  static const TwinFixture& get() {
    static const TwinFixture f;
    return f;
  }
};

}  // namespace gsr::test
