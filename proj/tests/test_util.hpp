#pragma once

#include <doctest.h>

#include <functional>

#include "gsrecon/error.hpp"
#include "gsrecon/mesh.hpp"

namespace gsr::test {

inline NodalField sample(const Mesh& m, const std::function<double(Point)>& f) {
  NodalField v(static_cast<Eigen::Index>(m.num_nodes()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f(m.node(static_cast<int>(i)));
  return v;
}

/// Kind of the gsr::Error thrown by f; fails the test when nothing is thrown.
inline ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::State;
}

}  // namespace gsr::test
