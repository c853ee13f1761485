/// \file vtk.hpp
/// \brief Legacy ASCII VTK output of P2 fields on a once-subdivided triangle mesh.

#ifndef TWOPHASE_VTK_HPP
#define TWOPHASE_VTK_HPP

#include "twophase/solver.hpp"

#include <string>

namespace twophase {

/// Writes velocity, pressure and level set at all P2 nodes; each triangle is split into
/// four linear cells through its edge midpoints.
void write_state_vtk(const CoupledState& state, const std::string& path);

}  // namespace twophase

#endif  // TWOPHASE_VTK_HPP
