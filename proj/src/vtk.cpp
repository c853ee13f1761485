#include "twophase/vtk.hpp"

#include <fstream>
#include <stdexcept>

namespace twophase {

void write_state_vtk(const CoupledState& state, const std::string& path) {
  if (!state.consistent()) throw std::invalid_argument("inconsistent state for VTK output");
  const Mesh2D& mesh = *state.mesh;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(12);
  const int nn = mesh.p2_node_count();
  const int nc = 4 * mesh.triangle_count();
  out << "# vtk DataFile Version 3.0\ntwophase state\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << nn << " double\n";
  for (int n = 0; n < nn; ++n) {
    const Vec2 x = mesh.node_position(n);
    out << x.x() << ' ' << x.y() << " 0\n";
  }
  out << "CELLS " << nc << ' ' << 4 * nc << '\n';
  // Local numbering: vertices 0..2, midpoints 3 = (0,1), 4 = (1,2), 5 = (2,0).
  static constexpr int kSub[4][3] = {{0, 3, 5}, {3, 1, 4}, {5, 4, 2}, {3, 4, 5}};
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto nodes = mesh.element_nodes(t);
    for (const auto& s : kSub) {
      out << "3 " << nodes[s[0]] << ' ' << nodes[s[1]] << ' ' << nodes[s[2]] << '\n';
    }
  }
  out << "CELL_TYPES " << nc << '\n';
  for (int c = 0; c < nc; ++c) out << "5\n";
  out << "POINT_DATA " << nn << "\nVECTORS velocity double\n";
  for (int n = 0; n < nn; ++n) out << state.vx[n] << ' ' << state.vy[n] << " 0\n";
  out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (int n = 0; n < nn; ++n) out << state.p[n] << '\n';
  out << "SCALARS level_set double 1\nLOOKUP_TABLE default\n";
  for (int n = 0; n < nn; ++n) out << state.phi[n] << '\n';
}

}  // namespace twophase
