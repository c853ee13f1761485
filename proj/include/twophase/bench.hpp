/// \file bench.hpp
/// \brief Benchmark cases (static disc, rising bubble), derived bubble quantities, the
///        relative L2-in-time error, configuration files and the run drivers.

#ifndef TWOPHASE_BENCH_HPP
#define TWOPHASE_BENCH_HPP

#include "twophase/adaption.hpp"
#include "twophase/levelset.hpp"
#include "twophase/solver.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace twophase {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which fluid the initial disc holds.
enum class DiscFluid {
  Fluid1,  ///< droplet: phi > 0 inside
  Fluid2,  ///< bubble: phi < 0 inside
};

struct BenchmarkCase {
  std::string name;
  Rect domain;
  Vec2 center = Vec2(0.5, 0.5);
  double radius = 0.25;
  DiscFluid disc = DiscFluid::Fluid2;
  FluidPair fluids;
  BoundaryConditions bc;
  double end_time = 3.0;
  int nx = 20, ny = 40;          ///< uniform or initial mesh
  bool adaptive = false;
  double complexity = 1400.0;    ///< target vertex count when adaptive
  int pre_adapt_cycles = 5;
  MetricBounds bounds;           ///< zero entries take the domain defaults
  int remesh_passes = 10;
  int nts = 200;                 ///< prescribed increments; dt_max = end_time / nts
  int increments = 0;            ///< fixed increment count (static disc)
  SolverConfig solver;
  bool exact_curvature = false;  ///< static disc only: kappa = 1/R
  std::vector<double> shape_times{0.0, 1.5, 3.0};
  int vtk_every = 0;             ///< fields_*.vtk every k increments, 0 = off

  /// "static_disc", "bubble_case1" or "bubble_case2"; throws ConfigError otherwise.
  static BenchmarkCase defaults(const std::string& name);

  bool is_static() const { return name == "static_disc"; }
  /// Initial signed distance.
  double initial_phi(const Vec2& x) const;
  /// Applies derived settings (dt_max from nts, exact curvature) and validates.
  void finalize();
};

/// Reads `key = value` lines ('#' starts a comment). `case` selects the defaults; the other
/// keys override them in file order. Errors cite the line number.
BenchmarkCase parse_config(const std::filesystem::path& path);
BenchmarkCase parse_config_text(const std::string& text);

/// Every numeric setting as `key = value` lines, for run headers.
std::string describe(const BenchmarkCase& c);

struct BubbleQuantities {
  double volume = 0.0;       ///< integral of H_eps(-phi)
  double centroid_y = 0.0;
  double rise_velocity = 0.0;
  double perimeter = 0.0;    ///< length of the extracted zero level
  double circularity = 0.0;  ///< 2 sqrt(pi V) / P
  bool defined = false;      ///< false when the volume is below 1e-12
};

BubbleQuantities bubble_quantities(const CoupledState& state, double eps);

struct SeriesRow {
  double t = 0.0;
  BubbleQuantities q;
  double max_speed = 0.0;
  double pressure_jump = 0.0;  ///< max p - min p over P2 nodes
};

struct TimeSeries {
  std::vector<SeriesRow> rows;

  std::vector<double> times() const;
  std::vector<double> column(double (*get)(const SeriesRow&)) const;
};

/// sqrt( int (q - q_ref)^2 dt / int q_ref^2 dt ) by the trapezoid rule on the reference grid,
/// with q linearly resampled there. Throws std::invalid_argument on a zero reference.
double relative_L2_time_error(const std::vector<double>& t, const std::vector<double>& q,
                              const std::vector<double>& t_ref, const std::vector<double>& q_ref);

struct IncrementLog {
  int step = 0;
  double t = 0.0;
  double dt = 0.0;
  int halvings = 0;
  int newton_iterations = 0;     ///< accepted attempt
  int total_newton_iterations = 0;
  int linear_iterations = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  int vertices = 0;
  int elements = 0;
  int dofs = 0;
  double wall_seconds = 0.0;
};

struct RunResult {
  TimeSeries series;
  std::vector<IncrementLog> increments;
  CoupledState final_state;
  InterfaceMesh final_interface;
  bool underflow = false;  ///< stopped early on time-step underflow
  std::string message;

  int accepted_increments() const { return static_cast<int>(increments.size()); }
};

/// Optional on-disk outputs; an empty directory disables them.
struct RunOutput {
  std::filesystem::path dir;
  bool echo = false;  ///< one progress line per increment on stdout
};

/// Static disc: fixed dt_max increments, no adaption.
RunResult run_static_disc(const BenchmarkCase& c, const RunOutput& out = {});
/// Rising bubble to end_time with optional adaption.
RunResult run_bubble(const BenchmarkCase& c, const RunOutput& out = {});
/// Dispatches on the case name.
RunResult run_case(const BenchmarkCase& c, const RunOutput& out = {});

/// Initial state: signed distance of the disc, reinitialized, zero velocity and pressure.
CoupledState initial_state(const BenchmarkCase& c, std::shared_ptr<const Mesh2D> mesh);

}  // namespace twophase

#endif  // TWOPHASE_BENCH_HPP
