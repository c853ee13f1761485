#include "twophase/bench.hpp"

#include "twophase/vtk.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

namespace twophase {

BenchmarkCase BenchmarkCase::defaults(const std::string& name) {
  BenchmarkCase c;
  c.name = name;
  if (name == "static_disc") {
    c.domain = Rect{0, 0, 8, 8};
    c.center = Vec2(4, 4);
    c.radius = 2.0;
    c.disc = DiscFluid::Fluid1;
    c.fluids = FluidPair{1.0, 0.1, 0.0, 0.0, 73.0, 0.0, 0.8};
    c.bc = BoundaryConditions::all(WallCondition::NoSlip);
    c.nx = c.ny = 20;
    c.increments = 50;
    c.nts = 0;
    c.solver.dt_max = 0.001;
    c.end_time = 0.05;
    c.exact_curvature = true;
    c.shape_times.clear();
    return c;
  }
  if (name == "bubble_case1" || name == "bubble_case2") {
    c.domain = Rect{0, 0, 1, 2};
    c.center = Vec2(0.5, 0.5);
    c.radius = 0.25;
    c.disc = DiscFluid::Fluid2;
    c.fluids = name == "bubble_case1" ? FluidPair{1000.0, 100.0, 10.0, 1.0, 24.5, 0.98, 0.025}
                                      : FluidPair{1000.0, 1.0, 10.0, 0.1, 1.96, 0.98, 0.025};
    c.bc = BoundaryConditions{WallCondition::FreeSlip, WallCondition::FreeSlip,
                              WallCondition::NoSlip, WallCondition::NoSlip};
    c.nx = 20;
    c.ny = 40;
    c.adaptive = true;
    c.complexity = 1400.0;
    c.nts = 200;
    c.end_time = 3.0;
    return c;
  }
  throw ConfigError("unknown case '" + name + "' (static_disc, bubble_case1, bubble_case2)");
}

double BenchmarkCase::initial_phi(const Vec2& x) const {
  const double d = (x - center).norm() - radius;
  return disc == DiscFluid::Fluid2 ? d : -d;
}

void BenchmarkCase::finalize() {
  if (nts > 0) solver.dt_max = end_time / nts;
  if (is_static() && increments <= 0) throw ConfigError("static_disc needs increments > 0");
  if (!is_static() && !(end_time > 0)) throw ConfigError("end_time must be positive");
  if (nx < 1 || ny < 1) throw ConfigError("nx and ny must be positive");
  if (adaptive && complexity < 10) throw ConfigError("complexity must be at least 10");
  if (exact_curvature) {
    // Curvature of the disc in the level-set convention: positive when phi > 0 inside.
    const double kappa = disc == DiscFluid::Fluid1 ? 1.0 / radius : -1.0 / radius;
    solver.exact_curvature = [kappa](const Vec2&) { return kappa; };
  } else {
    solver.exact_curvature = {};
  }
  try {
    fluids.validate();
    solver.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return d;
}

int to_int(const std::string& v) {
  std::size_t pos = 0;
  const long i = std::stol(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return static_cast<int>(i);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true or false");
}

WallCondition to_wall(const std::string& v) {
  if (v == "no_slip") return WallCondition::NoSlip;
  if (v == "free_slip") return WallCondition::FreeSlip;
  if (v == "natural") return WallCondition::Natural;
  throw std::invalid_argument("expected no_slip, free_slip or natural");
}

const char* wall_name(WallCondition w) {
  switch (w) {
    case WallCondition::NoSlip: return "no_slip";
    case WallCondition::FreeSlip: return "free_slip";
    case WallCondition::Natural: return "natural";
  }
  return "?";
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  return out;
}

using Setter = std::function<void(BenchmarkCase&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"x0", [](BenchmarkCase& c, const std::string& v) { c.domain.x0 = to_double(v); }},
      {"y0", [](BenchmarkCase& c, const std::string& v) { c.domain.y0 = to_double(v); }},
      {"x1", [](BenchmarkCase& c, const std::string& v) { c.domain.x1 = to_double(v); }},
      {"y1", [](BenchmarkCase& c, const std::string& v) { c.domain.y1 = to_double(v); }},
      {"center_x", [](BenchmarkCase& c, const std::string& v) { c.center.x() = to_double(v); }},
      {"center_y", [](BenchmarkCase& c, const std::string& v) { c.center.y() = to_double(v); }},
      {"radius", [](BenchmarkCase& c, const std::string& v) { c.radius = to_double(v); }},
      {"rho1", [](BenchmarkCase& c, const std::string& v) { c.fluids.rho1 = to_double(v); }},
      {"rho2", [](BenchmarkCase& c, const std::string& v) { c.fluids.rho2 = to_double(v); }},
      {"mu1", [](BenchmarkCase& c, const std::string& v) { c.fluids.mu1 = to_double(v); }},
      {"mu2", [](BenchmarkCase& c, const std::string& v) { c.fluids.mu2 = to_double(v); }},
      {"sigma", [](BenchmarkCase& c, const std::string& v) { c.fluids.sigma = to_double(v); }},
      {"g", [](BenchmarkCase& c, const std::string& v) { c.fluids.g = to_double(v); }},
      {"eps", [](BenchmarkCase& c, const std::string& v) { c.fluids.eps = to_double(v); }},
      {"end_time", [](BenchmarkCase& c, const std::string& v) { c.end_time = to_double(v); }},
      {"nx", [](BenchmarkCase& c, const std::string& v) { c.nx = to_int(v); }},
      {"ny", [](BenchmarkCase& c, const std::string& v) { c.ny = to_int(v); }},
      {"adaptive", [](BenchmarkCase& c, const std::string& v) { c.adaptive = to_bool(v); }},
      {"complexity", [](BenchmarkCase& c, const std::string& v) { c.complexity = to_double(v); }},
      {"pre_adapt_cycles",
       [](BenchmarkCase& c, const std::string& v) { c.pre_adapt_cycles = to_int(v); }},
      {"h_min", [](BenchmarkCase& c, const std::string& v) { c.bounds.h_min = to_double(v); }},
      {"h_max", [](BenchmarkCase& c, const std::string& v) { c.bounds.h_max = to_double(v); }},
      {"remesh_passes", [](BenchmarkCase& c, const std::string& v) { c.remesh_passes = to_int(v); }},
      {"nts", [](BenchmarkCase& c, const std::string& v) { c.nts = to_int(v); }},
      {"increments", [](BenchmarkCase& c, const std::string& v) { c.increments = to_int(v); }},
      {"dt_max",
       [](BenchmarkCase& c, const std::string& v) {
         c.solver.dt_max = to_double(v);
         c.nts = 0;
       }},
      {"newton_tol", [](BenchmarkCase& c, const std::string& v) { c.solver.newton_tol = to_double(v); }},
      {"linear_tol", [](BenchmarkCase& c, const std::string& v) { c.solver.linear_tol = to_double(v); }},
      {"nd_perturbation",
       [](BenchmarkCase& c, const std::string& v) { c.solver.nd_perturbation = to_double(v); }},
      {"max_newton_iters",
       [](BenchmarkCase& c, const std::string& v) { c.solver.max_newton_iters = to_int(v); }},
      {"c_i", [](BenchmarkCase& c, const std::string& v) { c.solver.c_i = to_double(v); }},
      {"dt_growth", [](BenchmarkCase& c, const std::string& v) { c.solver.dt_growth = to_double(v); }},
      {"dt_shrink", [](BenchmarkCase& c, const std::string& v) { c.solver.dt_shrink = to_double(v); }},
      {"gmres_restart",
       [](BenchmarkCase& c, const std::string& v) { c.solver.gmres_restart = to_int(v); }},
      {"gmres_max_iters",
       [](BenchmarkCase& c, const std::string& v) { c.solver.gmres_max_iters = to_int(v); }},
      {"ilu_droptol",
       [](BenchmarkCase& c, const std::string& v) { c.solver.ilu_droptol = to_double(v); }},
      {"ilu_fill", [](BenchmarkCase& c, const std::string& v) { c.solver.ilu_fill = to_int(v); }},
      {"csf_form",
       [](BenchmarkCase& c, const std::string& v) {
         if (v == "nodal_heaviside") {
           c.solver.csf_form = CsfForm::NodalHeaviside;
         } else if (v == "chain_rule") {
           c.solver.csf_form = CsfForm::ChainRule;
         } else {
           throw std::invalid_argument("expected nodal_heaviside or chain_rule");
         }
       }},
      {"exact_curvature",
       [](BenchmarkCase& c, const std::string& v) { c.exact_curvature = to_bool(v); }},
      {"bc_left", [](BenchmarkCase& c, const std::string& v) { c.bc.left = to_wall(v); }},
      {"bc_right", [](BenchmarkCase& c, const std::string& v) { c.bc.right = to_wall(v); }},
      {"bc_bottom", [](BenchmarkCase& c, const std::string& v) { c.bc.bottom = to_wall(v); }},
      {"bc_top", [](BenchmarkCase& c, const std::string& v) { c.bc.top = to_wall(v); }},
      {"shape_times", [](BenchmarkCase& c, const std::string& v) { c.shape_times = to_list(v); }},
      {"vtk_every", [](BenchmarkCase& c, const std::string& v) { c.vtk_every = to_int(v); }},
  };
  return table;
}

}  // namespace

BenchmarkCase parse_config_text(const std::string& text) {
  struct Entry {
    int line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::string case_name = "bubble_case1";
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    Entry e{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key.empty() || e.value.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    }
    if (e.key == "case") {
      case_name = e.value;
      continue;
    }
    if (!setters().count(e.key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + e.key + "'");
    }
    entries.push_back(std::move(e));
  }
  BenchmarkCase c = BenchmarkCase::defaults(case_name);
  for (const Entry& e : entries) {
    try {
      setters().at(e.key)(c, e.value);
    } catch (const std::exception& ex) {
      throw ConfigError("line " + std::to_string(e.line) + ": bad value '" + e.value + "' for " +
                        e.key + " (" + ex.what() + ")");
    }
  }
  c.finalize();
  return c;
}

BenchmarkCase parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string describe(const BenchmarkCase& c) {
  std::ostringstream o;
  o << std::setprecision(10);
  o << "case = " << c.name << '\n'
    << "x0 = " << c.domain.x0 << "\ny0 = " << c.domain.y0 << "\nx1 = " << c.domain.x1
    << "\ny1 = " << c.domain.y1 << '\n'
    << "center_x = " << c.center.x() << "\ncenter_y = " << c.center.y() << "\nradius = " << c.radius
    << '\n'
    << "rho1 = " << c.fluids.rho1 << "\nrho2 = " << c.fluids.rho2 << "\nmu1 = " << c.fluids.mu1
    << "\nmu2 = " << c.fluids.mu2 << "\nsigma = " << c.fluids.sigma << "\ng = " << c.fluids.g
    << "\neps = " << c.fluids.eps << '\n'
    << "end_time = " << c.end_time << "\nnx = " << c.nx << "\nny = " << c.ny << '\n'
    << "adaptive = " << (c.adaptive ? "true" : "false") << "\ncomplexity = " << c.complexity
    << "\npre_adapt_cycles = " << c.pre_adapt_cycles << "\nh_min = " << c.bounds.h_min
    << "\nh_max = " << c.bounds.h_max << "\nremesh_passes = " << c.remesh_passes << '\n'
    << "nts = " << c.nts << "\nincrements = " << c.increments << '\n'
    // dt_max follows from nts when nts is set.
    << (c.nts > 0 ? "# dt_max = " : "dt_max = ") << c.solver.dt_max
    << "\nnewton_tol = " << c.solver.newton_tol << "\nlinear_tol = " << c.solver.linear_tol
    << "\nnd_perturbation = " << c.solver.nd_perturbation
    << "\nmax_newton_iters = " << c.solver.max_newton_iters << "\nc_i = " << c.solver.c_i
    << "\ndt_growth = " << c.solver.dt_growth << "\ndt_shrink = " << c.solver.dt_shrink
    << "\ngmres_restart = " << c.solver.gmres_restart
    << "\ngmres_max_iters = " << c.solver.gmres_max_iters
    << "\nilu_droptol = " << c.solver.ilu_droptol << "\nilu_fill = " << c.solver.ilu_fill << '\n'
    << "csf_form = "
    << (c.solver.csf_form == CsfForm::NodalHeaviside ? "nodal_heaviside" : "chain_rule") << '\n'
    << "exact_curvature = " << (c.exact_curvature ? "true" : "false") << '\n'
    << "bc_left = " << wall_name(c.bc.left) << "\nbc_right = " << wall_name(c.bc.right)
    << "\nbc_bottom = " << wall_name(c.bc.bottom) << "\nbc_top = " << wall_name(c.bc.top) << '\n'
    << "shape_times = ";
  for (std::size_t i = 0; i < c.shape_times.size(); ++i) o << (i ? "," : "") << c.shape_times[i];
  o << "\nvtk_every = " << c.vtk_every << '\n';
  return o.str();
}

BubbleQuantities bubble_quantities(const CoupledState& state, double eps) {
  const Mesh2D& mesh = *state.mesh;
  const QuadratureRule& rule = default_quadrature();
  double vol = 0.0, my = 0.0, mv = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const ElementMap map = ElementMap::of(mesh, t);
    const double area = 0.5 * map.det;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const Bary& b = rule.points[q];
      const double w = area * rule.weights[q] * heaviside_eps(-evaluate(state.phi, mesh, t, b), eps);
      if (w == 0.0) continue;
      vol += w;
      my += w * map.to_physical(b).y();
      mv += w * evaluate(state.vy, mesh, t, b);
    }
  }
  BubbleQuantities out;
  out.volume = vol;
  out.perimeter = extract_interface(state.phi, mesh).length();
  if (vol < 1e-12) return out;
  out.defined = true;
  out.centroid_y = my / vol;
  out.rise_velocity = mv / vol;
  out.circularity = out.perimeter > 0 ? 2.0 * std::sqrt(std::numbers::pi * vol) / out.perimeter : 0.0;
  return out;
}

std::vector<double> TimeSeries::times() const {
  std::vector<double> t;
  for (const SeriesRow& r : rows) t.push_back(r.t);
  return t;
}

std::vector<double> TimeSeries::column(double (*get)(const SeriesRow&)) const {
  std::vector<double> c;
  for (const SeriesRow& r : rows) c.push_back(get(r));
  return c;
}

double relative_L2_time_error(const std::vector<double>& t, const std::vector<double>& q,
                              const std::vector<double>& t_ref, const std::vector<double>& q_ref) {
  if (t.size() != q.size() || t_ref.size() != q_ref.size() || t.size() < 2 || t_ref.size() < 2) {
    throw std::invalid_argument("time series need matching sizes and at least two samples");
  }
  auto resample = [&](double s) {
    if (s <= t.front()) return q.front();
    if (s >= t.back()) return q.back();
    const auto it = std::upper_bound(t.begin(), t.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double w = (s - t[i - 1]) / (t[i] - t[i - 1]);
    return (1 - w) * q[i - 1] + w * q[i];
  };
  double num = 0.0, den = 0.0;
  for (std::size_t i = 1; i < t_ref.size(); ++i) {
    const double h = t_ref[i] - t_ref[i - 1];
    const double d0 = resample(t_ref[i - 1]) - q_ref[i - 1];
    const double d1 = resample(t_ref[i]) - q_ref[i];
    num += 0.5 * h * (d0 * d0 + d1 * d1);
    den += 0.5 * h * (q_ref[i - 1] * q_ref[i - 1] + q_ref[i] * q_ref[i]);
  }
  if (!(den > 0)) throw std::invalid_argument("reference series has zero norm");
  return std::sqrt(num / den);
}

CoupledState initial_state(const BenchmarkCase& c, std::shared_ptr<const Mesh2D> mesh) {
  CoupledState s(mesh);
  s.phi = sample_p2(*mesh, [&](const Vec2& x) { return c.initial_phi(x); });
  s.phi = reinitialize(s.phi, *mesh, c.fluids.eps).phi;
  return s;
}

namespace {

double pressure_jump(const CoupledState& s) {
  const auto [lo, hi] = std::minmax_element(s.p.values.begin(), s.p.values.end());
  return *hi - *lo;
}

SeriesRow make_row(double t, const CoupledState& s, double eps) {
  SeriesRow r;
  r.t = t;
  r.q = bubble_quantities(s, eps);
  r.max_speed = s.max_speed();
  r.pressure_jump = pressure_jump(s);
  return r;
}

/// Incremental CSV writers; a default-constructed instance writes nothing.
class Outputs {
 public:
  Outputs(const RunOutput& out, const BenchmarkCase& c) : dir_(out.dir), echo_(out.echo) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    std::ofstream(dir_ / "run.txt") << describe(c);
    series_.open(dir_ / "series.csv");
    series_ << "t,V_b,y_b,v_b,S_b,max_speed\n";
    series_ << std::setprecision(12);
    increments_.open(dir_ / "increments.csv");
    increments_ << "step,t,dt,halvings,newton_iterations,total_newton_iterations,"
                   "linear_iterations,initial_residual,final_residual,vertices,elements,dofs,"
                   "wall_seconds\n";
    increments_ << std::setprecision(12);
    if (c.is_static()) {
      pressure_.open(dir_ / "pressure.csv");
      pressure_ << "t,max_speed,dp_max,dp_error\n";
      pressure_ << std::setprecision(12);
      dp_exact_ = c.fluids.sigma / c.radius;
    }
  }

  void row(const SeriesRow& r) {
    if (echo_) {
      std::cout << std::setprecision(6) << "t = " << r.t << "  V_b = " << r.q.volume
                << "  y_b = " << r.q.centroid_y << "  v_b = " << r.q.rise_velocity
                << "  S_b = " << r.q.circularity << "  max|v| = " << r.max_speed
                << "  dp = " << r.pressure_jump << std::endl;
    }
    if (pressure_.is_open()) {
      pressure_ << r.t << ',' << r.max_speed << ',' << r.pressure_jump << ','
                << std::abs(r.pressure_jump - dp_exact_) / dp_exact_ << '\n';
      pressure_.flush();
    }
    if (!series_.is_open()) return;
    series_ << r.t << ',' << r.q.volume << ',' << r.q.centroid_y << ',' << r.q.rise_velocity << ','
            << r.q.circularity << ',' << r.max_speed << '\n';
    series_.flush();
  }

  void increment(const IncrementLog& l) {
    if (!increments_.is_open()) return;
    increments_ << l.step << ',' << l.t << ',' << l.dt << ',' << l.halvings << ','
                << l.newton_iterations << ',' << l.total_newton_iterations << ','
                << l.linear_iterations << ',' << l.initial_residual << ',' << l.final_residual
                << ',' << l.vertices << ',' << l.elements << ',' << l.dofs << ','
                << l.wall_seconds << '\n';
    increments_.flush();
  }

  void shape(double t, const InterfaceMesh& iface) {
    if (dir_.empty()) return;
    std::ostringstream name;
    name << "shape_t" << t << ".csv";
    write_interface_csv(iface, (dir_ / name.str()).string());
  }

  void fields(int step, const CoupledState& s) {
    if (dir_.empty()) return;
    std::ostringstream name;
    name << "fields_" << std::setw(5) << std::setfill('0') << step << ".vtk";
    write_state_vtk(s, (dir_ / name.str()).string());
  }

 private:
  std::filesystem::path dir_;
  bool echo_ = false;
  std::ofstream series_;
  std::ofstream increments_;
  std::ofstream pressure_;
  double dp_exact_ = 0.0;
};

IncrementLog make_log(int step, double t, const IncrementResult& r, const RbvmsSystem& sys,
                      double seconds) {
  IncrementLog l;
  l.step = step;
  l.t = t;
  l.dt = r.dt_used;
  l.halvings = r.halvings;
  l.newton_iterations = r.newton.iterations;
  l.total_newton_iterations = r.total_newton_iterations;
  l.linear_iterations = r.total_linear_iterations;
  l.initial_residual = r.newton.initial_norm;
  l.final_residual = r.newton.final_norm;
  l.vertices = sys.mesh().vertex_count();
  l.elements = sys.mesh().triangle_count();
  l.dofs = sys.dof_count();
  l.wall_seconds = seconds;
  return l;
}

AdaptionOptions adaption_options(const BenchmarkCase& c) {
  AdaptionOptions o;
  o.complexity = c.complexity;
  o.bounds = c.bounds;
  o.remesh.max_passes = c.remesh_passes;
  return o;
}

}  // namespace

RunResult run_static_disc(const BenchmarkCase& c, const RunOutput& out) {
  auto mesh = std::make_shared<const Mesh2D>(build_rectangle_mesh(c.domain, c.nx, c.ny));
  RbvmsSystem system(mesh, c.fluids, c.bc, c.solver);
  Outputs files(out, c);
  RunResult result;
  CoupledState state = initial_state(c, mesh);
  double t = 0.0;
  result.series.rows.push_back(make_row(t, state, c.fluids.eps));
  files.row(result.series.rows.back());
  if (c.vtk_every > 0) files.fields(0, state);
  const double dt = c.solver.dt_max;
  for (int k = 1; k <= c.increments; ++k) {
    const auto start = std::chrono::steady_clock::now();
    IncrementResult r;
    try {
      r = advance_increment(system, state, dt);
    } catch (const TimeStepUnderflow& e) {
      result.underflow = true;
      result.message = e.what();
      break;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state = std::move(r.state);
    t += r.dt_used;
    result.increments.push_back(make_log(k, t, r, system, secs));
    files.increment(result.increments.back());
    result.series.rows.push_back(make_row(t, state, c.fluids.eps));
    files.row(result.series.rows.back());
    if (c.vtk_every > 0 && k % c.vtk_every == 0) files.fields(k, state);
  }
  result.final_interface = extract_interface(state.phi, *state.mesh);
  result.final_state = std::move(state);
  return result;
}

RunResult run_bubble(const BenchmarkCase& c, const RunOutput& out) {
  Outputs files(out, c);
  RunResult result;
  const double eps = c.fluids.eps;
  const AdaptionOptions adapt = adaption_options(c);

  auto mesh = std::make_shared<const Mesh2D>(build_rectangle_mesh(c.domain, c.nx, c.ny));
  CoupledState state = initial_state(c, mesh);
  if (c.adaptive) {
    for (int cycle = 0; cycle < c.pre_adapt_cycles; ++cycle) {
      const SensorField sensor = build_sensor(state.phi, state.phi, eps);
      mesh = adapt_to_sensor(*state.mesh, sensor, adapt).mesh;
      state = initial_state(c, mesh);
    }
  }
  P2Field phi_prev = state.phi;

  std::vector<double> snapshots = c.shape_times;
  std::sort(snapshots.begin(), snapshots.end());
  std::size_t next_snapshot = 0;
  double t = 0.0;
  const double t_tol = 1e-9 * c.end_time;
  auto take_snapshots = [&] {
    while (next_snapshot < snapshots.size() && snapshots[next_snapshot] <= t + t_tol) {
      files.shape(snapshots[next_snapshot], extract_interface(state.phi, *state.mesh));
      ++next_snapshot;
    }
  };
  take_snapshots();
  result.series.rows.push_back(make_row(t, state, eps));
  files.row(result.series.rows.back());
  if (c.vtk_every > 0) files.fields(0, state);

  double dt_ctrl = c.solver.dt_max;
  int step = 0;
  while (t < c.end_time - t_tol) {
    const auto start = std::chrono::steady_clock::now();
    if (c.adaptive) {
      const SensorField sensor = build_sensor(state.phi, phi_prev, eps);
      auto new_mesh = adapt_to_sensor(*state.mesh, sensor, adapt).mesh;
      const SpatialIndex index(*state.mesh);
      phi_prev = transfer_field(phi_prev, *state.mesh, index, *new_mesh);
      state = transfer_fields(state, new_mesh);
    }
    RbvmsSystem system(state.mesh, c.fluids, c.bc, c.solver);

    // Land exactly on snapshot times and on the end time.
    double target = c.end_time;
    if (next_snapshot < snapshots.size()) target = std::min(target, snapshots[next_snapshot]);
    double dt_try = dt_ctrl;
    const bool clipped = target - t <= dt_ctrl + t_tol;
    if (clipped) dt_try = target - t;

    IncrementResult r;
    try {
      r = advance_increment(system, state, dt_try);
    } catch (const TimeStepUnderflow& e) {
      result.underflow = true;
      result.message = e.what();
      break;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++step;
    phi_prev = state.phi;
    state = std::move(r.state);
    t = clipped && r.halvings == 0 ? target : t + r.dt_used;
    if (!clipped || r.halvings > 0) dt_ctrl = r.dt_next;

    result.increments.push_back(make_log(step, t, r, system, secs));
    files.increment(result.increments.back());
    result.series.rows.push_back(make_row(t, state, eps));
    files.row(result.series.rows.back());
    take_snapshots();
    if (c.vtk_every > 0 && step % c.vtk_every == 0) files.fields(step, state);
  }
  result.final_interface = extract_interface(state.phi, *state.mesh);
  result.final_state = std::move(state);
  return result;
}

RunResult run_case(const BenchmarkCase& c, const RunOutput& out) {
  return c.is_static() ? run_static_disc(c, out) : run_bubble(c, out);
}

}  // namespace twophase
