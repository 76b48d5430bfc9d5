#pragma once

// Measured branches and response surfaces: the artifacts every method emits.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "contlab/control.hpp"
#include "contlab/fourier.hpp"

namespace contlab {

struct BranchPoint {
  double omega{0.0};
  double a_star{0.0};
  /// Fundamental amplitude of the realized forcing.
  double f_meas{0.0};
  /// Fundamental amplitude of the response.
  double a1{0.0};
  /// Response fundamental phase minus forcing fundamental phase, in (-pi, pi].
  double phase1{0.0};
  double total_amp{0.0};
  HarmonicVector response{};
  HarmonicVector forcing{};
  InvasivenessReport invasiveness{};
  bool converged{false};
  std::optional<bool> open_loop_stable{};
  /// Simulated experiment time at which the point was recorded.
  double wall_time{0.0};
};

struct Branch {
  std::string method;
  std::vector<BranchPoint> points;
  std::string config_digest;
  bool truncated{false};
  std::string diagnostic;

  std::size_t flagged() const;
};

/// Columns: index, omega, a_star, f_meas, a1, phase1, total_amp,
/// invasiveness_rel, converged, open_loop_stable, wall_time_s.
void write_branch_csv(std::ostream& os, const Branch& branch);
/// Scalar columns only; harmonic vectors are left empty.
Branch read_branch_csv(std::istream& is);

/// Force and response amplitude over a rectilinear (omega, a*) grid.
struct SurfaceGrid {
  std::vector<double> omega_axis;
  std::vector<double> a_star_axis;
  /// Row-major in (omega, a*): index i * a_star_axis.size() + j.
  std::vector<double> f;
  std::vector<double> a;
  std::vector<std::uint8_t> flag;

  SurfaceGrid() = default;
  SurfaceGrid(std::vector<double> omega, std::vector<double> a_star);

  std::size_t index(std::size_t i, std::size_t j) const { return i * a_star_axis.size() + j; }
  /// Throws std::invalid_argument unless the axes are strictly increasing and
  /// every field has one entry per cell.
  void validate() const;
  std::size_t flagged() const;
};

/// Long format: omega, a_star, f_meas, a_meas, flag.
void write_surface_csv(std::ostream& os, const SurfaceGrid& grid);
SurfaceGrid read_surface_csv(std::istream& is);

}  // namespace contlab
