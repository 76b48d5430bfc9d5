#pragma once

// Constant-force NFR extraction from measured (omega, a*) surfaces and
// branch-to-branch comparison metrics.

#include <string>
#include <vector>

#include "contlab/branch.hpp"
#include "contlab/hbm.hpp"

namespace contlab {

/// Cubic spline with not-a-knot ends; two nodes give a line, three a parabola.
class CubicSpline {
 public:
  CubicSpline() = default;
  /// Throws std::invalid_argument unless x is strictly increasing, sizes
  /// match and there are at least two nodes.
  CubicSpline(std::vector<double> x, std::vector<double> y);

  double operator()(double x) const;
  double front() const { return x_.front(); }
  double back() const { return x_.back(); }
  bool empty() const { return x_.empty(); }

 private:
  std::vector<double> x_, y_, m_;  // m_: second derivatives at the nodes
};

/// Tensor-product bicubic spline on a rectilinear grid. Masked nodes are
/// dropped: each omega row is splined over its unmasked a* nodes, then the
/// rows covering a* are splined across omega. Outside the covered region the
/// value is NaN.
class GridInterpolant {
 public:
  GridInterpolant(const std::vector<double>& omega_axis, const std::vector<double>& a_star_axis,
                  const std::vector<double>& values, const std::vector<std::uint8_t>& mask);

  double operator()(double omega, double a_star) const;

 private:
  std::vector<double> omega_axis_;
  std::vector<CubicSpline> rows_;
};

struct NfrSample {
  double omega{0.0};
  double a_star{0.0};
  /// Interpolated response amplitude.
  double amplitude{0.0};
};

struct SliceResult {
  std::vector<std::vector<NfrSample>> polylines;
  std::string diagnostic;
};

struct SliceOptions {
  /// Sub-cells per grid cell along each axis for marching squares.
  int refine{4};
  int bisection_steps{40};
};

/// Zero level of f(omega, a*) - f_star traced by marching squares over the
/// refined grid, crossings polished by bisection on the spline. Sub-cells of
/// any grid cell with a flagged corner are skipped. Closed loops repeat their
/// first sample at the end.
SliceResult slice_constant_force(const SurfaceGrid& grid, double f_star, const SliceOptions& options = {});

/// Amplitude curve in (omega, a): a measured branch, an HBM branch or a slice.
struct Curve {
  std::vector<double> omega;
  std::vector<double> amplitude;
};

Curve curve_of(const Branch& branch);
Curve curve_of(const HbmBranch& branch, int harmonic = 1);
Curve curve_of(const std::vector<NfrSample>& polyline);

struct CompareReport {
  double max_rel{0.0};
  double mean_rel{0.0};
  /// |omega_peak(test) - omega_peak(reference)| / omega_peak(reference).
  double peak_omega_rel{0.0};
  std::size_t samples{0};
};

/// The test curve is resampled uniformly in arclength over the frequency band
/// both curves cover; each sample is matched to the reference amplitude at
/// the same frequency nearest to it. Throws std::invalid_argument on
/// disjoint coverage.
CompareReport branch_compare(const Curve& test, const Curve& reference, std::size_t samples = 400);

}  // namespace contlab
