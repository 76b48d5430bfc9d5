#pragma once

// Testing and continuation methods run against a black-box Plant: swept and
// stepped sine, control-based continuation with finite-difference Newton
// (CBC-FD), S-curve CBC (SCBC), phase-locked loop (PLL), response control
// testing (RCT) and arclength CBC (ACBC).
//
// Every method only drives the plant and reads its sensed outputs; the
// simulated time doubles as the experiment clock.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "contlab/branch.hpp"
#include "contlab/control.hpp"
#include "contlab/plant.hpp"

namespace contlab {

// ---------------------------------------------------------------------------
// Swept and stepped sine

enum class SweepSpacing { logarithmic, linear };

struct SweepSettings {
  double forcing{1.0};
  double omega_start{0.5};
  double omega_end{2.0};
  /// d(ln omega)/dt for logarithmic spacing, d(omega)/dt for linear [1/s or rad/s^2].
  double rate{1e-4};
  SweepSpacing spacing{SweepSpacing::logarithmic};
  int steps_per_period{200};
  /// Forcing cycles demodulated into each BranchPoint.
  int cycles_per_point{1};
  /// Periods held at omega_start before the sweep begins.
  int lead_in_periods{200};
  int h{5};
};

/// Direction follows the sign of omega_end - omega_start.
Branch swept_sine(Plant& plant, const SweepSettings& settings);

struct Jump {
  std::size_t index{0};
  double omega{0.0};
  double a_before{0.0};
  double a_after{0.0};
};

/// Places where a1 changes by more than rel_threshold of the larger value
/// across `window` consecutive points. Hits separated by fewer than `window`
/// quiet points form one region, reported at its steepest single-point change.
std::vector<Jump> detect_jumps(const Branch& branch, double rel_threshold = 0.3,
                               std::size_t window = 20);

enum class SteppedMode { frequency, amplitude };

struct SteppedSettings {
  SteppedMode mode{SteppedMode::frequency};
  /// Forcing amplitude in frequency mode.
  double forcing{1.0};
  /// Frequency in amplitude mode.
  double omega{1.0};
  /// Frequencies or forcing amplitudes, visited in order.
  std::vector<double> grid;
  int settle_periods{50};
  int measure_periods{10};
  int steps_per_period{1000};
  int h{5};
};

/// Divergence at a grid point flags it and restarts the plant from rest.
Branch stepped_sine(Plant& plant, const SteppedSettings& settings);

// ---------------------------------------------------------------------------
// Control-based continuation

struct CbcFdSettings {
  /// Target forcing profile: f_star sin(omega t), nothing else.
  double f_star{1.0};
  double kd{2.0};
  int h{5};
  double omega_start{1.0};
  double omega_end{2.0};
  double step{0.05};
  double min_step{1e-3};
  double max_step{0.2};
  /// Convergence when the max-norm of b - b* is below tol_b * f_star.
  double tol_b{1e-4};
  int newton_max_iter{8};
  double fd_rel{1e-3};
  double fd_abs{1e-6};
  /// Grow a finite-difference step until its response clears the
  /// measurement repeatability by a factor of 10 (at most 4 doublings).
  bool fd_adaptive{false};
  int settle_periods{30};
  int measure_periods{5};
  int steps_per_period{500};
  int max_points{400};
  bool probe_stability{false};
  StabilityProbeOptions probe{};
};

Branch cbc_fd(Plant& plant, const CbcFdSettings& settings);

/// Closed-loop measurement used by the CBC-family methods.
struct LoopMeasurement {
  HarmonicVector response;
  HarmonicVector force;
  double total_amp{0.0};
};

/// Runs u = kd (x*' - v) + feedforward with the reference held fixed; used
/// directly by tests to probe the controller.
class ClosedLoopRig {
 public:
  ClosedLoopRig(Plant& plant, int steps_per_period) : plant_(plant), steps_(steps_per_period) {}

  /// Settle then measure with x* = h(theta) reference at frequency omega.
  LoopMeasurement run(const HarmonicVector& reference, double omega, double kd, int settle_periods,
                      int measure_periods, const HarmonicVector* feedforward = nullptr);

  double phase() const { return phase_; }
  Plant& plant() { return plant_; }

 private:
  Plant& plant_;
  int steps_;
  double phase_{0.0};
};

enum class ScbcVariant { picard, adaptive };

struct ScbcSettings {
  double omega{1.0};
  std::vector<double> a_star_grid;
  ScbcVariant variant{ScbcVariant::adaptive};
  double kd{2.0};
  int h{7};
  /// Picard: relative change of the non-fundamental reference; adaptive:
  /// relative invasiveness at the end of the hold.
  double tol{0.01};
  int max_iterations{20};
  int settle_periods{50};
  int measure_periods{10};
  int steps_per_period{1000};
  /// LMS gain of the adaptive variant as mu_bar (mu = mu_bar omega, halved
  /// for h > 1); the reference loop needs mu well below omega / h.
  double mu_bar{0.01};
  bool probe_stability{false};
  StabilityProbeOptions probe{};
};

/// S-curve at fixed omega; points flagged when the iteration does not settle.
Branch scbc(Plant& plant, const ScbcSettings& settings);

/// SCBC S-curves over a frequency grid assembled into a force surface.
/// Flagged points become flagged cells.
SurfaceGrid scbc_surface(Plant& plant, const ScbcSettings& settings,
                         const std::vector<double>& omega_grid);

// ---------------------------------------------------------------------------
// Phase-locked loop

struct PllTarget {
  double forcing{1.0};
  double theta_star{-1.5707963267948966};
};

/// Targets for an NFR: fixed forcing, phase set points from theta_begin to theta_end.
std::vector<PllTarget> pll_phase_schedule(double forcing, double theta_begin, double theta_end,
                                          int n);
/// Targets for a backbone: theta* = -pi/2 (or given) over the forcing levels.
std::vector<PllTarget> pll_forcing_schedule(const std::vector<double>& forcing,
                                            double theta_star = -1.5707963267948966);

struct PllSettings {
  std::vector<PllTarget> targets;
  /// Harmonic k of the response whose phase against k phi is locked.
  int lock_harmonic{1};
  PidGains gains{0.05, 0.02, 0.0};
  /// Starting frequency; also the PID bias.
  double omega_start{1.0};
  /// Frequency bounds enforced on the PID output.
  double omega_min{1e-3};
  double omega_max{1e6};
  /// Loop bandwidth for derivative smoothing [rad/s]; non-positive selects omega_start / 20.
  double bandwidth{0.0};
  int h{5};
  double mu_bar{1.0};
  /// Forcing periods spent moving to a new target and holding it.
  int ramp_periods{20};
  int settle_periods{150};
  int measure_periods{10};
  int steps_per_period{500};
  /// Lock declared when |theta - theta*| and the frequency spread over the
  /// measurement stay within these bounds.
  double lock_tol{1e-3};
  double omega_spread_tol{1e-3};
};

struct PllPointDiagnostics {
  /// Measured phase error theta - theta* over the measurement window.
  double phase_error{0.0};
  double omega_spread{0.0};
  bool integral_clamped{false};
};

/// Emits one BranchPoint per target; phase1 holds the phase of the locked
/// harmonic relative to k phi.
Branch pll(Plant& plant, const PllSettings& settings,
           std::vector<PllPointDiagnostics>* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Response control testing

struct RctSettings {
  std::vector<double> omega_grid;
  std::vector<double> a_star_grid;
  double tol{0.01};
  int max_corrections{10};
  /// Cells whose final amplitude error exceeds this are flagged.
  double flag_threshold{0.2};
  int hold_periods{50};
  int measure_periods{10};
  int steps_per_period{500};
  /// Drive amplitude per unit target for the very first point.
  double initial_gain{1.0};
  /// Correction u <- u (a* / a)^relaxation, in (0, 1].
  double relaxation{1.0};
  int h{5};
};

struct RctCell {
  int corrections{0};
  double rel_error{0.0};
  bool converged{false};
};

SurfaceGrid rct(Plant& plant, const RctSettings& settings, std::vector<RctCell>* cells = nullptr);

// ---------------------------------------------------------------------------
// Arclength CBC

enum class SweepLaw { constant, integral, sign };

/// d(alpha)/dt: constant -> rate (sign carries the direction), integral ->
/// -rate (f - f*), sign -> -rate sign(f - f*).
double sweep_law(SweepLaw law, double rate, double error);

struct EllipseState {
  double omega_n{0.0};
  double a_n{0.0};
  double d_omega{0.05};
  double d_a{0.05};
  double alpha{0.0};
  SweepLaw law{SweepLaw::integral};
  /// r_alpha or k_alpha; its sign selects the global sweep direction.
  double rate{1.0};
  double sigma{0.5};
  double rho{0.01};

  void validate() const;
  double omega() const;
  double a_star() const;
};

struct AcbcSettings {
  double f_star{0.05};
  double kd{1.0};
  int h{15};
  /// Continuous LMS gain of the reference non-fundamental tracker.
  double mu{0.0025};
  /// Force demodulator gain as mu_bar; halved for h > 1 as in default_lms_gain.
  double force_mu_bar{2.0};
  EllipseState ellipse{};
  double omega_start{0.3};
  /// Starting target amplitude; non-positive requests a search along a*.
  double a_start{0.0};
  double omega_min{0.0};
  double omega_max{1e6};
  int n_points{200};
  /// Wait after prediction and after correction, in forcing periods.
  double t_steady{50.0};
  int steps_per_period{1000};
  /// Frequency fixing the integration step dt = 2 pi / (omega_dt steps_per_period);
  /// non-positive selects omega_start.
  double omega_dt{0.0};
  int max_retries{5};
  /// Forcing periods over which an accepted point is re-measured.
  int verify_periods{5};
  bool probe_stability{false};
  StabilityProbeOptions probe{};
};

class NoIntersection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Algorithm: predict on the ellipse around the last point with the previous
/// alpha, wait, sweep alpha until |f - f*| <= sigma rho f*, wait, accept when
/// |f - f*| <= rho f* holds over verify_periods fresh periods, else halve the
/// sweep rate and re-correct. A correction sweeping more than a full turn
/// ends the branch with a no-intersection diagnostic.
Branch acbc(Plant& plant, const AcbcSettings& settings);

}  // namespace contlab
