#pragma once

// Harmonic balance discretization of the Duffing-family oscillator, Newton
// correction, branch continuation and Floquet stability. This engine is the
// reference against which every experimental method is checked.

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "contlab/fourier.hpp"
#include "contlab/plant.hpp"

namespace contlab {

struct HbmProblem {
  DuffingParams plant{};
  int h{15};
  double forcing_amp{0.0};
  /// Forcing is forcing_amp * sin(forcing_harmonic * omega t); a value l > 1
  /// describes a 1:l subharmonic orbit with base frequency omega.
  int forcing_harmonic{1};

  void validate() const;
  /// Alternating frequency/time grid size (>= 4h+1).
  int time_samples() const { return 4 * h + 4; }
  /// Frequency unit used to scale omega inside arclength measures.
  double omega_scale() const { return plant.natural_frequency(); }
};

enum class Predictor { secant, tangent };
enum class Corrector { natural, pseudo_arclength, arclength_sphere };

struct ContinuationSettings {
  double step{0.05};
  double min_step{1e-6};
  double max_step{0.25};
  double newton_tol{1e-9};
  int newton_max_iter{25};
  Predictor predictor{Predictor::tangent};
  Corrector corrector{Corrector::pseudo_arclength};
  /// Iteration count at or below which the step grows by 1.2.
  int easy_iterations{4};
  int max_points{20000};
  bool compute_stability{true};
  double stability_margin{1e-6};
  int floquet_steps{1000};

  void validate() const;
};

class NewtonFailure : public std::runtime_error {
 public:
  NewtonFailure(const std::string& what, HarmonicVector coeffs, double omega, double residual)
      : std::runtime_error(what), coeffs_(std::move(coeffs)), omega_(omega), residual_(residual) {}
  const HarmonicVector& last_coeffs() const { return coeffs_; }
  double last_omega() const { return omega_; }
  double last_residual() const { return residual_; }

 private:
  HarmonicVector coeffs_;
  double omega_;
  double residual_;
};

/// Extra equation that closes the (2h+1) x (2h+2) harmonic balance system.
struct Constraint {
  Corrector kind{Corrector::natural};
  /// Scaled unknowns [coeffs, omega / omega_scale]: the predicted point for the
  /// hyperplane, the previous point for the sphere.
  Eigen::VectorXd anchor;
  /// Hyperplane normal (unit) in scaled unknowns.
  Eigen::VectorXd normal;
  double radius{0.0};

  static Constraint fixed_frequency() { return {}; }
};

struct NewtonResult {
  HarmonicVector coeffs;
  double omega{0.0};
  int iterations{0};
  double residual_norm{0.0};
};

struct FloquetResult {
  std::vector<std::complex<double>> multipliers;
  Eigen::Matrix2d monodromy;
  bool stable{true};
  /// Largest real multiplier, or nullopt when the pair is complex.
  std::optional<double> largest_real() const;
};

struct HbmPoint {
  HarmonicVector coeffs;
  double omega{0.0};
  /// d(omega)/ds of the unit tangent, scaled.
  double tangent_omega{0.0};
  int iterations{0};
  std::vector<std::complex<double>> multipliers;
  bool stable{true};
  bool has_stability{false};
};

struct HbmBranch {
  HbmProblem problem;
  std::vector<HbmPoint> points;
  /// Index i marks a turning point in omega between points i and i+1.
  std::vector<std::size_t> folds;
  /// Index i marks a real multiplier crossing +1 between i and i+1 with no fold.
  std::vector<std::size_t> branch_points;
  bool truncated{false};
  std::string diagnostic;

  /// Peak fundamental amplitude point (the resonance peak).
  std::size_t peak_index() const;
};

/// Response amplitude at harmonic k of the point's coefficients.
double fundamental_amplitude(const HbmPoint& point, int k = 1);

HarmonicVector hbm_residual(const HarmonicVector& coeffs, double omega, const HbmProblem& problem);

struct HbmJacobian {
  Eigen::MatrixXd d_coeffs;  ///< (2h+1) x (2h+1)
  Eigen::VectorXd d_omega;   ///< (2h+1)
};

/// Analytic Jacobian through the alternating frequency/time chain rule.
HbmJacobian hbm_jacobian(const HarmonicVector& coeffs, double omega, const HbmProblem& problem);

NewtonResult newton_correct(const HarmonicVector& coeffs, double omega, const HbmProblem& problem,
                            const ContinuationSettings& settings,
                            const Constraint& constraint = Constraint::fixed_frequency());

struct FloquetOptions {
  int steps{1000};
  /// Extra velocity feedback kd (v* - v) acting on the orbit.
  double feedback_kd{0.0};
  double stability_margin{1e-6};
};

/// Monodromy of the variational equation along the harmonic balance orbit.
FloquetResult floquet_multipliers(const HarmonicVector& coeffs, double omega,
                                  const DuffingParams& plant, const FloquetOptions& options = {});

struct FrequencyRange {
  double omega_min{0.0};
  double omega_max{0.0};
};

/// Follow a branch from a converged start point. direction = +1 starts toward
/// increasing omega, -1 toward decreasing omega.
HbmBranch continue_branch(const HbmProblem& problem, const ContinuationSettings& settings,
                          const HarmonicVector& start_coeffs, double start_omega,
                          FrequencyRange range, int direction = +1);

/// Converged start at omega obtained from a small-amplitude linear guess.
NewtonResult linear_start(const HbmProblem& problem, double omega,
                          const ContinuationSettings& settings);

/// Periodic orbit whose fundamental is exactly amplitude * sin(omega t); the
/// tonal forcing (sine and cosine parts) needed to sustain it is returned.
struct AmplitudeSolution {
  HarmonicVector coeffs;
  double forcing_sine{0.0};
  double forcing_cosine{0.0};
  double forcing_amplitude() const;
  /// Response phase lag relative to the forcing, in (-pi, pi].
  double phase_lag() const;
};

AmplitudeSolution solve_at_amplitude(const HbmProblem& problem, double omega, double amplitude,
                                     const ContinuationSettings& settings,
                                     const std::optional<HarmonicVector>& guess = std::nullopt);

/// True when every fold of the branch has a real multiplier crossing +1
/// within one continuation step of it.
bool folds_match_stability(const HbmBranch& branch);

/// Amplitudes of the branch at omega (linear interpolation between points).
std::vector<double> amplitudes_at(const HbmBranch& branch, double omega, int k = 1);

struct IsolaSearchOptions {
  /// Initial conditions drawn uniformly in |q| <= q_box, |v| <= omega * q_box;
  /// non-positive selects a box from the static and cubic scales.
  double q_box{0.0};
  int transient_periods{300};
  int measure_periods{24};
  int max_period_multiple{5};
  int steps_per_period{1000};
  double amplitude_rel_tol{1e-3};
};

struct SteadyOrbit {
  int period_multiple{1};
  /// Coefficients in the base frequency omega / period_multiple.
  HarmonicVector coeffs;
  double total_amp{0.0};
  double fundamental_amp{0.0};  ///< at the forcing frequency
  int count{1};                 ///< trials landing on this orbit
  PlantState final_state{};

  /// Problem and base frequency for continuing this orbit with continue_branch.
  HbmProblem as_problem(const HbmProblem& forced) const;
};

std::vector<SteadyOrbit> isola_seed_search(const HbmProblem& problem, double omega, int n_trials,
                                           std::uint64_t seed,
                                           const IsolaSearchOptions& options = {});

}  // namespace contlab
