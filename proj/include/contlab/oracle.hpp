#pragma once

// Brute-force and closed-form references: long time integration to steady
// state, the linear single-DOF frequency response and monodromy, and a small
// fixture store for frozen oracle outputs.

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "contlab/fourier.hpp"
#include "contlab/plant.hpp"

namespace contlab {

struct SettleOptions {
  int steps_per_period{1000};
  /// Harmonics per forcing harmonic kept in the measured vector.
  int h{15};
  int max_period_multiple{5};
  double autocorrelation_threshold{0.999};
};

struct SteadyMeasurement {
  /// Response coefficients in the base frequency omega / period_multiple with
  /// h * period_multiple harmonics.
  HarmonicVector coeffs;
  int period_multiple{1};
  /// Amplitude of the component at the forcing frequency.
  double fundamental_amp{0.0};
  double phase{0.0};
  /// max |q| over the final response period.
  double total_amp{0.0};
  PlantState final_state{};
};

/// Integrate f sin(omega t) from ic for n_transient forcing periods, then
/// measure over the last n_measure periods. Throws PlantDivergence.
SteadyMeasurement settle_and_measure(const DuffingParams& params, double f, double omega,
                                     const PlantState& ic, int n_transient, int n_measure,
                                     const SettleOptions& options = {});

/// Smallest lag l in [1, l_max] whose normalized Poincare autocorrelation
/// 1 - <|P_j - P_{j+l}|^2> / (2 power) exceeds threshold; the best lag when
/// none does. Samples are (q, v / omega) and power is the mean of
/// q^2 + (v / omega)^2 along the record.
int detect_period_multiple(const std::vector<std::pair<double, double>>& poincare, double power,
                           int l_max, double threshold);

struct FrfPoint {
  double amplitude{0.0};
  double phase{0.0};  ///< response lag, -atan2(c w, k - m w^2)
};

FrfPoint linear_frf(double m, double c, double k, double f, double omega);

/// Floquet multipliers of m q'' + c q' + k q = 0 over a period T.
std::vector<std::complex<double>> linear_multipliers(double m, double c, double k, double period);

/// CSV fixture keyed by a name and a digest: <dir>/<name>-<digest>.csv.
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path(const std::string& name, const std::string& digest) const;
  bool exists(const std::string& name, const std::string& digest) const;
  void save(const std::string& name, const std::string& digest,
            const std::vector<std::string>& header,
            const std::vector<std::vector<double>>& rows) const;
  /// Rows of a stored fixture; throws std::runtime_error when absent.
  std::vector<std::vector<double>> load(const std::string& name, const std::string& digest) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace contlab
