#include "contlab/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "contlab/io.hpp"

namespace contlab {

int detect_period_multiple(const std::vector<std::pair<double, double>>& poincare, double power,
                           int l_max, double threshold) {
  const int m = static_cast<int>(poincare.size());
  l_max = std::min(l_max, m - 1);
  if (l_max < 1 || !(power > 0.0)) return 1;
  int best = 1;
  double best_r = -1e300;
  for (int l = 1; l <= l_max; ++l) {
    double acc = 0.0;
    for (int j = 0; j + l < m; ++j) {
      const double dq = poincare[j].first - poincare[j + l].first;
      const double dv = poincare[j].second - poincare[j + l].second;
      acc += dq * dq + dv * dv;
    }
    const double r = 1.0 - acc / (m - l) / (2.0 * power);
    if (r > threshold) return l;
    if (r > best_r) {
      best_r = r;
      best = l;
    }
  }
  return best;
}

SteadyMeasurement settle_and_measure(const DuffingParams& params, double f, double omega,
                                     const PlantState& ic, int n_transient, int n_measure,
                                     const SettleOptions& options) {
  params.validate();
  if (!(omega > 0.0)) throw std::invalid_argument("settle_and_measure: omega must be positive");
  if (n_transient < 1 || n_measure < 1) {
    throw std::invalid_argument("settle_and_measure: need at least one transient and measure period");
  }
  if (options.steps_per_period < 4 || options.h < 1 || options.max_period_multiple < 1) {
    throw std::invalid_argument("settle_and_measure: invalid options");
  }
  const int steps = options.steps_per_period;
  const double period = 2.0 * std::numbers::pi / omega;
  const double dt = period / steps;
  Plant plant(params);
  plant.reset({ic.q, ic.v, 0.0});

  auto advance_period = [&](long long period_index, std::vector<double>* record) {
    for (int i = 0; i < steps; ++i) {
      const double t = static_cast<double>(period_index * steps + i) * dt;
      const DriveSample drive{f * std::sin(omega * t), f * std::sin(omega * (t + 0.5 * dt)),
                              f * std::sin(omega * (t + dt))};
      plant.step(drive, dt);
      if (record) record->push_back(plant.state().q);
    }
  };

  long long index = 0;
  for (; index < n_transient; ++index) advance_period(index, nullptr);

  std::vector<double> record;
  record.reserve(static_cast<std::size_t>(n_measure) * steps);
  std::vector<std::pair<double, double>> poincare;
  double power = 0.0;
  std::size_t n_power = 0;
  for (int j = 0; j < n_measure; ++j, ++index) {
    advance_period(index, &record);
    const auto& s = plant.state();
    poincare.emplace_back(s.q, s.v / omega);
  }
  // Power of (q, v / omega) from the displacement record via central differences.
  for (std::size_t i = 1; i + 1 < record.size(); ++i) {
    const double v = (record[i + 1] - record[i - 1]) / (2.0 * dt) / omega;
    power += record[i] * record[i] + v * v;
    ++n_power;
  }
  power = n_power ? power / static_cast<double>(n_power) : 0.0;

  const int l = detect_period_multiple(poincare, power, options.max_period_multiple,
                                       options.autocorrelation_threshold);
  const int base_periods = std::max(1, n_measure / l);
  if (n_measure < l) {
    throw std::invalid_argument("settle_and_measure: measurement shorter than the response period");
  }
  const double t_first = static_cast<double>(n_transient) * period + dt;
  SteadyMeasurement out;
  out.period_multiple = l;
  out.coeffs = dft_over_periods(record, dt, omega / l, base_periods, options.h * l, t_first);
  const auto ap = amp_phase(out.coeffs, l);
  out.fundamental_amp = ap.amplitude;
  out.phase = ap.phase;
  out.total_amp = total_amplitude(record, static_cast<std::size_t>(l) * steps);
  out.final_state = plant.state();
  return out;
}

FrfPoint linear_frf(double m, double c, double k, double f, double omega) {
  if (!(m > 0.0) || !(k > 0.0)) throw std::domain_error("linear_frf: m and k must be positive");
  const double re = k - m * omega * omega;
  const double im = c * omega;
  return {f / std::hypot(re, im), -std::atan2(im, re)};
}

std::vector<std::complex<double>> linear_multipliers(double m, double c, double k, double period) {
  if (!(m > 0.0) || !(k > 0.0)) {
    throw std::domain_error("linear_multipliers: m and k must be positive");
  }
  const std::complex<double> disc = std::sqrt(std::complex<double>(c * c / (m * m) - 4.0 * k / m));
  const std::complex<double> l1 = 0.5 * (-c / m + disc);
  const std::complex<double> l2 = 0.5 * (-c / m - disc);
  return {std::exp(l1 * period), std::exp(l2 * period)};
}

std::filesystem::path FixtureStore::path(const std::string& name, const std::string& digest) const {
  return dir_ / (name + "-" + digest + ".csv");
}

bool FixtureStore::exists(const std::string& name, const std::string& digest) const {
  return std::filesystem::exists(path(name, digest));
}

void FixtureStore::save(const std::string& name, const std::string& digest,
                        const std::vector<std::string>& header,
                        const std::vector<std::vector<double>>& rows) const {
  std::filesystem::create_directories(dir_);
  std::ofstream os(path(name, digest));
  if (!os) throw std::runtime_error("FixtureStore: cannot write " + path(name, digest).string());
  write_csv_row(os, header);
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    cells.reserve(row.size());
    for (double x : row) cells.push_back(format_double(x));
    write_csv_row(os, cells);
  }
}

std::vector<std::vector<double>> FixtureStore::load(const std::string& name,
                                                    const std::string& digest) const {
  std::ifstream is(path(name, digest));
  if (!is) throw std::runtime_error("FixtureStore: missing " + path(name, digest).string());
  std::string line;
  std::getline(is, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_csv_line(line)) {
      const double x = parse_double(cell);
      row.push_back(x);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace contlab
