#include "contlab/hbm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "contlab/oracle.hpp"

namespace contlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Time-domain sampling and projection matrices of the alternating
// frequency/time scheme. synth (N x n) maps coefficients to samples;
// project (n x N) is its least-squares inverse on the uniform grid.
struct Aft {
  Eigen::MatrixXd synth;
  Eigen::MatrixXd project;

  explicit Aft(const HbmProblem& p) {
    const int n = 2 * p.h + 1;
    const int samples = p.time_samples();
    synth.resize(samples, n);
    project.resize(n, samples);
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int i = 0; i < samples; ++i) {
      fill_basis(kTwoPi * i / samples, row);
      for (int j = 0; j < n; ++j) {
        synth(i, j) = row[static_cast<std::size_t>(j)];
        project(j, i) = row[static_cast<std::size_t>(j)] * (j == 0 ? 1.0 : 2.0) / samples;
      }
    }
  }
};

Eigen::VectorXd as_eigen(const HarmonicVector& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.coeffs().data(), static_cast<Eigen::Index>(v.size()));
}

HarmonicVector from_eigen(int h, const Eigen::VectorXd& v) {
  return HarmonicVector(h, std::vector<double>(v.data(), v.data() + v.size()));
}

void check_coeffs(const HarmonicVector& coeffs, const HbmProblem& problem) {
  if (coeffs.harmonics() != problem.h) {
    throw std::invalid_argument("hbm: coefficient vector does not match the problem's h");
  }
}

// Residual without the external forcing term.
Eigen::VectorXd unforced_residual(const Eigen::VectorXd& c, double omega, const HbmProblem& p,
                                  const Aft& aft) {
  const auto& d = p.plant;
  const int h = p.h;
  Eigen::VectorXd r(c.size());
  r(0) = d.k * c(0);
  for (int n = 1; n <= h; ++n) {
    const double stiff = d.k - d.m * n * n * omega * omega;
    const double damp = d.c * n * omega;
    r(n) = stiff * c(n) - damp * c(h + n);
    r(h + n) = stiff * c(h + n) + damp * c(n);
  }
  if (d.k2 != 0.0 || d.k3 != 0.0) {
    const Eigen::ArrayXd q = (aft.synth * c).array();
    const Eigen::VectorXd g = (d.k2 * q.square() + d.k3 * q.cube()).matrix();
    r += aft.project * g;
  }
  return r;
}

Eigen::MatrixXd unforced_jacobian(const Eigen::VectorXd& c, double omega, const HbmProblem& p,
                                  const Aft& aft) {
  const auto& d = p.plant;
  const int h = p.h;
  const auto n_unk = c.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_unk, n_unk);
  jac(0, 0) = d.k;
  for (int n = 1; n <= h; ++n) {
    const double stiff = d.k - d.m * n * n * omega * omega;
    const double damp = d.c * n * omega;
    jac(n, n) = stiff;
    jac(n, h + n) = -damp;
    jac(h + n, h + n) = stiff;
    jac(h + n, n) = damp;
  }
  if (d.k2 != 0.0 || d.k3 != 0.0) {
    const Eigen::ArrayXd q = (aft.synth * c).array();
    const Eigen::VectorXd dg = (2.0 * d.k2 * q + 3.0 * d.k3 * q.square()).matrix();
    jac += aft.project * (dg.asDiagonal() * aft.synth);
  }
  return jac;
}

Eigen::VectorXd omega_derivative(const Eigen::VectorXd& c, double omega, const HbmProblem& p) {
  const auto& d = p.plant;
  const int h = p.h;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(c.size());
  for (int n = 1; n <= h; ++n) {
    out(n) = -2.0 * d.m * n * n * omega * c(n) - d.c * n * c(h + n);
    out(h + n) = -2.0 * d.m * n * n * omega * c(h + n) + d.c * n * c(n);
  }
  return out;
}

Eigen::VectorXd forced_residual(const Eigen::VectorXd& c, double omega, const HbmProblem& p,
                                const Aft& aft) {
  Eigen::VectorXd r = unforced_residual(c, omega, p, aft);
  r(p.forcing_harmonic) -= p.forcing_amp;
  return r;
}

// Scaled unknowns [coeffs, omega / omega_scale].
Eigen::VectorXd pack(const Eigen::VectorXd& c, double omega, double scale) {
  Eigen::VectorXd y(c.size() + 1);
  y.head(c.size()) = c;
  y(c.size()) = omega / scale;
  return y;
}

class Solver {
 public:
  Solver(const HbmProblem& problem, const ContinuationSettings& settings)
      : p_(problem), s_(settings), aft_(problem), scale_(problem.omega_scale()) {}

  double scale() const { return scale_; }
  const Aft& aft() const { return aft_; }

  NewtonResult correct(Eigen::VectorXd c, double omega, const Constraint& con) const {
    const auto n = c.size();
    const bool natural = con.kind == Corrector::natural;
    for (int it = 0;; ++it) {
      const Eigen::VectorXd r = forced_residual(c, omega, p_, aft_);
      const double rnorm = r.cwiseAbs().maxCoeff();
      double g = 0.0;
      Eigen::VectorXd y;
      if (!natural) {
        y = pack(c, omega, scale_);
        g = constraint_value(y, con);
      }
      if (!std::isfinite(rnorm) || !std::isfinite(g)) {
        throw NewtonFailure("newton_correct: non-finite iterate", from_eigen(p_.h, c), omega, rnorm);
      }
      if (rnorm < s_.newton_tol && std::abs(g) < s_.newton_tol) {
        return {from_eigen(p_.h, c), omega, it, rnorm};
      }
      if (it >= s_.newton_max_iter) {
        throw NewtonFailure("newton_correct: iteration limit reached", from_eigen(p_.h, c), omega,
                            rnorm);
      }
      const Eigen::MatrixXd jq = unforced_jacobian(c, omega, p_, aft_);
      if (natural) {
        const Eigen::VectorXd dc = jq.partialPivLu().solve(-r);
        if (!dc.allFinite()) {
          throw NewtonFailure("newton_correct: singular Jacobian", from_eigen(p_.h, c), omega,
                              rnorm);
        }
        c += dc;
        continue;
      }
      Eigen::MatrixXd jac(n + 1, n + 1);
      jac.topLeftCorner(n, n) = jq;
      jac.topRightCorner(n, 1) = omega_derivative(c, omega, p_) * scale_;
      jac.bottomRows(1) = constraint_gradient(y, con).transpose();
      Eigen::VectorXd rhs(n + 1);
      rhs.head(n) = -r;
      rhs(n) = -g;
      const Eigen::VectorXd dy = jac.partialPivLu().solve(rhs);
      if (!dy.allFinite()) {
        throw NewtonFailure("newton_correct: singular Jacobian", from_eigen(p_.h, c), omega, rnorm);
      }
      c += dy.head(n);
      omega += dy(n) * scale_;
    }
  }

  // Unit tangent of the solution curve with t . reference > 0.
  Eigen::VectorXd tangent(const Eigen::VectorXd& c, double omega,
                          const Eigen::VectorXd& reference) const {
    const auto n = c.size();
    Eigen::MatrixXd jac(n + 1, n + 1);
    jac.topLeftCorner(n, n) = unforced_jacobian(c, omega, p_, aft_);
    jac.topRightCorner(n, 1) = omega_derivative(c, omega, p_) * scale_;
    jac.bottomRows(1) = reference.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs(n) = 1.0;
    Eigen::VectorXd t = jac.partialPivLu().solve(rhs);
    if (!t.allFinite() || t.norm() == 0.0) throw std::runtime_error("hbm: tangent undefined");
    t.normalize();
    if (t.dot(reference) < 0.0) t = -t;
    return t;
  }

 private:
  static double constraint_value(const Eigen::VectorXd& y, const Constraint& con) {
    if (con.kind == Corrector::pseudo_arclength) return con.normal.dot(y - con.anchor);
    return (y - con.anchor).squaredNorm() - con.radius * con.radius;
  }
  static Eigen::VectorXd constraint_gradient(const Eigen::VectorXd& y, const Constraint& con) {
    if (con.kind == Corrector::pseudo_arclength) return con.normal;
    return 2.0 * (y - con.anchor);
  }

  const HbmProblem& p_;
  const ContinuationSettings& s_;
  Aft aft_;
  double scale_;
};

bool unstable_real(const HbmPoint& p, double margin) {
  for (const auto& z : p.multipliers) {
    if (std::abs(z.imag()) <= 1e-12 * std::max(1.0, std::abs(z.real())) && z.real() > 1.0 + margin) {
      return true;
    }
  }
  return false;
}

}  // namespace

void HbmProblem::validate() const {
  plant.validate();
  if (h < 1) throw std::invalid_argument("HbmProblem: h must be at least 1");
  if (forcing_harmonic < 1 || forcing_harmonic > h) {
    throw std::invalid_argument("HbmProblem: forcing_harmonic must lie in [1, h]");
  }
  if (!std::isfinite(forcing_amp)) throw std::invalid_argument("HbmProblem: forcing not finite");
}

void ContinuationSettings::validate() const {
  if (!(min_step > 0.0 && min_step <= step && step <= max_step)) {
    throw std::invalid_argument("ContinuationSettings: need 0 < min_step <= step <= max_step");
  }
  if (!(newton_tol > 0.0)) throw std::invalid_argument("ContinuationSettings: newton_tol <= 0");
  if (newton_max_iter < 1) throw std::invalid_argument("ContinuationSettings: newton_max_iter < 1");
  if (floquet_steps < 1) throw std::invalid_argument("ContinuationSettings: floquet_steps < 1");
  if (max_points < 2) throw std::invalid_argument("ContinuationSettings: max_points < 2");
}

std::optional<double> FloquetResult::largest_real() const {
  std::optional<double> best;
  for (const auto& z : multipliers) {
    if (std::abs(z.imag()) > 1e-12 * std::max(1.0, std::abs(z.real()))) continue;
    if (!best || z.real() > *best) best = z.real();
  }
  return best;
}

std::size_t HbmBranch::peak_index() const {
  if (points.empty()) throw std::logic_error("HbmBranch::peak_index: empty branch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (fundamental_amplitude(points[i]) > fundamental_amplitude(points[best])) best = i;
  }
  return best;
}

double fundamental_amplitude(const HbmPoint& point, int k) {
  return amp_phase(point.coeffs, k).amplitude;
}

HarmonicVector hbm_residual(const HarmonicVector& coeffs, double omega, const HbmProblem& problem) {
  problem.validate();
  check_coeffs(coeffs, problem);
  const Aft aft(problem);
  return from_eigen(problem.h, forced_residual(as_eigen(coeffs), omega, problem, aft));
}

HbmJacobian hbm_jacobian(const HarmonicVector& coeffs, double omega, const HbmProblem& problem) {
  problem.validate();
  check_coeffs(coeffs, problem);
  const Aft aft(problem);
  const Eigen::VectorXd c = as_eigen(coeffs);
  return {unforced_jacobian(c, omega, problem, aft), omega_derivative(c, omega, problem)};
}

NewtonResult newton_correct(const HarmonicVector& coeffs, double omega, const HbmProblem& problem,
                            const ContinuationSettings& settings, const Constraint& constraint) {
  problem.validate();
  check_coeffs(coeffs, problem);
  if (constraint.kind != Corrector::natural) {
    const auto n = static_cast<Eigen::Index>(coeffs.size()) + 1;
    if (constraint.anchor.size() != n ||
        (constraint.kind == Corrector::pseudo_arclength && constraint.normal.size() != n)) {
      throw std::invalid_argument("newton_correct: constraint dimension mismatch");
    }
  }
  const Solver solver(problem, settings);
  return solver.correct(as_eigen(coeffs), omega, constraint);
}

FloquetResult floquet_multipliers(const HarmonicVector& coeffs, double omega,
                                  const DuffingParams& plant, const FloquetOptions& options) {
  plant.validate();
  if (!(omega > 0.0)) throw std::invalid_argument("floquet_multipliers: omega must be positive");
  if (options.steps < 1) throw std::invalid_argument("floquet_multipliers: steps must be positive");
  const double period = kTwoPi / omega;
  const double dt = period / options.steps;
  const double damp = (plant.c + options.feedback_kd) / plant.m;
  auto system = [&](double t) {
    const double q = coeffs.evaluate(omega * t);
    Eigen::Matrix2d a;
    a << 0.0, 1.0, -(plant.k + 2.0 * plant.k2 * q + 3.0 * plant.k3 * q * q) / plant.m, -damp;
    return a;
  };
  Eigen::Matrix2d phi = Eigen::Matrix2d::Identity();
  for (int i = 0; i < options.steps; ++i) {
    const double t = i * dt;
    const Eigen::Matrix2d a0 = system(t);
    const Eigen::Matrix2d am = system(t + 0.5 * dt);
    const Eigen::Matrix2d a1 = system(t + dt);
    const Eigen::Matrix2d k1 = a0 * phi;
    const Eigen::Matrix2d k2 = am * (phi + 0.5 * dt * k1);
    const Eigen::Matrix2d k3 = am * (phi + 0.5 * dt * k2);
    const Eigen::Matrix2d k4 = a1 * (phi + dt * k3);
    phi += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!phi.allFinite()) throw std::runtime_error("floquet_multipliers: integration diverged");
  }
  FloquetResult out;
  out.monodromy = phi;
  const double tr = phi.trace();
  const double det = phi.determinant();
  const double disc = 0.25 * tr * tr - det;
  if (disc >= 0.0) {
    const double root = std::sqrt(disc);
    // Stable evaluation of the two real roots.
    const double big = 0.5 * tr + (tr >= 0.0 ? root : -root);
    const double small = big != 0.0 ? det / big : 0.0;
    out.multipliers = {{big, 0.0}, {small, 0.0}};
  } else {
    const double im = std::sqrt(-disc);
    out.multipliers = {{0.5 * tr, im}, {0.5 * tr, -im}};
  }
  out.stable = std::all_of(out.multipliers.begin(), out.multipliers.end(), [&](const auto& z) {
    return std::abs(z) <= 1.0 + options.stability_margin;
  });
  return out;
}

NewtonResult linear_start(const HbmProblem& problem, double omega,
                          const ContinuationSettings& settings) {
  problem.validate();
  const auto& d = problem.plant;
  const double w = problem.forcing_harmonic * omega;
  const auto frf = linear_frf(d.m, d.c, d.k, problem.forcing_amp, w);
  HarmonicVector guess(problem.h);
  guess.sine(problem.forcing_harmonic) = frf.amplitude * std::cos(frf.phase);
  guess.cosine(problem.forcing_harmonic) = frf.amplitude * std::sin(frf.phase);
  try {
    return newton_correct(guess, omega, problem, settings);
  } catch (const NewtonFailure&) {
  }
  // Homotopy in the forcing amplitude from the linear regime.
  HbmProblem ramp = problem;
  HarmonicVector c(problem.h);
  NewtonResult last{};
  constexpr int kStages = 20;
  for (int i = 1; i <= kStages; ++i) {
    ramp.forcing_amp = problem.forcing_amp * i / kStages;
    last = newton_correct(c, omega, ramp, settings);
    c = last.coeffs;
  }
  return last;
}

HbmBranch continue_branch(const HbmProblem& problem, const ContinuationSettings& settings,
                          const HarmonicVector& start_coeffs, double start_omega,
                          FrequencyRange range, int direction) {
  problem.validate();
  settings.validate();
  check_coeffs(start_coeffs, problem);
  if (!(range.omega_min < range.omega_max)) {
    throw std::invalid_argument("continue_branch: empty frequency range");
  }
  if (direction != 1 && direction != -1) {
    throw std::invalid_argument("continue_branch: direction must be +1 or -1");
  }
  const Solver solver(problem, settings);
  const double scale = solver.scale();
  const auto n = static_cast<Eigen::Index>(start_coeffs.size());

  HbmBranch branch;
  branch.problem = problem;

  FloquetOptions fopt;
  fopt.steps = settings.floquet_steps;
  fopt.stability_margin = settings.stability_margin;

  auto make_point = [&](const NewtonResult& r, const Eigen::VectorXd& t) {
    HbmPoint p;
    p.coeffs = r.coeffs;
    p.omega = r.omega;
    p.tangent_omega = t(n);
    p.iterations = r.iterations;
    if (settings.compute_stability) {
      const auto f = floquet_multipliers(r.coeffs, r.omega, problem.plant, fopt);
      p.multipliers = f.multipliers;
      p.stable = f.stable;
      p.has_stability = true;
    }
    return p;
  };

  const NewtonResult first =
      solver.correct(as_eigen(start_coeffs), start_omega, Constraint::fixed_frequency());
  Eigen::VectorXd axis = Eigen::VectorXd::Zero(n + 1);
  axis(n) = direction;
  Eigen::VectorXd t = solver.tangent(as_eigen(first.coeffs), first.omega, axis);
  branch.points.push_back(make_point(first, t));

  const bool natural = settings.corrector == Corrector::natural;
  double ds = settings.step;
  Eigen::VectorXd y = pack(as_eigen(first.coeffs), first.omega, scale);
  Eigen::VectorXd y_prev;

  auto in_range = [&](double w) { return w >= range.omega_min && w <= range.omega_max; };

  while (static_cast<int>(branch.points.size()) < settings.max_points) {
    Eigen::VectorXd dir = t;
    if (settings.predictor == Predictor::secant && y_prev.size() == y.size()) {
      dir = (y - y_prev).normalized();
    }
    Eigen::VectorXd y_pred;
    Constraint con;
    if (natural) {
      if (std::abs(dir(n)) < 1e-12) {
        branch.truncated = true;
        branch.diagnostic = "natural continuation reached a vertical tangent";
        break;
      }
      y_pred = y + (ds / std::abs(dir(n))) * dir;
      y_pred(n) = y(n) + direction * ds;
      con = Constraint::fixed_frequency();
    } else {
      y_pred = y + ds * dir;
      con.kind = settings.corrector;
      if (con.kind == Corrector::pseudo_arclength) {
        con.anchor = y_pred;
        con.normal = dir;
      } else {
        con.anchor = y;
        con.radius = ds;
      }
    }

    std::optional<NewtonResult> result;
    Eigen::VectorXd t_new;
    try {
      result = solver.correct(y_pred.head(n), y_pred(n) * scale, con);
      const Eigen::VectorXd y_new = pack(as_eigen(result->coeffs), result->omega, scale);
      t_new = solver.tangent(as_eigen(result->coeffs), result->omega, t);
      // Reject backtracking and abrupt turns that signal a jump to another branch.
      if ((y_new - y).dot(dir) <= 0.0 || t_new.dot(t) < 0.8) result.reset();
    } catch (const NewtonFailure&) {
      result.reset();
    } catch (const std::runtime_error&) {
      result.reset();
    }

    if (!result) {
      ds *= 0.5;
      if (ds < settings.min_step) {
        branch.truncated = true;
        branch.diagnostic = "step size fell below min_step at omega = " +
                            std::to_string(branch.points.back().omega);
        break;
      }
      continue;
    }

    y_prev = y;
    y = pack(as_eigen(result->coeffs), result->omega, scale);
    t = t_new;
    branch.points.push_back(make_point(*result, t));
    if (result->iterations <= settings.easy_iterations) {
      ds = std::min(ds * 1.2, settings.max_step);
    }
    if (!in_range(result->omega)) break;
  }
  if (static_cast<int>(branch.points.size()) >= settings.max_points && !branch.truncated &&
      in_range(branch.points.back().omega)) {
    branch.truncated = true;
    branch.diagnostic = "max_points reached";
  }

  const auto& pts = branch.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i].tangent_omega * pts[i + 1].tangent_omega < 0.0) branch.folds.push_back(i);
  }
  if (settings.compute_stability) {
    auto near_fold = [&](std::size_t i) {
      return std::any_of(branch.folds.begin(), branch.folds.end(), [&](std::size_t f) {
        return f + 1 >= i && f <= i + 1;
      });
    };
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      if (unstable_real(pts[i], settings.stability_margin) !=
              unstable_real(pts[i + 1], settings.stability_margin) &&
          !near_fold(i)) {
        branch.branch_points.push_back(i);
      }
    }
  }
  return branch;
}

double AmplitudeSolution::forcing_amplitude() const {
  return std::hypot(forcing_sine, forcing_cosine);
}

double AmplitudeSolution::phase_lag() const {
  return wrap_to_pi(-std::atan2(forcing_cosine, forcing_sine));
}

namespace {

AmplitudeSolution newton_at_amplitude(const HbmProblem& problem, double omega, double amplitude,
                                      const ContinuationSettings& settings,
                                      const std::optional<HarmonicVector>& guess) {
  if (problem.forcing_harmonic != 1) {
    throw std::invalid_argument("solve_at_amplitude: requires forcing_harmonic = 1");
  }
  const Aft aft(problem);
  const int h = problem.h;
  const auto n = static_cast<Eigen::Index>(2 * h + 1);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  if (guess) {
    check_coeffs(*guess, problem);
    c = as_eigen(*guess);
    // Time shift that makes the guess fundamental a pure sine.
    const double phi = std::atan2(c(h + 1), c(1));
    for (int k = 1; k <= h; ++k) {
      const double s = c(k), co = c(h + k);
      const double ca = std::cos(k * phi), sa = std::sin(k * phi);
      c(k) = s * ca + co * sa;
      c(h + k) = co * ca - s * sa;
    }
  }
  c(1) = amplitude;
  c(h + 1) = 0.0;
  // Free unknowns: every coefficient except the fundamental pair.
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != 1 && i != h + 1) free.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(free.size());
  for (int it = 0;; ++it) {
    const Eigen::VectorXd r = unforced_residual(c, omega, problem, aft);
    Eigen::VectorXd rf(m);
    for (Eigen::Index i = 0; i < m; ++i) rf(i) = r(free[static_cast<std::size_t>(i)]);
    const double rnorm = m > 0 ? rf.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(rnorm)) {
      throw NewtonFailure("solve_at_amplitude: non-finite iterate", from_eigen(h, c), omega, rnorm);
    }
    if (rnorm < settings.newton_tol) {
      return {from_eigen(h, c), r(1), r(h + 1)};
    }
    if (it >= settings.newton_max_iter) {
      throw NewtonFailure("solve_at_amplitude: iteration limit reached", from_eigen(h, c), omega,
                          rnorm);
    }
    const Eigen::MatrixXd jac = unforced_jacobian(c, omega, problem, aft);
    Eigen::MatrixXd jf(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        jf(i, j) = jac(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
      }
    }
    const Eigen::VectorXd dx = jf.partialPivLu().solve(-rf);
    if (!dx.allFinite()) {
      throw NewtonFailure("solve_at_amplitude: singular Jacobian", from_eigen(h, c), omega, rnorm);
    }
    for (Eigen::Index i = 0; i < m; ++i) c(free[static_cast<std::size_t>(i)]) += dx(i);
  }
}

// Direct Newton first; on failure, continue in amplitude from the guess by
// halving the step.
AmplitudeSolution amplitude_continuation(const HbmProblem& problem, double omega, double from,
                                         double amplitude, const ContinuationSettings& settings,
                                         const std::optional<HarmonicVector>& guess, int depth) {
  try {
    return newton_at_amplitude(problem, omega, amplitude, settings, guess);
  } catch (const NewtonFailure&) {
    if (depth <= 0) throw;
  }
  const double mid = 0.5 * (from + amplitude);
  const auto half = amplitude_continuation(problem, omega, from, mid, settings, guess, depth - 1);
  return amplitude_continuation(problem, omega, mid, amplitude, settings, half.coeffs, depth - 1);
}

}  // namespace

AmplitudeSolution solve_at_amplitude(const HbmProblem& problem, double omega, double amplitude,
                                     const ContinuationSettings& settings,
                                     const std::optional<HarmonicVector>& guess) {
  problem.validate();
  double from = 0.0;
  if (guess) {
    check_coeffs(*guess, problem);
    from = std::hypot(guess->sine(1), guess->cosine(1));
  }
  return amplitude_continuation(problem, omega, from, amplitude, settings, guess, 6);
}

bool folds_match_stability(const HbmBranch& branch) {
  const auto& pts = branch.points;
  const double margin = 1e-6;
  for (std::size_t f : branch.folds) {
    bool found = false;
    const std::size_t lo = f == 0 ? 0 : f - 1;
    const std::size_t hi = std::min(f + 1, pts.size() - 2);
    for (std::size_t i = lo; i <= hi && !found; ++i) {
      if (!pts[i].has_stability || !pts[i + 1].has_stability) return false;
      found = unstable_real(pts[i], margin) != unstable_real(pts[i + 1], margin);
    }
    if (!found) return false;
  }
  return true;
}

std::vector<double> amplitudes_at(const HbmBranch& branch, double omega, int k) {
  std::vector<double> out;
  const auto& pts = branch.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double w0 = pts[i].omega;
    const double w1 = pts[i + 1].omega;
    if ((omega - w0) * (omega - w1) > 0.0 || w0 == w1) continue;
    // A shared endpoint is reported once.
    if (omega == w1 && i + 2 < pts.size()) continue;
    const double s = (omega - w0) / (w1 - w0);
    out.push_back((1.0 - s) * fundamental_amplitude(pts[i], k) +
                  s * fundamental_amplitude(pts[i + 1], k));
  }
  return out;
}

HbmProblem SteadyOrbit::as_problem(const HbmProblem& forced) const {
  HbmProblem p = forced;
  p.h = coeffs.harmonics();
  p.forcing_harmonic = period_multiple;
  return p;
}

std::vector<SteadyOrbit> isola_seed_search(const HbmProblem& problem, double omega, int n_trials,
                                           std::uint64_t seed, const IsolaSearchOptions& options) {
  problem.validate();
  if (n_trials < 1) throw std::invalid_argument("isola_seed_search: n_trials must be positive");
  const auto& d = problem.plant;
  double box = options.q_box;
  if (!(box > 0.0)) {
    const double f = std::abs(problem.forcing_amp);
    box = 2.0 * std::max(f / d.k, d.k3 > 0.0 ? std::cbrt(f / d.k3) : 0.0);
    if (!(box > 0.0)) box = 1.0;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  SettleOptions so;
  so.steps_per_period = options.steps_per_period;
  so.h = problem.h;
  so.max_period_multiple = options.max_period_multiple;

  std::vector<SteadyOrbit> orbits;
  for (int trial = 0; trial < n_trials; ++trial) {
    PlantState ic{box * uni(rng), omega * box * uni(rng), 0.0};
    SteadyMeasurement meas;
    try {
      meas = settle_and_measure(d, problem.forcing_amp, omega, ic, options.transient_periods,
                                options.measure_periods, so);
    } catch (const PlantDivergence&) {
      continue;
    }
    auto same = [&](const SteadyOrbit& o) {
      const double tol = options.amplitude_rel_tol;
      auto close = [&](double a, double b) {
        return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-12});
      };
      return o.period_multiple == meas.period_multiple && close(o.total_amp, meas.total_amp) &&
             close(o.fundamental_amp, meas.fundamental_amp);
    };
    auto it = std::find_if(orbits.begin(), orbits.end(), same);
    if (it != orbits.end()) {
      ++it->count;
      continue;
    }
    SteadyOrbit o;
    o.period_multiple = meas.period_multiple;
    o.coeffs = meas.coeffs;
    o.total_amp = meas.total_amp;
    o.fundamental_amp = meas.fundamental_amp;
    o.final_state = meas.final_state;
    orbits.push_back(std::move(o));
  }
  std::sort(orbits.begin(), orbits.end(), [](const SteadyOrbit& a, const SteadyOrbit& b) {
    if (a.period_multiple != b.period_multiple) return a.period_multiple < b.period_multiple;
    return a.total_amp < b.total_amp;
  });
  return orbits;
}

}  // namespace contlab
