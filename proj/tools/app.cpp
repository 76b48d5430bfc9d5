#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "contlab/branch.hpp"
#include "contlab/hbm.hpp"
#include "contlab/io.hpp"
#include "contlab/methods.hpp"
#include "contlab/oracle.hpp"
#include "contlab/postprocess.hpp"

namespace contlab::app {
namespace {

constexpr double kPi = 3.14159265358979323846;

Json dimensionless_plant(double zeta0, double beta2) {
  return {{"m", 1.0}, {"c", 2.0 * zeta0}, {"k", 1.0}, {"k2", beta2}, {"k3", 1.0}};
}

// Assigns each (dotted path, value) pair into an existing tree.
void put(Json& tree, const std::string& path, const Json& value) {
  Json* node = &tree;
  std::stringstream ss(path);
  std::string key;
  while (std::getline(ss, key, '.')) node = &(*node)[key];
  *node = value;
}

void put_all(Json& tree, std::initializer_list<std::pair<const char*, Json>> entries) {
  for (const auto& [path, value] : entries) put(tree, path, value);
}

bool compatible(const Json& base, const Json& value) {
  if (base.is_null() || value.is_null()) return true;
  if (base.is_number() && value.is_number()) return true;
  if (base.is_array() && value.is_array()) return true;
  return base.type() == value.type();
}

// Overlay onto base; every key must already exist in base.
void merge(Json& base, const Json& overlay, const std::string& prefix, std::vector<std::string>& unknown,
           std::vector<std::string>& mismatched) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      unknown.push_back(path);
      continue;
    }
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it.value().is_object()) {
        mismatched.push_back(path);
        continue;
      }
      merge(slot, it.value(), path, unknown, mismatched);
    } else if (!compatible(slot, it.value()) || it.value().is_object()) {
      mismatched.push_back(path);
    } else {
      slot = it.value();
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

void overlay_or_throw(Json& base, const Json& overlay, const std::string& what) {
  if (!overlay.is_object()) throw ConfigError(what + ": top level must be an object");
  std::vector<std::string> unknown, mismatched;
  merge(base, overlay, "", unknown, mismatched);
  if (!unknown.empty()) throw ConfigError(what + ": unknown keys: " + join(unknown));
  if (!mismatched.empty()) throw ConfigError(what + ": type mismatch at: " + join(mismatched));
}

// Dotted assignment "a.b=v" as a nested object.
Json override_object(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("malformed override (expected key=value): " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json out = Json::object();
  put(out, path, value);
  return out;
}

// ---------------------------------------------------------------------------
// Typed access to the resolved tree.

class Reader {
 public:
  explicit Reader(const Json& root) : root_(root) {}

  const Json& node(const std::string& path) const {
    const Json* n = &root_;
    std::stringstream ss(path);
    std::string key;
    while (std::getline(ss, key, '.')) {
      if (!n->is_object() || !n->contains(key)) throw ConfigError("unknown key: " + path);
      n = &(*n)[key];
    }
    if (n->is_null()) throw ConfigError("missing required key: " + path);
    return *n;
  }

  double num(const std::string& path) const {
    const Json& n = node(path);
    if (!n.is_number()) throw ConfigError("expected a number at " + path);
    return n.get<double>();
  }
  int integer(const std::string& path) const {
    const double v = num(path);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("expected an integer at " + path);
    return static_cast<int>(v);
  }
  std::uint64_t seed(const std::string& path) const {
    const double v = num(path);
    if (v < 0 || v != std::floor(v)) throw ConfigError("expected a non-negative integer at " + path);
    return static_cast<std::uint64_t>(v);
  }
  bool flag(const std::string& path) const {
    const Json& n = node(path);
    if (!n.is_boolean()) throw ConfigError("expected a boolean at " + path);
    return n.get<bool>();
  }
  std::string text(const std::string& path) const {
    const Json& n = node(path);
    if (!n.is_string()) throw ConfigError("expected a string at " + path);
    return n.get<std::string>();
  }
  std::vector<double> numbers(const std::string& path) const {
    const Json& n = node(path);
    if (!n.is_array()) throw ConfigError("expected an array at " + path);
    std::vector<double> out;
    for (const auto& v : n) {
      if (!v.is_number()) throw ConfigError("expected numbers in " + path);
      out.push_back(v.get<double>());
    }
    return out;
  }
  /// start/end/points triplet under prefix, evenly spaced.
  std::vector<double> grid(const std::string& prefix) const {
    const double a = num(prefix + "_start");
    const double b = num(prefix + "_end");
    const int n = integer(prefix + "_points");
    if (n < 1) throw ConfigError(prefix + "_points must be positive");
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
    return out;
  }

 private:
  const Json& root_;
};

DuffingParams plant_params(const Reader& r) {
  DuffingParams p{r.num("plant.m"), r.num("plant.c"), r.num("plant.k"), r.num("plant.k2"), r.num("plant.k3")};
  try {
    p.validate();
  } catch (const std::domain_error& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }
  return p;
}

PlantOptions plant_options(const Reader& r) {
  PlantOptions o;
  o.noise.sensor_rms = r.num("plant.noise_rms");
  o.noise.seed = r.seed("plant.seed");
  o.velocity_gain = r.num("plant.velocity_gain");
  o.blowup_bound = r.num("plant.blowup_bound");
  return o;
}

StabilityProbeOptions probe_options(const Reader& r) {
  StabilityProbeOptions o;
  o.hold_periods = r.integer("probe.hold_periods");
  o.band = r.num("probe.band");
  o.steps_per_period = r.integer("probe.steps_per_period");
  o.kick = r.num("probe.kick");
  return o;
}

template <class E>
E choose(const Reader& r, const std::string& path, const std::map<std::string, E>& options) {
  const auto v = r.text(path);
  const auto it = options.find(v);
  if (it == options.end()) {
    std::vector<std::string> names;
    for (const auto& [k, _] : options) names.push_back(k);
    throw ConfigError(path + " must be one of: " + join(names));
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Artifacts

struct Output {
  /// File name -> contents; written only once the run has succeeded.
  std::vector<std::pair<std::string, std::string>> files;
  Json diagnostics = Json::object();
  bool partial{false};
};

Json point_diagnostics(const Branch& b) {
  Json points = Json::array();
  for (std::size_t i = 0; i < b.points.size(); ++i) {
    const auto& p = b.points[i];
    Json d = {{"index", i}, {"converged", p.converged}};
    if (std::isfinite(p.invasiveness.relative)) d["invasiveness_rel"] = p.invasiveness.relative;
    if (p.open_loop_stable) d["open_loop_stable"] = *p.open_loop_stable;
    points.push_back(d);
  }
  return points;
}

void emit_branch(Output& out, const Branch& b) {
  std::ostringstream os;
  write_branch_csv(os, b);
  out.files.emplace_back("branch.csv", os.str());
  out.diagnostics["method"] = b.method;
  out.diagnostics["points"] = b.points.size();
  out.diagnostics["flagged"] = b.flagged();
  out.diagnostics["truncated"] = b.truncated;
  out.diagnostics["message"] = b.diagnostic;
  out.diagnostics["per_point"] = point_diagnostics(b);
  out.partial = out.partial || b.flagged() > 0 || b.truncated;
}

void emit_surface(Output& out, const SurfaceGrid& g) {
  std::ostringstream os;
  write_surface_csv(os, g);
  out.files.emplace_back("surface.csv", os.str());
  out.diagnostics["cells"] = g.f.size();
  out.diagnostics["flagged"] = g.flagged();
  out.partial = out.partial || g.flagged() > 0;
}

double sampled_total_amp(const HarmonicVector& x) {
  constexpr int n = 512;
  double peak = 0.0;
  for (int i = 0; i < n; ++i) peak = std::max(peak, std::abs(x.evaluate(2.0 * kPi * i / n)));
  return peak;
}

// ---------------------------------------------------------------------------
// Subcommands

using Runner = std::function<Output(const Reader&, Json&)>;

Output run_hbm(const Reader& r, Json&) {
  HbmProblem p;
  p.plant = plant_params(r);
  p.h = r.integer("hbm.h");
  p.forcing_amp = r.num("forcing");
  ContinuationSettings s;
  s.step = r.num("hbm.step");
  s.min_step = r.num("hbm.min_step");
  s.max_step = r.num("hbm.max_step");
  s.newton_tol = r.num("hbm.newton_tol");
  s.newton_max_iter = r.integer("hbm.newton_max_iter");
  s.predictor = choose<Predictor>(r, "hbm.predictor", {{"secant", Predictor::secant}, {"tangent", Predictor::tangent}});
  s.corrector = choose<Corrector>(r, "hbm.corrector",
                                  {{"natural", Corrector::natural},
                                   {"pseudo_arclength", Corrector::pseudo_arclength},
                                   {"arclength_sphere", Corrector::arclength_sphere}});
  s.max_points = r.integer("hbm.max_points");
  s.compute_stability = r.flag("hbm.stability");
  s.floquet_steps = r.integer("hbm.floquet_steps");
  const double w0 = r.num("hbm.omega_start");
  const double w1 = r.num("hbm.omega_end");
  const double closed_kd = r.num("hbm.closed_loop_kd");
  try {
    p.validate();
    s.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("hbm: ") + e.what());
  }
  if (!(w0 > 0.0 && w1 > 0.0 && w0 != w1)) throw ConfigError("hbm: omega_start and omega_end must be positive and distinct");

  const auto start = linear_start(p, w0, s);
  const auto hb = continue_branch(p, s, start.coeffs, start.omega, {std::min(w0, w1), std::max(w0, w1)},
                                  w1 > w0 ? +1 : -1);
  Branch b;
  b.method = "hbm";
  b.truncated = hb.truncated;
  b.diagnostic = hb.diagnostic;
  Json closed = Json::array();
  for (const auto& hp : hb.points) {
    BranchPoint bp;
    bp.omega = hp.omega;
    bp.a1 = fundamental_amplitude(hp, 1);
    bp.a_star = bp.a1;
    bp.f_meas = p.forcing_amp;
    bp.phase1 = amp_phase(hp.coeffs, 1).phase;
    bp.total_amp = sampled_total_amp(hp.coeffs);
    bp.response = hp.coeffs;
    bp.converged = true;
    if (hp.has_stability) bp.open_loop_stable = hp.stable;
    if (closed_kd > 0.0) {
      FloquetOptions fo;
      fo.steps = s.floquet_steps;
      fo.feedback_kd = closed_kd;
      closed.push_back(floquet_multipliers(hp.coeffs, hp.omega, p.plant, fo).stable);
    }
    b.points.push_back(bp);
  }
  Output out;
  emit_branch(out, b);
  Json folds = Json::array();
  for (auto i : hb.folds) folds.push_back({{"index", i}, {"omega", hb.points[i].omega}});
  out.diagnostics["folds"] = folds;
  out.diagnostics["branch_points"] = hb.branch_points;
  if (s.compute_stability) out.diagnostics["folds_match_stability"] = folds_match_stability(hb);
  if (closed_kd > 0.0) out.diagnostics["closed_loop_stable"] = closed;
  return out;
}

Output run_sws(const Reader& r, Json&) {
  SweepSettings s;
  s.forcing = r.num("forcing");
  s.omega_start = r.num("methods.sws.omega_start");
  s.omega_end = r.num("methods.sws.omega_end");
  s.rate = r.num("methods.sws.rate");
  s.spacing = choose<SweepSpacing>(r, "methods.sws.spacing",
                                   {{"log", SweepSpacing::logarithmic}, {"linear", SweepSpacing::linear}});
  s.steps_per_period = r.integer("methods.sws.steps_per_period");
  s.cycles_per_point = r.integer("methods.sws.cycles_per_point");
  s.lead_in_periods = r.integer("methods.sws.lead_in_periods");
  s.h = r.integer("methods.sws.h");
  const double threshold = r.num("methods.sws.jump_threshold");
  const int window = r.integer("methods.sws.jump_window");
  Plant plant(plant_params(r), plant_options(r));
  const auto b = swept_sine(plant, s);
  Output out;
  emit_branch(out, b);
  Json jumps = Json::array();
  for (const auto& j : detect_jumps(b, threshold, static_cast<std::size_t>(window))) {
    jumps.push_back({{"index", j.index}, {"omega", j.omega}, {"a_before", j.a_before}, {"a_after", j.a_after}});
  }
  out.diagnostics["jumps"] = jumps;
  return out;
}

Output run_sts(const Reader& r, Json&) {
  SteppedSettings s;
  s.mode = choose<SteppedMode>(r, "methods.sts.mode",
                               {{"frequency", SteppedMode::frequency}, {"amplitude", SteppedMode::amplitude}});
  s.forcing = r.num("forcing");
  s.omega = r.num("methods.sts.omega");
  s.grid = r.grid("methods.sts.grid");
  s.settle_periods = r.integer("methods.sts.settle_periods");
  s.measure_periods = r.integer("methods.sts.measure_periods");
  s.steps_per_period = r.integer("methods.sts.steps_per_period");
  s.h = r.integer("methods.sts.h");
  Plant plant(plant_params(r), plant_options(r));
  Output out;
  emit_branch(out, stepped_sine(plant, s));
  return out;
}

Output run_cbc_fd(const Reader& r, Json&) {
  CbcFdSettings s;
  s.f_star = r.num("forcing");
  s.kd = r.num("control.kd_cbc");
  const std::string m = "methods.cbc_fd.";
  s.h = r.integer(m + "h");
  s.omega_start = r.num(m + "omega_start");
  s.omega_end = r.num(m + "omega_end");
  s.step = r.num(m + "step");
  s.min_step = r.num(m + "min_step");
  s.max_step = r.num(m + "max_step");
  s.tol_b = r.num(m + "tol_b");
  s.newton_max_iter = r.integer(m + "newton_max_iter");
  s.fd_rel = r.num(m + "fd_rel");
  s.fd_abs = r.num(m + "fd_abs");
  s.fd_adaptive = r.flag(m + "fd_adaptive");
  s.settle_periods = r.integer(m + "settle_periods");
  s.measure_periods = r.integer(m + "measure_periods");
  s.steps_per_period = r.integer(m + "steps_per_period");
  s.max_points = r.integer(m + "max_points");
  s.probe_stability = r.flag(m + "probe_stability");
  s.probe = probe_options(r);
  Plant plant(plant_params(r), plant_options(r));
  Output out;
  emit_branch(out, cbc_fd(plant, s));
  return out;
}

Output run_scbc(const Reader& r, Json&) {
  ScbcSettings s;
  const std::string m = "methods.scbc.";
  s.a_star_grid = r.grid(m + "a_star");
  s.variant = choose<ScbcVariant>(r, m + "variant", {{"picard", ScbcVariant::picard}, {"adaptive", ScbcVariant::adaptive}});
  s.kd = r.num("control.kd_cbc");
  s.h = r.integer(m + "h");
  s.tol = r.num(m + "tol");
  s.max_iterations = r.integer(m + "max_iterations");
  s.settle_periods = r.integer(m + "settle_periods");
  s.measure_periods = r.integer(m + "measure_periods");
  s.steps_per_period = r.integer(m + "steps_per_period");
  s.mu_bar = r.num(m + "mu_bar");
  s.probe_stability = r.flag(m + "probe_stability");
  s.probe = probe_options(r);
  const auto omegas = r.grid(m + "omega");
  Plant plant(plant_params(r), plant_options(r));
  Output out;
  if (omegas.size() == 1) {
    s.omega = omegas[0];
    emit_branch(out, scbc(plant, s));
  } else {
    emit_surface(out, scbc_surface(plant, s, omegas));
  }
  return out;
}

Output run_pll(const Reader& r, Json&) {
  PllSettings s;
  const std::string m = "methods.pll.";
  const auto mode = r.text(m + "mode");
  if (mode == "nfr") {
    s.targets = pll_phase_schedule(r.num("forcing"), r.num(m + "theta_start"), r.num(m + "theta_end"),
                                   r.integer(m + "points"));
  } else if (mode == "backbone") {
    s.targets = pll_forcing_schedule(r.numbers(m + "forcing_levels"), r.num(m + "theta_backbone"));
  } else {
    throw ConfigError(m + "mode must be one of: backbone, nfr");
  }
  s.lock_harmonic = r.integer(m + "lock_harmonic");
  s.gains = {r.num("control.kp"), r.num("control.ki"), r.num("control.kd")};
  s.omega_start = r.num(m + "omega_start");
  s.omega_min = r.num(m + "omega_min");
  s.omega_max = r.num(m + "omega_max");
  s.bandwidth = r.num(m + "bandwidth");
  s.h = r.integer(m + "h");
  s.mu_bar = r.num(m + "mu_bar");
  s.ramp_periods = r.integer(m + "ramp_periods");
  s.settle_periods = r.integer(m + "settle_periods");
  s.measure_periods = r.integer(m + "measure_periods");
  s.steps_per_period = r.integer(m + "steps_per_period");
  s.lock_tol = r.num(m + "lock_tol");
  s.omega_spread_tol = r.num(m + "omega_spread_tol");
  Plant plant(plant_params(r), plant_options(r));
  std::vector<PllPointDiagnostics> diag;
  const auto b = pll(plant, s, &diag);
  Output out;
  emit_branch(out, b);
  Json lock = Json::array();
  for (const auto& d : diag) {
    lock.push_back({{"phase_error", d.phase_error}, {"omega_spread", d.omega_spread},
                    {"integral_clamped", d.integral_clamped}});
  }
  out.diagnostics["lock"] = lock;
  return out;
}

Output run_rct(const Reader& r, Json&) {
  RctSettings s;
  const std::string m = "methods.rct.";
  s.omega_grid = r.grid(m + "omega");
  s.a_star_grid = r.grid(m + "a_star");
  s.tol = r.num(m + "tol");
  s.max_corrections = r.integer(m + "max_corrections");
  s.flag_threshold = r.num(m + "flag_threshold");
  s.hold_periods = r.integer(m + "hold_periods");
  s.measure_periods = r.integer(m + "measure_periods");
  s.steps_per_period = r.integer(m + "steps_per_period");
  s.initial_gain = r.num(m + "initial_gain");
  s.relaxation = r.num(m + "relaxation");
  s.h = r.integer(m + "h");
  Plant plant(plant_params(r), plant_options(r));
  std::vector<RctCell> cells;
  const auto g = rct(plant, s, &cells);
  Output out;
  emit_surface(out, g);
  Json per_cell = Json::array();
  for (const auto& c : cells) {
    per_cell.push_back({{"corrections", c.corrections}, {"rel_error", c.rel_error}, {"converged", c.converged}});
  }
  out.diagnostics["per_cell"] = per_cell;
  return out;
}

Output run_acbc(const Reader& r, Json&) {
  AcbcSettings s;
  const std::string m = "methods.acbc.";
  s.f_star = r.num("forcing");
  s.kd = r.num("control.kd_cbc");
  s.h = r.integer(m + "h");
  s.mu = r.num(m + "mu");
  s.force_mu_bar = r.num(m + "force_mu_bar");
  s.ellipse.d_omega = r.num(m + "d_omega");
  s.ellipse.d_a = r.num(m + "d_a");
  s.ellipse.law = choose<SweepLaw>(r, m + "law",
                                   {{"constant", SweepLaw::constant}, {"integral", SweepLaw::integral}, {"sign", SweepLaw::sign}});
  s.ellipse.rate = r.num(m + "rate");
  s.ellipse.sigma = r.num(m + "sigma");
  s.ellipse.rho = r.num(m + "rho");
  s.omega_start = r.num(m + "omega_start");
  s.a_start = r.num(m + "a_start");
  s.omega_min = r.num(m + "omega_min");
  s.omega_max = r.num(m + "omega_max");
  s.n_points = r.integer(m + "n_points");
  s.t_steady = r.num(m + "t_steady");
  s.steps_per_period = r.integer(m + "steps_per_period");
  s.omega_dt = r.num(m + "omega_dt");
  s.max_retries = r.integer(m + "max_retries");
  s.verify_periods = r.integer(m + "verify_periods");
  s.probe_stability = r.flag(m + "probe_stability");
  s.probe = probe_options(r);
  Plant plant(plant_params(r), plant_options(r));
  Output out;
  emit_branch(out, acbc(plant, s));
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Output run_slice(const Reader& r, Json& resolved) {
  const auto path = r.text("slice.surface");
  SliceOptions o;
  o.refine = r.integer("slice.refine");
  o.bisection_steps = r.integer("slice.bisection_steps");
  double f_star = 0.0;
  if (resolved["slice"]["f_star"].is_null()) {
    f_star = r.num("forcing");
    resolved["slice"]["f_star"] = f_star;
  } else {
    f_star = r.num("slice.f_star");
  }
  std::istringstream in(read_file(path));
  const auto grid = read_surface_csv(in);
  const auto res = slice_constant_force(grid, f_star, o);
  std::ostringstream os;
  write_csv_row(os, {"polyline", "omega", "a_star", "amplitude"});
  for (std::size_t k = 0; k < res.polylines.size(); ++k) {
    for (const auto& s : res.polylines[k]) {
      write_csv_row(os, {std::to_string(k), format_double(s.omega), format_double(s.a_star), format_double(s.amplitude)});
    }
  }
  Output out;
  out.files.emplace_back("slice.csv", os.str());
  out.diagnostics["polylines"] = res.polylines.size();
  out.diagnostics["message"] = res.diagnostic;
  out.partial = res.polylines.empty();
  return out;
}

Output run_compare(const Reader& r, Json&) {
  std::istringstream t(read_file(r.text("compare.test")));
  std::istringstream ref(read_file(r.text("compare.reference")));
  const auto samples = r.integer("compare.samples");
  if (samples < 2) throw ConfigError("compare.samples must be at least 2");
  const auto rep = branch_compare(curve_of(read_branch_csv(t)), curve_of(read_branch_csv(ref)),
                                  static_cast<std::size_t>(samples));
  std::ostringstream os;
  write_csv_row(os, {"max_rel", "mean_rel", "peak_omega_rel", "samples"});
  write_csv_row(os, {format_double(rep.max_rel), format_double(rep.mean_rel), format_double(rep.peak_omega_rel),
                     std::to_string(rep.samples)});
  Output out;
  out.files.emplace_back("compare.csv", os.str());
  out.diagnostics["max_rel"] = rep.max_rel;
  out.diagnostics["mean_rel"] = rep.mean_rel;
  out.diagnostics["peak_omega_rel"] = rep.peak_omega_rel;
  return out;
}

Output run_oracle(const Reader& r, Json&) {
  const auto params = plant_params(r);
  const double f = r.num("forcing");
  const double omega = r.num("oracle.omega");
  SettleOptions so;
  so.steps_per_period = r.integer("oracle.steps_per_period");
  so.h = r.integer("oracle.h");
  so.max_period_multiple = r.integer("oracle.max_period_multiple");
  const PlantState ic{r.num("oracle.q0"), r.num("oracle.v0"), 0.0};
  const auto m = settle_and_measure(params, f, omega, ic, r.integer("oracle.n_transient"),
                                    r.integer("oracle.n_measure"), so);
  std::ostringstream os;
  write_csv_row(os, {"omega", "forcing", "period_multiple", "fundamental_amp", "phase", "total_amp"});
  write_csv_row(os, {format_double(omega), format_double(f), std::to_string(m.period_multiple),
                     format_double(m.fundamental_amp), format_double(m.phase), format_double(m.total_amp)});
  std::ostringstream co;
  write_csv_row(co, {"index", "coefficient"});
  for (std::size_t i = 0; i < m.coeffs.size(); ++i) write_csv_row(co, {std::to_string(i), format_double(m.coeffs[i])});
  Output out;
  out.files.emplace_back("oracle.csv", os.str());
  out.files.emplace_back("coefficients.csv", co.str());

  const int trials = r.integer("oracle.isola_trials");
  if (trials > 0) {
    HbmProblem p;
    p.plant = params;
    p.forcing_amp = f;
    p.h = so.h;
    IsolaSearchOptions io;
    io.steps_per_period = so.steps_per_period;
    io.transient_periods = r.integer("oracle.n_transient");
    io.measure_periods = r.integer("oracle.n_measure");
    io.max_period_multiple = so.max_period_multiple;
    Json orbits = Json::array();
    for (const auto& o : isola_seed_search(p, omega, trials, r.seed("oracle.seed"), io)) {
      orbits.push_back({{"period_multiple", o.period_multiple}, {"fundamental_amp", o.fundamental_amp},
                        {"total_amp", o.total_amp}, {"count", o.count}});
    }
    out.diagnostics["orbits"] = orbits;
  }
  return out;
}

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> table{
      {"hbm", run_hbm},   {"sws", run_sws},   {"sts", run_sts},       {"cbc-fd", run_cbc_fd},
      {"scbc", run_scbc}, {"pll", run_pll},   {"rct", run_rct},       {"acbc", run_acbc},
      {"slice", run_slice}, {"compare", run_compare}, {"oracle", run_oracle}};
  return table;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"hbm", "sws", "sts", "cbc-fd", "scbc", "pll",
                                              "rct", "acbc", "slice", "compare", "oracle"};
  return names;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"duffing-f1", "duffing-f3", "helmholtz-acbc", "electronic-duffing",
                                              "superharmonic-3-1"};
  return names;
}

Json default_config() {
  const Json null;
  return {
      {"preset", ""},
      {"forcing", null},
      {"plant",
       {{"m", null}, {"c", null}, {"k", null}, {"k2", 0.0}, {"k3", null}, {"noise_rms", 0.0}, {"seed", 1},
        {"velocity_gain", 1.0}, {"blowup_bound", 0.0}}},
      {"control", {{"kp", 0.05}, {"ki", 0.02}, {"kd", 0.0}, {"kd_cbc", 2.0}}},
      {"probe", {{"hold_periods", 50}, {"band", 0.05}, {"steps_per_period", 1000}, {"kick", 1e-3}}},
      {"hbm",
       {{"h", 15}, {"omega_start", null}, {"omega_end", null}, {"step", 0.05}, {"min_step", 1e-6},
        {"max_step", 0.25}, {"newton_tol", 1e-9}, {"newton_max_iter", 25}, {"predictor", "tangent"},
        {"corrector", "pseudo_arclength"}, {"max_points", 20000}, {"stability", true}, {"floquet_steps", 1000},
        {"closed_loop_kd", 0.0}}},
      {"methods",
       {{"sws",
         {{"omega_start", null}, {"omega_end", null}, {"rate", 1e-4}, {"spacing", "log"}, {"steps_per_period", 200},
          {"cycles_per_point", 1}, {"lead_in_periods", 200}, {"h", 5}, {"jump_threshold", 0.3},
          {"jump_window", 20}}},
        {"sts",
         {{"mode", "frequency"}, {"omega", 1.0}, {"grid_start", null}, {"grid_end", null}, {"grid_points", null},
          {"settle_periods", 50}, {"measure_periods", 10}, {"steps_per_period", 1000}, {"h", 5}}},
        {"cbc_fd",
         {{"h", 5}, {"omega_start", null}, {"omega_end", null}, {"step", 0.05}, {"min_step", 1e-3},
          {"max_step", 0.2}, {"tol_b", 1e-4}, {"newton_max_iter", 8}, {"fd_rel", 1e-3}, {"fd_abs", 1e-6},
          {"fd_adaptive", false}, {"settle_periods", 30}, {"measure_periods", 5}, {"steps_per_period", 500},
          {"max_points", 400}, {"probe_stability", false}}},
        {"scbc",
         {{"omega_start", null}, {"omega_end", null}, {"omega_points", 1}, {"a_star_start", null},
          {"a_star_end", null}, {"a_star_points", null}, {"variant", "adaptive"}, {"h", 7}, {"tol", 0.01},
          {"max_iterations", 20}, {"settle_periods", 50}, {"measure_periods", 10}, {"steps_per_period", 1000},
          {"mu_bar", 0.01}, {"probe_stability", false}}},
        {"pll",
         {{"mode", "nfr"}, {"theta_start", -0.1}, {"theta_end", -3.04}, {"points", 30},
          {"forcing_levels", Json::array()}, {"theta_backbone", -kPi / 2}, {"lock_harmonic", 1},
          {"omega_start", null}, {"omega_min", 1e-3}, {"omega_max", 1e6}, {"bandwidth", 0.0}, {"h", 5},
          {"mu_bar", 1.0}, {"ramp_periods", 20}, {"settle_periods", 150}, {"measure_periods", 10},
          {"steps_per_period", 500}, {"lock_tol", 1e-3}, {"omega_spread_tol", 1e-3}}},
        {"rct",
         {{"omega_start", null}, {"omega_end", null}, {"omega_points", null}, {"a_star_start", null},
          {"a_star_end", null}, {"a_star_points", null}, {"tol", 0.01}, {"max_corrections", 10},
          {"flag_threshold", 0.2}, {"hold_periods", 50}, {"measure_periods", 10}, {"steps_per_period", 500},
          {"initial_gain", 1.0}, {"relaxation", 1.0}, {"h", 5}}},
        {"acbc",
         {{"h", 15}, {"mu", 0.0025}, {"force_mu_bar", 2.0}, {"d_omega", 0.05}, {"d_a", 0.05}, {"law", "integral"},
          {"rate", 1.0}, {"sigma", 0.5}, {"rho", 0.01}, {"omega_start", null}, {"a_start", 0.0},
          {"omega_min", 0.0}, {"omega_max", 1e6}, {"n_points", 200}, {"t_steady", 50.0},
          {"steps_per_period", 1000}, {"omega_dt", 0.0}, {"max_retries", 5}, {"verify_periods", 5},
          {"probe_stability", false}}}}},
      {"slice", {{"surface", null}, {"f_star", null}, {"refine", 4}, {"bisection_steps", 40}}},
      {"compare", {{"test", null}, {"reference", null}, {"samples", 400}}},
      {"oracle",
       {{"omega", null}, {"q0", 0.0}, {"v0", 0.0}, {"n_transient", 300}, {"n_measure", 20},
        {"steps_per_period", 1000}, {"h", 15}, {"max_period_multiple", 5}, {"isola_trials", 0}, {"seed", 1}}},
  };
}

Json preset(const std::string& name) {
  Json c = default_config();
  c["preset"] = name;
  if (name == "duffing-f1" || name == "duffing-f3") {
    const bool f3 = name == "duffing-f3";
    c["plant"].update(dimensionless_plant(0.05, 0.0));
    c["forcing"] = f3 ? 3.0 : 1.0;
    put_all(c, {{"hbm.omega_start", 0.3},
                {"hbm.omega_end", f3 ? 10.0 : 5.0},
                {"methods.sws.omega_start", f3 ? 1.0 : 0.5},
                {"methods.sws.omega_end", f3 ? 9.0 : 4.0},
                {"methods.sts.grid_start", 0.5},
                {"methods.sts.grid_end", f3 ? 8.0 : 4.0},
                {"methods.sts.grid_points", f3 ? 76 : 36},
                {"methods.cbc_fd.omega_start", 1.5},
                {"methods.cbc_fd.omega_end", f3 ? 7.0 : 3.5},
                {"methods.scbc.omega_start", 2.5},
                {"methods.scbc.omega_end", f3 ? 2.5 : 3.5},
                {"methods.scbc.omega_points", f3 ? 1 : 6},
                {"methods.scbc.a_star_start", f3 ? 0.2 : 1.5},
                {"methods.scbc.a_star_end", f3 ? 4.0 : 3.5},
                {"methods.scbc.a_star_points", f3 ? 20 : 5},
                {"control.kp", f3 ? 0.8 : 0.4},
                {"control.ki", f3 ? 0.2 : 0.1},
                {"methods.pll.omega_start", f3 ? 2.0 : 1.0},
                {"methods.pll.theta_start", -0.2},
                {"methods.pll.theta_end", f3 ? -2.8 : -2.9},
                {"methods.pll.mu_bar", 2.0},
                {"methods.pll.ramp_periods", 100},
                {"methods.pll.settle_periods", f3 ? 600 : 300},
                {"methods.pll.forcing_levels", Json::array({0.5, 1.0, 3.0})},
                {"methods.rct.omega_start", 1.5},
                {"methods.rct.omega_end", 6.5},
                {"methods.rct.omega_points", 21},
                {"methods.rct.a_star_start", 0.5},
                {"methods.rct.a_star_end", 4.5},
                {"methods.rct.a_star_points", 17},
                {"methods.rct.relaxation", 0.4},
                {"methods.rct.max_corrections", 20},
                {"methods.acbc.omega_start", 0.5},
                {"methods.acbc.omega_min", 0.5},
                {"methods.acbc.omega_max", f3 ? 8.0 : 4.0},
                {"oracle.omega", f3 ? 2.5 : 1.5}});
  } else if (name == "helmholtz-acbc") {
    c["plant"].update(dimensionless_plant(0.05, 1.9));
    c["forcing"] = 0.05;
    put_all(c, {{"control.kd_cbc", 1.0},
                {"hbm.omega_start", 0.3},
                {"hbm.omega_end", 1.6},
                {"methods.sws.omega_start", 0.3},
                {"methods.sws.omega_end", 1.6},
                {"methods.acbc.h", 15},
                {"methods.acbc.mu", 0.0025},
                {"methods.acbc.d_omega", 0.05},
                {"methods.acbc.d_a", 0.05},
                {"methods.acbc.law", "integral"},
                {"methods.acbc.rate", 1.0},
                {"methods.acbc.t_steady", 50.0},
                {"methods.acbc.omega_start", 0.3},
                {"methods.acbc.omega_min", 0.3},
                {"methods.acbc.omega_max", 1.6},
                {"methods.acbc.omega_dt", 1.0},
                {"methods.acbc.n_points", 400},
                {"oracle.omega", 0.7}});
  } else if (name == "electronic-duffing" || name == "superharmonic-3-1") {
    const bool sh = name == "superharmonic-3-1";
    c["plant"].update({{"m", 1e-4}, {"c", 1.3e-4}, {"k", 1.923}, {"k2", 0.0}, {"k3", 0.9887}});
    c["forcing"] = 1.0;
    put_all(c, {{"hbm.omega_start", sh ? 40.0 : 60.0},
                {"hbm.omega_end", sh ? 62.0 : 300.0},
                {"hbm.step", sh ? 0.005 : 0.05},
                {"hbm.max_step", sh ? 0.02 : 0.25},
                {"control.kp", sh ? 2.0 : 5.0},
                {"control.ki", sh ? 4.0 : 10.0},
                {"methods.sws.omega_start", sh ? 42.0 : 80.0},
                {"methods.sws.omega_end", sh ? 60.0 : 300.0},
                {"methods.sws.rate", sh ? 2e-4 : 1e-4},
                {"methods.cbc_fd.omega_start", sh ? 45.0 : 100.0},
                {"methods.cbc_fd.omega_end", sh ? 60.0 : 250.0},
                {"methods.cbc_fd.step", sh ? 0.5 : 2.0},
                {"methods.cbc_fd.min_step", 0.01},
                {"methods.cbc_fd.max_step", sh ? 1.0 : 5.0},
                {"methods.pll.lock_harmonic", sh ? 3 : 1},
                {"methods.pll.omega_start", sh ? 45.0 : 140.0},
                {"methods.pll.theta_start", sh ? -0.1 : -0.1},
                {"methods.pll.theta_end", sh ? -3.05 : -3.04},
                {"methods.pll.points", sh ? 60 : 30},
                {"methods.pll.settle_periods", sh ? 600 : 300},
                {"methods.pll.omega_min", 10.0},
                {"methods.pll.omega_max", 1000.0},
                {"oracle.omega", sh ? 52.0 : 150.0}});
  } else {
    throw ConfigError("unknown preset: " + name + " (known: " + join(preset_names()) + ")");
  }
  return c;
}

Json resolve(const ResolveInputs& in) {
  std::string name = in.preset;
  if (name.empty() && in.file && in.file->is_object() && in.file->contains("preset")) {
    const auto& p = (*in.file)["preset"];
    if (!p.is_string()) throw ConfigError("config: preset must be a string");
    name = p.get<std::string>();
  }
  Json c = name.empty() ? default_config() : preset(name);
  if (in.file) {
    Json file = *in.file;
    if (file.is_object()) file.erase("preset");
    overlay_or_throw(c, file, "config");
  }
  for (const auto& o : in.overrides) overlay_or_throw(c, override_object(o), "--set " + o);
  if (in.seed) {
    c["plant"]["seed"] = *in.seed;
    c["oracle"]["seed"] = *in.seed;
  }
  return c;
}

std::string config_digest(const std::string& subcommand, const Json& config) {
  return digest_hex(subcommand + "\n" + config.dump());
}

std::filesystem::path output_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("CONTLAB_OUT"); env && *env) return env;
  return fallback;
}

RunResult run(const std::string& subcommand, const Json& config, const std::filesystem::path& root) {
  RunResult res;
  const auto it = runners().find(subcommand);
  if (it == runners().end()) {
    res.error = "unknown subcommand: " + subcommand;
    return res;
  }
  Json resolved = config;
  Output out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Reader reader(resolved);
    out = it->second(reader, resolved);
  } catch (const ConfigError& e) {
    res.error = std::string("config error: ") + e.what();
    return res;
  } catch (const std::exception& e) {
    res.error = std::string("run failed: ") + e.what();
    return res;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto digest = config_digest(subcommand, resolved);
  res.directory = root / (subcommand + "-" + digest);
  res.manifest = {{"subcommand", subcommand},
                  {"config", resolved},
                  {"config_digest", digest},
                  {"wall_time_s", wall},
                  {"diagnostics", out.diagnostics}};
  Json names = Json::array();
  for (const auto& [file, _] : out.files) names.push_back(file);
  res.manifest["artifacts"] = names;
  res.exit_code = out.partial ? 2 : 0;
  res.manifest["exit_code"] = res.exit_code;
  try {
    std::filesystem::create_directories(res.directory);
    for (const auto& [file, text] : out.files) {
      const auto path = res.directory / file;
      std::ofstream os(path, std::ios::binary);
      os << text;
      if (!os) throw std::runtime_error("cannot write " + path.string());
      res.artifacts.push_back(path);
    }
    const auto mpath = res.directory / "manifest.json";
    std::ofstream ms(mpath, std::ios::binary);
    ms << res.manifest.dump(2) << '\n';
    if (!ms) throw std::runtime_error("cannot write " + mpath.string());
    res.artifacts.push_back(mpath);
  } catch (const std::exception& e) {
    std::error_code ec;
    std::filesystem::remove_all(res.directory, ec);
    res.artifacts.clear();
    res.exit_code = 1;
    res.error = e.what();
  }
  return res;
}

}  // namespace contlab::app
