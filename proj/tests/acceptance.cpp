// Acceptance gate: one PASS/FAIL line per criterion. Criteria may be selected
// by number on the command line; the exit status is 1 when any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "app.hpp"
#include "contlab/branch.hpp"
#include "contlab/elliptic.hpp"
#include "contlab/fourier.hpp"
#include "contlab/hbm.hpp"
#include "contlab/methods.hpp"
#include "contlab/oracle.hpp"
#include "contlab/postprocess.hpp"

using namespace contlab;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Verdict {
  bool pass{false};
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path scratch_root() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / ("contlab-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

app::RunResult run_cli(const std::string& sub, const std::string& preset, std::vector<std::string> overrides = {},
                       const fs::path& root = scratch_root()) {
  app::ResolveInputs in;
  in.preset = preset;
  in.overrides = std::move(overrides);
  const auto r = app::run(sub, app::resolve(in), root);
  if (r.exit_code == 1) throw std::runtime_error(sub + " " + preset + ": " + r.error);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Branch branch_of(const app::RunResult& r) {
  std::istringstream in(slurp(r.directory / "branch.csv"));
  return read_branch_csv(in);
}

SurfaceGrid surface_of(const app::RunResult& r) {
  std::istringstream in(slurp(r.directory / "surface.csv"));
  return read_surface_csv(in);
}

// HBM branches shared between criteria; every one is checked for fold and
// multiplier coincidence.
std::map<std::string, HbmBranch>& hbm_cache() {
  static std::map<std::string, HbmBranch> cache;
  return cache;
}

HbmBranch hbm_branch(const std::string& key, const DuffingParams& plant, double forcing, double w0, double w1,
                     int h = 15, double step = 0.05, double max_step = 0.25) {
  auto& cache = hbm_cache();
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  HbmProblem p;
  p.plant = plant;
  p.h = h;
  p.forcing_amp = forcing;
  ContinuationSettings s;
  s.step = step;
  s.max_step = max_step;
  const auto start = linear_start(p, w0, s);
  auto b = continue_branch(p, s, start.coeffs, start.omega, {std::min(w0, w1), std::max(w0, w1)}, w1 > w0 ? 1 : -1);
  cache[key] = b;
  return b;
}

DuffingParams duffing() { return DimensionlessDuffing{0.05, 0.0}.to_params(); }
DuffingParams helmholtz() { return DimensionlessDuffing{0.05, 1.9}.to_params(); }
DuffingParams electronic() { return {1e-4, 1.3e-4, 1.923, 0.0, 0.9887}; }

HbmBranch duffing_branch(double f) {
  return hbm_branch("duffing-f" + fmt("%g", f), duffing(), f, 0.3, f > 2.0 ? 10.0 : 6.0);
}

std::vector<double> fold_omegas(const HbmBranch& b) {
  std::vector<double> w;
  for (auto i : b.folds) w.push_back(b.points[i].omega);
  return w;
}

// Turning points of a measured frequency sequence.
std::vector<double> turning_omegas(const std::vector<double>& w) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    if ((w[i] - w[i - 1]) * (w[i + 1] - w[i]) < 0.0) out.push_back(w[i]);
  }
  return out;
}

double nearest_gap(const std::vector<double>& xs, double x) {
  double best = std::numeric_limits<double>::infinity();
  for (double v : xs) best = std::min(best, std::abs(v - x));
  return best;
}

bool segments_cross(double ax, double ay, double bx, double by, double cx, double cy, double dx, double dy) {
  auto orient = [](double px, double py, double qx, double qy, double rx, double ry) {
    return (qx - px) * (ry - py) - (qy - py) * (rx - px);
  };
  const double d1 = orient(cx, cy, dx, dy, ax, ay), d2 = orient(cx, cy, dx, dy, bx, by);
  const double d3 = orient(ax, ay, bx, by, cx, cy), d4 = orient(ax, ay, bx, by, dx, dy);
  return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

bool self_intersects(const Curve& c) {
  for (std::size_t i = 0; i + 1 < c.omega.size(); ++i) {
    for (std::size_t j = i + 2; j + 1 < c.omega.size(); ++j) {
      if (segments_cross(c.omega[i], c.amplitude[i], c.omega[i + 1], c.amplitude[i + 1], c.omega[j],
                         c.amplitude[j], c.omega[j + 1], c.amplitude[j + 1])) {
        return true;
      }
    }
  }
  return false;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  const auto up = run_cli("sws", "duffing-f3");
  const auto down = run_cli("sws", "duffing-f3", {"methods.sws.omega_start=9", "methods.sws.omega_end=1"});
  auto first_jump = [](const app::RunResult& r, bool downward) {
    for (const auto& j : r.manifest["diagnostics"]["jumps"]) {
      const bool drop = j["a_after"].get<double>() < j["a_before"].get<double>();
      if (drop == downward) return j["omega"].get<double>();
    }
    return std::nan("");
  };
  const double w_down = first_jump(up, true);
  const double w_up = first_jump(down, false);
  const bool ok_down = std::abs(w_down - 7.2) <= 0.05 * 7.2;
  const bool ok_up = std::abs(w_up - 2.1) <= 0.10 * 2.1;
  const auto folds = fold_omegas(duffing_branch(3.0));
  std::string fold_text;
  for (double w : folds) fold_text += fmt(" %.4f", w);
  return {ok_down && ok_up, "jump-down " + fmt("%.4f", w_down) + " (target 7.2 +-5%), jump-up " + fmt("%.4f", w_up) +
                                " (target 2.1 +-10%); hbm folds" + fold_text};
}

Verdict criterion2() {
  const auto res = run_cli("acbc", "helmholtz-acbc");
  const auto b = branch_of(res);
  const auto ref = hbm_branch("helmholtz", helmholtz(), 0.05, 0.3, 1.6);
  const double f_star = res.manifest["config"]["forcing"].get<double>();
  const double rho = res.manifest["config"]["methods"]["acbc"]["rho"].get<double>();
  std::vector<double> w;
  std::size_t accepted = 0, outside = 0;
  Branch ok;
  for (const auto& p : b.points) {
    if (!p.converged) continue;
    ++accepted;
    if (std::abs(p.f_meas - f_star) > rho * f_star * (1.0 + 1e-9)) ++outside;
    w.push_back(p.omega);
    ok.points.push_back(p);
  }
  const auto folds = fold_omegas(ref);
  const auto turns = turning_omegas(w);
  std::size_t folds_hit = 0;
  for (double wf : folds) {
    if (nearest_gap(turns, wf) <= 0.05) ++folds_hit;
  }
  double max_rel = std::nan("");
  if (ok.points.size() > 2) max_rel = branch_compare(curve_of(ok), curve_of(ref)).max_rel;
  const bool pass = accepted > 0 && outside == 0 && folds_hit == folds.size() && max_rel < 0.02;
  const auto msg = res.manifest["diagnostics"]["message"].get<std::string>();
  std::string fold_text;
  for (double wf : folds) fold_text += fmt(" %.4f", wf);
  return {pass, std::to_string(accepted) + " accepted points, " + std::to_string(outside) +
                    " outside the force tolerance, folds passed " + std::to_string(folds_hit) + "/" +
                    std::to_string(folds.size()) + " (hbm folds" + fold_text + "), max amplitude deviation " +
                    fmt("%.4f", max_rel) + (msg.empty() ? "" : "; " + msg)};
}

Verdict criterion3() {
  const auto b = duffing_branch(3.0);
  std::size_t unstable = 0, low = 0, high = 0, contained = 0, main_unstable_kd2 = 0;
  for (const auto& p : b.points) {
    FloquetOptions lo, hi;
    lo.feedback_kd = 0.2;
    hi.feedback_kd = 2.0;
    const bool s_hi = floquet_multipliers(p.coeffs, p.omega, b.problem.plant, hi).stable;
    if (!s_hi) ++main_unstable_kd2;
    if (p.stable) continue;
    ++unstable;
    const bool s_lo = floquet_multipliers(p.coeffs, p.omega, b.problem.plant, lo).stable;
    low += s_lo;
    high += s_hi;
    contained += !s_lo || s_hi;
  }
  const bool pass = unstable > 0 && contained == unstable && high > low && main_unstable_kd2 == 0;
  return {pass, std::to_string(unstable) + " open-loop unstable points; closed-loop stable at kd=0.2: " +
                    std::to_string(low) + ", at kd=2: " + std::to_string(high) + "; unstable anywhere at kd=2: " +
                    std::to_string(main_unstable_kd2)};
}

Verdict criterion4() {
  double worst_lock = 0.0;
  std::size_t points = 0;
  auto lock_of = [&](const app::RunResult& r) {
    for (const auto& l : r.manifest["diagnostics"]["lock"]) {
      worst_lock = std::max(worst_lock, std::abs(l["phase_error"].get<double>()));
      ++points;
    }
  };
  const auto backbone = run_cli("pll", "duffing-f1", {"methods.pll.mode=\"backbone\""});
  lock_of(backbone);
  lock_of(run_cli("pll", "duffing-f1"));
  lock_of(run_cli("pll", "duffing-f3"));
  const auto bb = branch_of(backbone);
  const std::vector<double> levels{0.5, 1.0, 3.0};
  double worst_peak = 0.0;
  std::string text;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto ref = duffing_branch(levels[i]);
    const double w_peak = ref.points[ref.peak_index()].omega;
    const double rel = std::abs(bb.points[i].omega - w_peak) / w_peak;
    worst_peak = std::max(worst_peak, rel);
    text += fmt(" f=%g:", levels[i]) + fmt(" %.4f", bb.points[i].omega) + fmt(" vs %.4f", w_peak);
  }
  return {worst_lock < 1e-3 && worst_peak < 0.01,
          "max |theta - theta*| " + fmt("%.2e", worst_lock) + " over " + std::to_string(points) +
              " points; backbone vs hbm peaks" + text + fmt(" (max rel %.2e)", worst_peak)};
}

Verdict criterion5() {
  const auto r = run_cli("pll", "superharmonic-3-1");
  const auto b = branch_of(r);
  const auto ref = hbm_branch("superharmonic", electronic(), 1.0, 40.0, 62.0, 15, 0.005, 0.02);
  double worst_lock = 0.0;
  for (const auto& l : r.manifest["diagnostics"]["lock"]) worst_lock = std::max(worst_lock, std::abs(l["phase_error"].get<double>()));
  const auto c = curve_of(b);
  const bool loop = self_intersects(c);
  // Point-to-point jumps: the schedule is coarse, so a single step is the window.
  const auto pll_jumps = detect_jumps(b, 0.3, 1);
  std::vector<double> w;
  for (const auto& p : b.points) w.push_back(p.omega);
  const auto turns = turning_omegas(w);
  const auto folds = fold_omegas(ref);
  std::size_t folds_hit = 0;
  for (double wf : folds) folds_hit += nearest_gap(turns, wf) <= 0.01 * wf;

  const auto up = run_cli("sws", "superharmonic-3-1");
  const auto down = run_cli("sws", "superharmonic-3-1", {"methods.sws.omega_start=60", "methods.sws.omega_end=42"});
  const std::size_t sws_jumps = up.manifest["diagnostics"]["jumps"].size() + down.manifest["diagnostics"]["jumps"].size();
  const bool pass = loop && pll_jumps.empty() && worst_lock < 1e-3 && folds_hit == folds.size() && sws_jumps > 0;
  return {pass, std::string("pll loop ") + (loop ? "closed" : "open") + ", pll jumps " +
                    std::to_string(pll_jumps.size()) + ", max lock error " + fmt("%.2e", worst_lock) +
                    ", hbm folds passed " + std::to_string(folds_hit) + "/" + std::to_string(folds.size()) +
                    ", sws jumps " + std::to_string(sws_jumps)};
}

Verdict criterion6() {
  // Make sure every branch the other criteria use exists.
  for (double f : {0.5, 1.0, 3.0}) duffing_branch(f);
  hbm_branch("helmholtz", helmholtz(), 0.05, 0.3, 1.6);
  hbm_branch("superharmonic", electronic(), 1.0, 40.0, 62.0, 15, 0.005, 0.02);
  std::size_t folds = 0;
  std::string bad;
  for (const auto& [name, b] : hbm_cache()) {
    folds += b.folds.size();
    if (!folds_match_stability(b)) bad += " " + name;
  }
  return {bad.empty(), std::to_string(hbm_cache().size()) + " branches, " + std::to_string(folds) + " folds" +
                           (bad.empty() ? ", all matched" : "; mismatched:" + bad)};
}

Verdict criterion7() {
  struct Pick {
    const HbmBranch* branch;
    std::size_t index;
  };
  for (double f : {0.5, 1.0, 3.0}) duffing_branch(f);
  hbm_branch("helmholtz", helmholtz(), 0.05, 0.3, 1.6);
  std::vector<Pick> pool;
  for (const auto& [name, b] : hbm_cache()) {
    if (name == "superharmonic") continue;
    for (std::size_t i = 0; i < b.points.size(); ++i) {
      if (b.points[i].stable && b.points[i].has_stability) pool.push_back({&b, i});
    }
  }
  std::mt19937_64 rng(20240611);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min<std::size_t>(20, pool.size()));
  double worst = 0.0;
  for (const auto& pick : pool) {
    const auto& p = pick.branch->points[pick.index];
    const PlantState ic{p.coeffs.evaluate(0.0), p.coeffs.derivative(0.0, p.omega), 0.0};
    const auto m = settle_and_measure(pick.branch->problem.plant, pick.branch->problem.forcing_amp, p.omega, ic, 50, 10);
    const double a = fundamental_amplitude(p);
    worst = std::max(worst, std::abs(m.fundamental_amp - a) / a);
  }
  return {pool.size() == 20 && worst < 0.005,
          std::to_string(pool.size()) + " stable points, max fundamental deviation " + fmt("%.2e", worst)};
}

Verdict criterion8() {
  const auto ref = duffing_branch(1.0);
  const double peak = fundamental_amplitude(ref.points[ref.peak_index()]);
  auto slice_peak = [&](int refine_level) {
    std::vector<std::string> o;
    if (refine_level > 0) {
      const auto base = app::preset("duffing-f1")["methods"]["scbc"];
      o.push_back("methods.scbc.omega_points=" + std::to_string(2 * base["omega_points"].get<int>() - 1));
      o.push_back("methods.scbc.a_star_points=" + std::to_string(2 * base["a_star_points"].get<int>() - 1));
    }
    const auto g = surface_of(run_cli("scbc", "duffing-f1", o));
    const auto s = slice_constant_force(g, 1.0);
    double best = 0.0;
    for (const auto& pl : s.polylines) {
      for (const auto& q : pl) best = std::max(best, q.amplitude);
    }
    return best;
  };
  const double coarse = slice_peak(0);
  const double fine = slice_peak(1);
  const double e_coarse = std::abs(coarse - peak) / peak;
  const double e_fine = std::abs(fine - peak) / peak;
  const bool pass = coarse < peak && e_fine * 2.0 <= e_coarse;
  return {pass, "hbm peak " + fmt("%.4f", peak) + ", coarse slice " + fmt("%.4f", coarse) + fmt(" (err %.2e)", e_coarse) +
                    ", doubled " + fmt("%.4f", fine) + fmt(" (err %.2e)", e_fine)};
}

Verdict criterion9() {
  const auto res = run_cli("rct", "duffing-f3");
  const auto g = surface_of(res);
  HbmProblem p;
  p.plant = duffing();
  p.h = 15;
  ContinuationSettings s;
  std::size_t inter = 0, uni = 0, flagged = 0, unstable = 0, unsolved = 0;
  for (std::size_t i = 0; i < g.omega_axis.size(); ++i) {
    std::optional<HarmonicVector> guess;
    for (std::size_t j = 0; j < g.a_star_axis.size(); ++j) {
      // Between the fold loci the S-curve at fixed omega has df/da < 0.
      bool u = false;
      try {
        const auto sol = solve_at_amplitude(p, g.omega_axis[i], g.a_star_axis[j], s, guess);
        guess = sol.coeffs;
        const auto up = solve_at_amplitude(p, g.omega_axis[i], g.a_star_axis[j] * 1.001, s, sol.coeffs);
        u = up.forcing_amplitude() < sol.forcing_amplitude();
      } catch (const NewtonFailure&) {
        guess.reset();
        ++unsolved;
      }
      const bool f = g.flag[g.index(i, j)] != 0;
      flagged += f;
      unstable += u;
      inter += f && u;
      uni += f || u;
    }
  }
  const double jaccard = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
  return {jaccard >= 0.6, std::to_string(flagged) + " flagged cells, " + std::to_string(unstable) +
                              " cells between the fold loci (" + std::to_string(unsolved) + " unsolved), Jaccard " +
                              fmt("%.3f", jaccard)};
}

Verdict criterion10() {
  std::vector<std::string> failures;
  // Parseval: mean square of a synthesized signal equals the coefficient energy.
  {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    HarmonicVector w(6);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = n(rng);
    double energy = w.constant() * w.constant();
    for (int k = 1; k <= 6; ++k) energy += 0.5 * (w.sine(k) * w.sine(k) + w.cosine(k) * w.cosine(k));
    const int m = 64;
    double ms = 0.0;
    for (int i = 0; i < m; ++i) ms += std::pow(w.evaluate(2.0 * kPi * i / m), 2) / m;
    if (std::abs(ms - energy) > 1e-12 * energy) failures.push_back("parseval");
  }
  // LMS fixed point: a sample equal to the synthesis leaves the weights unchanged.
  {
    LmsFilterState st{HarmonicVector(3, {0.2, 1.0, -0.5, 0.1, 0.3, 0.0, -0.7}), 2.0, 1.3, 0.4, 0.9};
    LmsFilter f(st);
    const double x = f.synthesize();
    const auto after = lms_update(st, x, 1e-3);
    for (std::size_t i = 0; i < st.weights.size(); ++i) {
      if (std::abs(after.weights[i] - st.weights[i]) > 1e-15) failures.push_back("lms fixed point");
    }
  }
  // Exact free response against an RK4 period measurement.
  double period_rel = 0.0;
  {
    const double w0 = 1.0, a3 = 2.0, amp = 1.0;
    const ExactFreeResponse r(amp, w0, a3);
    if (std::abs(r.frequency() - std::sqrt(w0 * w0 + a3 * amp * amp / 2.0)) > 1e-12) failures.push_back("elliptic frequency");
    const DuffingParams p{1.0, 0.0, w0 * w0, 0.0, a3};
    const double dt = r.period() / 2000.0;
    PlantState s{0.0, r.velocity(0.0), 0.0};
    std::vector<double> crossings;
    for (int i = 0; i < 20000 && crossings.size() < 11; ++i) {
      const auto next = rk4_step(s, DriveSample::hold(0.0), dt, p);
      if (s.q < 0.0 && next.q >= 0.0) crossings.push_back(s.t + dt * (-s.q) / (next.q - s.q));
      s = next;
    }
    const double measured = (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
    period_rel = std::abs(measured - r.period()) / r.period();
    if (period_rel > 1e-3) failures.push_back("free-response period");
  }
  // Energy drift of the conservative Duffing over 100 periods.
  double drift = 0.0;
  {
    const DuffingParams p{1.0, 0.0, 1.0, 0.0, 1.0};
    auto energy = [&](const PlantState& s) {
      return 0.5 * s.v * s.v + 0.5 * s.q * s.q + 0.25 * s.q * s.q * s.q * s.q;
    };
    PlantState s{1.0, 0.0, 0.0};
    const double e0 = energy(s);
    const double T = ExactFreeResponse(1.0, 1.0, 1.0).period();
    const double dt = T / 1000.0;
    for (int i = 0; i < 100 * 1000; ++i) s = rk4_step(s, DriveSample::hold(0.0), dt, p);
    drift = std::abs(energy(s) - e0) / e0;
    if (drift > 1e-6) failures.push_back("energy drift");
  }
  // Reproducibility: identical digests give byte-identical artifacts, noise included.
  {
    const std::vector<std::string> o{"methods.sws.omega_start=1", "methods.sws.omega_end=1.5", "methods.sws.rate=0.002",
                                     "plant.noise_rms=0.01", "plant.seed=11"};
    const auto a = run_cli("sws", "duffing-f1", o, scratch_root() / "repro-a");
    const auto b = run_cli("sws", "duffing-f1", o, scratch_root() / "repro-b");
    const bool same_digest = a.manifest["config_digest"] == b.manifest["config_digest"];
    if (!same_digest || slurp(a.directory / "branch.csv") != slurp(b.directory / "branch.csv")) {
      failures.push_back("reproducibility");
    }
    app::ResolveInputs in;
    in.preset = "duffing-f1";
    in.overrides = o;
    in.seed = 12;
    const auto c = app::run("sws", app::resolve(in), scratch_root() / "repro-c");
    if (c.exit_code == 1 || c.manifest["config_digest"] == a.manifest["config_digest"] ||
        slurp(c.directory / "branch.csv") == slurp(a.directory / "branch.csv")) {
      failures.push_back("seed override");
    }
  }
  std::string text = "free-response period rel " + fmt("%.2e", period_rel) + ", energy drift " + fmt("%.2e", drift);
  for (const auto& f : failures) text += "; failed: " + f;
  return {failures.empty(), text};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int n = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k]();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s  [%.1f s]\n", n, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && v.pass;
  }
  fs::remove_all(scratch_root());
  return all ? 0 : 1;
}
