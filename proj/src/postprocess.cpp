#include "contlab/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace contlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Solves a tridiagonal system in place (Thomas); sub/sup have size n.
std::vector<double> thomas(std::vector<double> sub, std::vector<double> diag, std::vector<double> sup,
                           std::vector<double> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * sup[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
  return x;
}

}  // namespace

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw std::invalid_argument("CubicSpline: need matching sizes >= 2");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(x_[i + 1] > x_[i])) throw std::invalid_argument("CubicSpline: x must be strictly increasing");
  }
  m_.assign(n, 0.0);
  if (n == 2) return;
  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    d[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  if (n == 3) {
    const double c = 2.0 * (d[1] - d[0]) / (h[0] + h[1]);
    m_.assign(3, c);
    return;
  }
  // Interior unknowns M1..M_{n-2}; M0 and M_{n-1} eliminated by the
  // not-a-knot conditions (continuous third derivative at x1 and x_{n-2}).
  const std::size_t k = n - 2;
  std::vector<double> sub(k, 0.0), diag(k, 0.0), sup(k, 0.0), rhs(k, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = r + 1;
    sub[r] = h[i - 1];
    diag[r] = 2.0 * (h[i - 1] + h[i]);
    sup[r] = h[i];
    rhs[r] = 6.0 * (d[i] - d[i - 1]);
  }
  diag[0] += h[0] * (h[0] + h[1]) / h[1];
  sup[0] -= h[0] * h[0] / h[1];
  const std::size_t e = n - 2;
  diag[k - 1] += h[e] * (h[e] + h[e - 1]) / h[e - 1];
  sub[k - 1] -= h[e] * h[e] / h[e - 1];
  const auto inner = thomas(sub, diag, sup, rhs);
  for (std::size_t r = 0; r < k; ++r) m_[r + 1] = inner[r];
  m_[0] = ((h[0] + h[1]) * m_[1] - h[0] * m_[2]) / h[1];
  m_[n - 1] = ((h[e] + h[e - 1]) * m_[n - 2] - h[e] * m_[n - 3]) / h[e - 1];
}

double CubicSpline::operator()(double x) const {
  const std::size_t n = x_.size();
  std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
  i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

GridInterpolant::GridInterpolant(const std::vector<double>& omega_axis, const std::vector<double>& a_star_axis,
                                 const std::vector<double>& values, const std::vector<std::uint8_t>& mask)
    : omega_axis_(omega_axis) {
  const std::size_t na = a_star_axis.size();
  if (values.size() != omega_axis.size() * na || mask.size() != values.size()) {
    throw std::invalid_argument("GridInterpolant: size mismatch");
  }
  for (std::size_t i = 0; i < omega_axis.size(); ++i) {
    std::vector<double> x, y;
    for (std::size_t j = 0; j < na; ++j) {
      const double v = values[i * na + j];
      if (!mask[i * na + j] && std::isfinite(v)) {
        x.push_back(a_star_axis[j]);
        y.push_back(v);
      }
    }
    rows_.push_back(x.size() >= 2 ? CubicSpline(x, y) : CubicSpline());
  }
}

double GridInterpolant::operator()(double omega, double a_star) const {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.empty() || a_star < r.front() || a_star > r.back()) continue;
    x.push_back(omega_axis_[i]);
    y.push_back(r(a_star));
  }
  if (x.size() < 2 || omega < x.front() || omega > x.back()) return kNaN;
  return CubicSpline(x, y)(omega);
}

namespace {

struct Crossing {
  double omega, a_star;
};

}  // namespace

SliceResult slice_constant_force(const SurfaceGrid& grid, double f_star, const SliceOptions& options) {
  grid.validate();
  if (options.refine < 1 || options.bisection_steps < 0) throw std::invalid_argument("slice: invalid options");
  SliceResult out;
  double fmin = std::numeric_limits<double>::infinity(), fmax = -fmin;
  for (std::size_t k = 0; k < grid.f.size(); ++k) {
    if (grid.flag[k] || !std::isfinite(grid.f[k])) continue;
    fmin = std::min(fmin, grid.f[k]);
    fmax = std::max(fmax, grid.f[k]);
  }
  if (!(f_star >= fmin && f_star <= fmax)) {
    out.diagnostic = "f_star outside the unflagged force range [" + std::to_string(fmin) + ", " +
                     std::to_string(fmax) + "]";
    return out;
  }
  const GridInterpolant fi(grid.omega_axis, grid.a_star_axis, grid.f, grid.flag);
  const GridInterpolant ai(grid.omega_axis, grid.a_star_axis, grid.a, grid.flag);

  const int r = options.refine;
  auto refine_axis = [r](const std::vector<double>& axis) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
      for (int s = 0; s < r; ++s) out.push_back(axis[i] + (axis[i + 1] - axis[i]) * s / r);
    }
    out.push_back(axis.back());
    return out;
  };
  const auto wf = refine_axis(grid.omega_axis);
  const auto af = refine_axis(grid.a_star_axis);
  const std::size_t nw = wf.size(), na = af.size();
  std::vector<double> g(nw * na);
  for (std::size_t i = 0; i < nw; ++i) {
    for (std::size_t j = 0; j < na; ++j) g[i * na + j] = fi(wf[i], af[j]) - f_star;
  }
  auto cell_blocked = [&](std::size_t i, std::size_t j) {
    const std::size_t gi = i / static_cast<std::size_t>(r), gj = j / static_cast<std::size_t>(r);
    for (std::size_t di = 0; di < 2; ++di) {
      for (std::size_t dj = 0; dj < 2; ++dj) {
        if (grid.flag[grid.index(gi + di, gj + dj)]) return true;
      }
    }
    return false;
  };

  // Edge ids: 2 (i na + j) for the omega-edge (i,j)-(i+1,j), +1 for the a*-edge (i,j)-(i,j+1).
  std::map<std::size_t, Crossing> points;
  std::map<std::size_t, std::vector<std::size_t>> adj;
  auto crossing = [&](std::size_t id) {
    auto it = points.find(id);
    if (it != points.end()) return;
    const std::size_t node = id / 2;
    const std::size_t i = node / na, j = node % na;
    double w0 = wf[i], a0 = af[j], w1 = w0, a1 = a0;
    double v0 = g[node], v1;
    if (id % 2 == 0) {
      w1 = wf[i + 1];
      v1 = g[node + na];
    } else {
      a1 = af[j + 1];
      v1 = g[node + 1];
    }
    double lo = 0.0, hi = 1.0;
    for (int s = 0; s < options.bisection_steps; ++s) {
      const double mid = 0.5 * (lo + hi);
      const double vm = fi(w0 + mid * (w1 - w0), a0 + mid * (a1 - a0)) - f_star;
      if (!std::isfinite(vm)) break;
      if ((vm > 0.0) == (v0 > 0.0)) {
        lo = mid;
        v0 = vm;
      } else {
        hi = mid;
        v1 = vm;
      }
    }
    const double t = (v0 == v1) ? 0.5 * (lo + hi) : lo + (hi - lo) * v0 / (v0 - v1);
    points[id] = {w0 + t * (w1 - w0), a0 + t * (a1 - a0)};
  };
  auto link = [&](std::size_t p, std::size_t q) {
    crossing(p);
    crossing(q);
    adj[p].push_back(q);
    adj[q].push_back(p);
  };

  for (std::size_t i = 0; i + 1 < nw; ++i) {
    for (std::size_t j = 0; j + 1 < na; ++j) {
      const std::size_t n00 = i * na + j;
      const double c[4] = {g[n00], g[n00 + na], g[n00 + na + 1], g[n00 + 1]};
      if (!std::all_of(std::begin(c), std::end(c), [](double v) { return std::isfinite(v); })) continue;
      if (cell_blocked(i, j)) continue;
      // Corners counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1); edges between them.
      const std::size_t e[4] = {2 * n00, 2 * (n00 + na) + 1, 2 * (n00 + 1), 2 * n00 + 1};
      int mask = 0;
      for (int k = 0; k < 4; ++k) mask |= (c[k] > 0.0 ? 1 : 0) << k;
      if (mask == 0 || mask == 15) continue;
      std::vector<std::size_t> cut;
      for (int k = 0; k < 4; ++k) {
        if (((mask >> k) & 1) != ((mask >> ((k + 1) % 4)) & 1)) cut.push_back(e[k]);
      }
      if (cut.size() == 2) {
        link(cut[0], cut[1]);
      } else {
        // Saddle: the centre value decides which corners connect.
        const double centre = 0.25 * (c[0] + c[1] + c[2] + c[3]);
        const bool c0_side = (c[0] > 0.0) == (centre > 0.0);
        // cut holds e0,e1,e2,e3 in order; pair around corner 0 or corner 1.
        if (c0_side) {
          link(cut[0], cut[1]);
          link(cut[2], cut[3]);
        } else {
          link(cut[3], cut[0]);
          link(cut[1], cut[2]);
        }
      }
    }
  }

  std::map<std::size_t, bool> used;
  auto sample = [&](std::size_t id) {
    const auto& p = points.at(id);
    return NfrSample{p.omega, p.a_star, ai(p.omega, p.a_star)};
  };
  auto walk = [&](std::size_t start) {
    std::vector<NfrSample> line;
    std::size_t prev = start, cur = start;
    line.push_back(sample(cur));
    used[cur] = true;
    for (;;) {
      std::size_t next = cur;
      for (auto q : adj[cur]) {
        if (q != prev && !used[q]) {
          next = q;
          break;
        }
      }
      if (next == cur) {
        // Closed loop: the start is a neighbour again.
        const auto& nb = adj[cur];
        if (line.size() > 2 && std::find(nb.begin(), nb.end(), start) != nb.end()) line.push_back(line.front());
        break;
      }
      prev = cur;
      cur = next;
      used[cur] = true;
      line.push_back(sample(cur));
    }
    return line;
  };
  for (const auto& [id, nb] : adj) {
    if (nb.size() == 1 && !used[id]) out.polylines.push_back(walk(id));
  }
  for (const auto& [id, nb] : adj) {
    if (!used[id]) out.polylines.push_back(walk(id));
  }
  if (out.polylines.empty()) out.diagnostic = "no level curve found";
  return out;
}

Curve curve_of(const Branch& branch) {
  Curve c;
  for (const auto& p : branch.points) {
    if (!p.converged) continue;
    c.omega.push_back(p.omega);
    c.amplitude.push_back(p.a1);
  }
  return c;
}

Curve curve_of(const HbmBranch& branch, int harmonic) {
  Curve c;
  for (const auto& p : branch.points) {
    c.omega.push_back(p.omega);
    c.amplitude.push_back(fundamental_amplitude(p, harmonic));
  }
  return c;
}

Curve curve_of(const std::vector<NfrSample>& polyline) {
  Curve c;
  for (const auto& s : polyline) {
    c.omega.push_back(s.omega);
    c.amplitude.push_back(s.amplitude);
  }
  return c;
}

namespace {

std::vector<double> amplitudes_at(const Curve& c, double omega) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < c.omega.size(); ++i) {
    const double w0 = c.omega[i], w1 = c.omega[i + 1];
    if ((omega - w0) * (omega - w1) > 0.0) continue;
    if (w0 == w1) {
      out.push_back(c.amplitude[i]);
      continue;
    }
    const double t = (omega - w0) / (w1 - w0);
    out.push_back(c.amplitude[i] + t * (c.amplitude[i + 1] - c.amplitude[i]));
  }
  return out;
}

double peak_omega(const Curve& c) {
  const auto it = std::max_element(c.amplitude.begin(), c.amplitude.end());
  return c.omega[static_cast<std::size_t>(it - c.amplitude.begin())];
}

}  // namespace

CompareReport branch_compare(const Curve& test, const Curve& reference, std::size_t samples) {
  if (test.omega.size() < 2 || reference.omega.size() < 2 || test.omega.size() != test.amplitude.size() ||
      reference.omega.size() != reference.amplitude.size() || samples < 2) {
    throw std::invalid_argument("branch_compare: curves need at least two points");
  }
  const auto [tlo, thi] = std::minmax_element(test.omega.begin(), test.omega.end());
  const auto [rlo, rhi] = std::minmax_element(reference.omega.begin(), reference.omega.end());
  const double lo = std::max(*tlo, *rlo), hi = std::min(*thi, *rhi);
  if (!(hi > lo)) throw std::invalid_argument("branch_compare: disjoint frequency coverage");

  // Arclength of the test curve in coordinates scaled by the reference extents.
  const auto [alo, ahi] = std::minmax_element(reference.amplitude.begin(), reference.amplitude.end());
  const double sw = hi - lo;
  const double sa = std::max(*ahi - *alo, 1e-300);
  std::vector<double> s(test.omega.size(), 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) {
    s[i] = s[i - 1] + std::hypot((test.omega[i] - test.omega[i - 1]) / sw,
                                 (test.amplitude[i] - test.amplitude[i - 1]) / sa);
  }
  CompareReport rep;
  double sum = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double target = s.back() * static_cast<double>(k) / static_cast<double>(samples - 1);
    std::size_t i = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), target) - s.begin());
    i = std::clamp<std::size_t>(i, 1, s.size() - 1);
    const double span = s[i] - s[i - 1];
    const double t = span > 0.0 ? (target - s[i - 1]) / span : 0.0;
    const double w = test.omega[i - 1] + t * (test.omega[i] - test.omega[i - 1]);
    const double a = test.amplitude[i - 1] + t * (test.amplitude[i] - test.amplitude[i - 1]);
    if (w < lo || w > hi) continue;
    const auto cand = amplitudes_at(reference, w);
    if (cand.empty()) continue;
    double best = cand.front();
    for (double c : cand) {
      if (std::abs(c - a) < std::abs(best - a)) best = c;
    }
    if (!(std::abs(best) > 0.0)) continue;
    const double rel = std::abs(a - best) / std::abs(best);
    rep.max_rel = std::max(rep.max_rel, rel);
    sum += rel;
    ++rep.samples;
  }
  if (rep.samples == 0) throw std::invalid_argument("branch_compare: no matched samples");
  rep.mean_rel = sum / static_cast<double>(rep.samples);
  const double rp = peak_omega(reference);
  rep.peak_omega_rel = std::abs(peak_omega(test) - rp) / rp;
  return rep;
}

}  // namespace contlab
