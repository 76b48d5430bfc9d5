#include "contlab/branch.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "contlab/io.hpp"

namespace contlab {

namespace {

const std::vector<std::string> kBranchHeader = {
    "index", "omega", "a_star", "f_meas", "a1", "phase1", "total_amp",
    "invasiveness_rel", "converged", "open_loop_stable", "wall_time_s"};

const std::vector<std::string> kSurfaceHeader = {"omega", "a_star", "f_meas", "a_meas", "flag"};

void check_header(const std::string& line, const std::vector<std::string>& expected) {
  if (split_csv_line(line) != expected) throw std::runtime_error("unexpected CSV header: " + line);
}

bool strictly_increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
}

}  // namespace

std::size_t Branch::flagged() const {
  return static_cast<std::size_t>(
      std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.converged; }));
}

void write_branch_csv(std::ostream& os, const Branch& branch) {
  write_csv_row(os, kBranchHeader);
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    const auto& p = branch.points[i];
    std::string stable;
    if (p.open_loop_stable) stable = *p.open_loop_stable ? "1" : "0";
    write_csv_row(os, {std::to_string(i), format_double(p.omega), format_double(p.a_star),
                       format_double(p.f_meas), format_double(p.a1), format_double(p.phase1),
                       format_double(p.total_amp), format_double(p.invasiveness.relative),
                       p.converged ? "1" : "0", stable, format_double(p.wall_time)});
  }
}

Branch read_branch_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_branch_csv: empty input");
  check_header(line, kBranchHeader);
  Branch b;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != kBranchHeader.size()) throw std::runtime_error("read_branch_csv: bad row " + line);
    BranchPoint p;
    p.omega = parse_double(c[1]);
    p.a_star = parse_double(c[2]);
    p.f_meas = parse_double(c[3]);
    p.a1 = parse_double(c[4]);
    p.phase1 = parse_double(c[5]);
    p.total_amp = parse_double(c[6]);
    p.invasiveness.relative = parse_double(c[7]);
    p.converged = c[8] == "1";
    if (!c[9].empty()) p.open_loop_stable = c[9] == "1";
    p.wall_time = parse_double(c[10]);
    b.points.push_back(std::move(p));
  }
  return b;
}

SurfaceGrid::SurfaceGrid(std::vector<double> omega, std::vector<double> a_star)
    : omega_axis(std::move(omega)), a_star_axis(std::move(a_star)) {
  const std::size_t n = omega_axis.size() * a_star_axis.size();
  f.assign(n, 0.0);
  a.assign(n, 0.0);
  flag.assign(n, 0);
}

void SurfaceGrid::validate() const {
  if (omega_axis.empty() || a_star_axis.empty()) throw std::invalid_argument("SurfaceGrid: empty axis");
  if (!strictly_increasing(omega_axis) || !strictly_increasing(a_star_axis)) {
    throw std::invalid_argument("SurfaceGrid: axes must be strictly increasing");
  }
  const std::size_t n = omega_axis.size() * a_star_axis.size();
  if (f.size() != n || a.size() != n || flag.size() != n) {
    throw std::invalid_argument("SurfaceGrid: field size mismatch");
  }
}

std::size_t SurfaceGrid::flagged() const {
  return static_cast<std::size_t>(std::count_if(flag.begin(), flag.end(), [](auto x) { return x != 0; }));
}

void write_surface_csv(std::ostream& os, const SurfaceGrid& grid) {
  grid.validate();
  write_csv_row(os, kSurfaceHeader);
  for (std::size_t i = 0; i < grid.omega_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.a_star_axis.size(); ++j) {
      const auto k = grid.index(i, j);
      write_csv_row(os, {format_double(grid.omega_axis[i]), format_double(grid.a_star_axis[j]),
                         format_double(grid.f[k]), format_double(grid.a[k]),
                         grid.flag[k] ? "1" : "0"});
    }
  }
}

SurfaceGrid read_surface_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_surface_csv: empty input");
  check_header(line, kSurfaceHeader);
  struct Cell {
    double f, a;
    bool flag;
  };
  std::map<std::pair<double, double>, Cell> cells;
  std::vector<double> om, as;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != kSurfaceHeader.size()) throw std::runtime_error("read_surface_csv: bad row " + line);
    const double w = parse_double(c[0]);
    const double s = parse_double(c[1]);
    cells[{w, s}] = {parse_double(c[2]), parse_double(c[3]), c[4] == "1"};
    om.push_back(w);
    as.push_back(s);
  }
  std::sort(om.begin(), om.end());
  om.erase(std::unique(om.begin(), om.end()), om.end());
  std::sort(as.begin(), as.end());
  as.erase(std::unique(as.begin(), as.end()), as.end());
  SurfaceGrid g(om, as);
  if (cells.size() != om.size() * as.size()) throw std::runtime_error("read_surface_csv: grid is not rectangular");
  for (std::size_t i = 0; i < om.size(); ++i) {
    for (std::size_t j = 0; j < as.size(); ++j) {
      const auto& cell = cells.at({om[i], as[j]});
      const auto k = g.index(i, j);
      g.f[k] = cell.f;
      g.a[k] = cell.a;
      g.flag[k] = cell.flag ? 1 : 0;
    }
  }
  return g;
}

}  // namespace contlab
