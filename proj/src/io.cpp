#include "pedflow/io.hpp"

#include <cstdio>
#include <memory>

namespace pedflow {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_for_write(const std::string& path) {
  File f(std::fopen(path.c_str(), "w"));
  if (!f) throw ConfigError("cannot open for writing: " + path);
  return f;
}

}  // namespace

void write_profile_csv(const std::string& path, const Grid& g,
                       const ScalarField& rho_cell,
                       const VectorField* vel_cell) {
  File f = open_for_write(path);
  std::fprintf(f.get(), vel_cell ? "x,rho,vx\n" : "x,rho\n");
  for (int c = 0; c < g.ccount(); ++c) {
    double x = g.ccenter(c % g.nx, c / g.nx).x;
    if (vel_cell)
      std::fprintf(f.get(), "%.12g,%.12g,%.12g\n", x,
                   rho_cell.v[std::size_t(c)], vel_cell->v[std::size_t(c)].x);
    else
      std::fprintf(f.get(), "%.12g,%.12g\n", x, rho_cell.v[std::size_t(c)]);
  }
}

void write_mass_history_csv(const std::string& path,
                            const std::vector<MassRow>& history) {
  File f = open_for_write(path);
  std::fprintf(f.get(), "t,dt,mass");
  std::size_t exits = history.empty() ? 0 : history.front().outflux.size();
  for (std::size_t k = 0; k < exits; ++k)
    std::fprintf(f.get(), ",outflux_%zu", k + 1);
  std::fprintf(f.get(), ",waiting_cells\n");
  for (const MassRow& r : history) {
    std::fprintf(f.get(), "%.12g,%.12g,%.12g", r.t, r.dt, r.mass);
    for (double o : r.outflux) std::fprintf(f.get(), ",%.12g", o);
    std::fprintf(f.get(), ",%d\n", r.waiting_cells);
  }
}

void write_exit_curves_csv(const std::string& path,
                           const std::vector<MicroRow>& history) {
  File f = open_for_write(path);
  std::fprintf(f.get(), "t,exited");
  std::size_t exits = history.empty() ? 0 : history.front().by_exit.size();
  for (std::size_t k = 0; k < exits; ++k)
    std::fprintf(f.get(), ",share_%zu", k + 1);
  std::fprintf(f.get(), ",alive\n");
  for (const MicroRow& r : history) {
    std::fprintf(f.get(), "%.12g,%.12g", r.t, r.exit_fraction);
    for (double s : r.by_exit) std::fprintf(f.get(), ",%.12g", s);
    std::fprintf(f.get(), ",%d\n", r.alive);
  }
}

void write_particles_csv(const std::string& path, const ParticleEnsemble& e) {
  File f = open_for_write(path);
  std::fprintf(f.get(), "id,x,y,alive,exit,exit_time,turned\n");
  for (int j = 0; j < e.n(); ++j)
    std::fprintf(f.get(), "%d,%.12g,%.12g,%d,%d,%.12g,%d\n", j,
                 e.x[std::size_t(j)].x, e.x[std::size_t(j)].y,
                 int(e.alive[std::size_t(j)]), e.exit_taken[std::size_t(j)],
                 e.exit_time[std::size_t(j)], int(e.turned[std::size_t(j)]));
}

void write_vtk_cells(const std::string& path, const Grid& g,
                     const ScalarField& rho_cell, const VectorField* vel_cell) {
  if (g.dim != 2) throw ConfigError("field files are written for 2D grids");
  File f = open_for_write(path);
  // Cell data on an (nx+1) x (ny+1) point lattice.
  std::fprintf(f.get(),
               "# vtk DataFile Version 3.0\ncrowd state\nASCII\n"
               "DATASET STRUCTURED_POINTS\nDIMENSIONS %d %d 1\n"
               "ORIGIN %.12g %.12g 0\nSPACING %.12g %.12g 1\n",
               g.nx + 1, g.ny + 1, g.dom.lo.x, g.dom.lo.y, g.hx, g.hy);
  std::fprintf(f.get(), "CELL_DATA %d\nSCALARS rho double 1\n"
                        "LOOKUP_TABLE default\n",
               g.ccount());
  for (int c = 0; c < g.ccount(); ++c)
    std::fprintf(f.get(), "%.12g\n", rho_cell.v[std::size_t(c)]);
  if (vel_cell) {
    std::fprintf(f.get(), "VECTORS velocity double\n");
    for (int c = 0; c < g.ccount(); ++c)
      std::fprintf(f.get(), "%.12g %.12g 0\n", vel_cell->v[std::size_t(c)].x,
                   vel_cell->v[std::size_t(c)].y);
  }
}

}  // namespace pedflow
