#include "pedflow/direction.hpp"

#include <algorithm>
#include <cmath>

namespace pedflow {

namespace {
constexpr double kPi = 3.141592653589793238462643383279;
}

double flux_speed(FluxLaw law, double rho, double rho_max) {
  double s = std::clamp(rho / rho_max, 0.0, 1.0);
  if (law == FluxLaw::AsWritten) return s * (1.0 - s);
  return 1.0 - s;
}

double flux_value(FluxLaw law, double rho, double rho_max) {
  return rho * flux_speed(law, rho, rho_max);
}

double flux_wave_speed(FluxLaw law, double rho, double rho_max) {
  double s = std::clamp(rho / rho_max, 0.0, 1.0);
  if (law == FluxLaw::AsWritten) return 2.0 * s - 3.0 * s * s;
  return 1.0 - 2.0 * s;
}

double flux_wave_bound(FluxLaw law, double rho_max) {
  // |g'| attains its maximum at an interval end or where g'' vanishes
  // (s = 1/3 for the cubic flux; the parabola has no interior extremum).
  double m = std::max(std::abs(flux_wave_speed(law, 0.0, rho_max)),
                      std::abs(flux_wave_speed(law, rho_max, rho_max)));
  if (law == FluxLaw::AsWritten)
    m = std::max(m, std::abs(flux_wave_speed(law, rho_max / 3.0, rho_max)));
  return m;
}

Vec2 smoothed_projection(Vec2 v, const ProjectionParams& p) {
  double n = v.norm();
  if (n == 0.0) return {0, 0};
  if (n > p.ell) return (1.0 / n) * v;
  double scale =
      std::sin(kPi * std::atan(p.k_P * n) / (2.0 * std::atan(p.k_P * p.ell)));
  return (scale / n) * v;
}

ExitChoice select_exits(const Grid& g,
                        const std::vector<ScalarField>& self_costs) {
  if (self_costs.empty()) throw ConfigError("no exit cost fields");
  const int M = int(self_costs.size());
  const int n = g.vcount();
  ExitChoice out;
  out.g = &g;
  out.best.assign(std::size_t(n), -1);
  out.runner.assign(std::size_t(n), -1);
  out.best_cost.assign(std::size_t(n), kInf);
  out.runner_cost.assign(std::size_t(n), kInf);
  for (int v = 0; v < n; ++v) {
    if (!g.vert_active[v]) continue;
    for (int k = 0; k < M; ++k) {
      double c = self_costs[std::size_t(k)].v[std::size_t(v)];
      if (c < out.best_cost[std::size_t(v)]) {
        out.runner_cost[std::size_t(v)] = out.best_cost[std::size_t(v)];
        out.runner[std::size_t(v)] = out.best[std::size_t(v)];
        out.best_cost[std::size_t(v)] = c;
        out.best[std::size_t(v)] = k;
      } else if (c < out.runner_cost[std::size_t(v)]) {
        out.runner_cost[std::size_t(v)] = c;
        out.runner[std::size_t(v)] = k;
      }
    }
  }
  return out;
}

VectorField conviction_field(const Grid& g, const ExitChoice& choice,
                             const std::vector<VectorField>& self_grads,
                             double u_single, ConvictionStats* stats) {
  VectorField u(g, Centering::Vertex);
  for (int v = 0; v < g.vcount(); ++v) {
    int k = choice.best[std::size_t(v)];
    if (k < 0) continue;
    double gap;
    if (choice.runner_cost[std::size_t(v)] == kInf) {
      gap = u_single;  // no competing exit: configured conviction
    } else {
      gap = choice.runner_cost[std::size_t(v)] -
            choice.best_cost[std::size_t(v)];
    }
    if (gap <= 0.0) continue;
    Vec2 grad = self_grads[std::size_t(k)].v[std::size_t(v)];
    double n = grad.norm();
    if (n < 1e-14) {
      if (stats) ++stats->zero_gradient_hits;
      continue;
    }
    u.v[std::size_t(v)] = (gap / n) * grad;
  }
  return u;
}

VectorField consensus_field(const ScalarField& rho_vert, const VectorField& u,
                            const Kernel& K, double delta_rho) {
  const Grid& g = *rho_vert.g;
  VectorField num;
  ScalarField den;
  scatter_convolve_pair(rho_vert, u, K, num, den);
  VectorField phi(g, Centering::Vertex);
  for (int v = 0; v < g.vcount(); ++v) {
    if (!g.vert_active[v]) continue;
    double m = den.v[std::size_t(v)];
    phi.v[std::size_t(v)] =
        m < delta_rho ? u.v[std::size_t(v)] : (1.0 / m) * num.v[std::size_t(v)];
  }
  return phi;
}

VelocityAssembly assemble_velocity(const Grid& g, const ScalarField& rho_cell,
                                   const VectorField& consensus_vert,
                                   FluxLaw law, double rho_max,
                                   const ProjectionParams& proj) {
  VectorField phi_cell = to_cells(consensus_vert);
  VelocityAssembly out;
  out.dir = VectorField(g, Centering::Cell);
  out.vel = VectorField(g, Centering::Cell);
  out.commit = ScalarField(g, Centering::Cell, 0.0);

  for (int c = 0; c < g.ccount(); ++c) {
    if (!g.cell_active[c]) continue;
    Vec2 p = smoothed_projection(phi_cell.v[std::size_t(c)], proj);
    out.dir.v[std::size_t(c)] = -p;
    out.commit.v[std::size_t(c)] = p.norm();
  }

  // Exit cells commit fully to outflow through their exit faces.
  for (const auto& faces : g.exit_faces)
    for (const BoundaryFace& bf : faces) {
      int c = g.cidx(bf.ci, bf.cj);
      out.dir.v[std::size_t(c)] = bf.normal;  // faces store outward normals
    }

  // Strip direction components that would run into a wall face.
  for (int cj = 0; cj < (g.dim == 2 ? g.ny : 1); ++cj)
    for (int ci = 0; ci < g.nx; ++ci) {
      int c = g.cidx(ci, cj);
      if (!g.cell_active[c]) continue;
      Vec2& d = out.dir.v[std::size_t(c)];
      if (d.x < 0 && g.face_kind(ci, cj, kWest) == FaceKind::Wall) d.x = 0;
      if (d.x > 0 && g.face_kind(ci, cj, kEast) == FaceKind::Wall) d.x = 0;
      if (g.dim == 2) {
        if (d.y < 0 && g.face_kind(ci, cj, kSouth) == FaceKind::Wall) d.y = 0;
        if (d.y > 0 && g.face_kind(ci, cj, kNorth) == FaceKind::Wall) d.y = 0;
      }
      out.vel.v[std::size_t(c)] =
          flux_speed(law, rho_cell.v[std::size_t(c)], rho_max) * d;
    }
  return out;
}

}  // namespace pedflow
