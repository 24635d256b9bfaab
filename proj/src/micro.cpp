#include "pedflow/micro.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace pedflow {

ParticleEnsemble::ParticleEnsemble(std::vector<Vec2> pos, double mass)
    : x(std::move(pos)),
      alive(x.size(), 1),
      exit_taken(x.size(), -1),
      exit_time(x.size(), -1.0),
      turned(x.size(), 0),
      last_sign(x.size(), 0),
      total_mass(mass) {}

int ParticleEnsemble::alive_count() const {
  int n = 0;
  for (std::uint8_t a : alive) n += a;
  return n;
}

ScalarField empirical_density(const ParticleEnsemble& e, const Grid& g,
                              const KDEConfig& kde) {
  ScalarField rho(g, Centering::Vertex, 0.0);
  if (e.n() == 0) return rho;
  const double sig2 = 2.0 * kde.sigma * kde.sigma;
  const double norm = g.dim == 2
                          ? 1.0 / (2.0 * 3.14159265358979323846 * kde.sigma *
                                   kde.sigma)
                          : 1.0 / (kde.sigma * std::sqrt(2.0 *
                                   3.14159265358979323846));
  const double w = e.total_mass / e.n() * norm;
  // Per-axis cutoff, slightly inclusive so vertices that land exactly on the
  // cutoff circle are kept on both sides of a mirror-symmetric scene.
  const double r = kde.truncation * kde.sigma * (1.0 + 1e-12);
  const int rx = int(std::ceil(r / g.hx));
  const int ry = g.dim == 2 ? int(std::ceil(r / g.hy)) : 0;

  for (int j = 0; j < e.n(); ++j) {
    if (!e.alive[std::size_t(j)]) continue;
    Vec2 p = e.x[std::size_t(j)];
    int pi, pj;
    g.nearest_vertex(p, pi, pj);
    for (int vj = std::max(0, pj - ry); vj <= std::min(g.vny - 1, pj + ry);
         ++vj)
      for (int vi = std::max(0, pi - rx); vi <= std::min(g.vnx - 1, pi + rx);
           ++vi) {
        Vec2 q = g.vpos(vi, vj);
        double dx = q.x - p.x, dy = q.y - p.y;
        if (std::abs(dx) > r || std::abs(dy) > r) continue;
        rho.v[std::size_t(g.vidx(vi, vj))] +=
            w * std::exp(-(dx * dx + dy * dy) / sig2);
      }
  }
  return rho;
}

Vec2 particle_velocity(const Grid& g, const VectorField& vel_vert, Vec2 p) {
  const Domain& d = g.dom;
  bool inside = p.x >= d.lo.x && p.x <= d.hi.x &&
                (g.dim == 1 || (p.y >= d.lo.y && p.y <= d.hi.y));
  if (!inside)
    throw ConfigError("particle velocity requested outside the domain");
  return sample_vertex_field(vel_vert, p);
}

void step_micro(const Grid& g, ParticleEnsemble& e, const VectorField& vel_vert,
                double t_before, double dt, MicroStepStats* stats) {
  const Domain& d = g.dom;

  for (int j = 0; j < e.n(); ++j) {
    if (!e.alive[std::size_t(j)]) continue;
    Vec2 a = e.x[std::size_t(j)];
    Vec2 v = particle_velocity(g, vel_vert, a);

    std::int8_t s = v.x > 1e-12 ? 1 : (v.x < -1e-12 ? -1 : 0);
    if (s != 0) {
      if (e.last_sign[std::size_t(j)] != 0 &&
          s != e.last_sign[std::size_t(j)] && !e.turned[std::size_t(j)]) {
        e.turned[std::size_t(j)] = 1;
        if (stats) ++stats->new_turnarounds;
      }
      e.last_sign[std::size_t(j)] = s;
    }

    Vec2 b = a + dt * v;
    bool absorbed = false;
    // Resolve boundary contact: earliest crossed edge first. Exits swallow
    // the particle, walls project the endpoint back along their normal; a
    // corner needs one projection per wall, hence the bounded retry.
    for (int guard = 0; guard < 4 && !absorbed; ++guard) {
      auto hit = boundary_crossing(d, a, b);
      if (!hit) break;
      if (hit->is_exit) {
        e.alive[std::size_t(j)] = 0;
        e.exit_taken[std::size_t(j)] = hit->exit;
        e.exit_time[std::size_t(j)] = t_before + hit->t * dt;
        e.x[std::size_t(j)] = hit->point;
        if (stats) ++stats->absorbed;
        absorbed = true;
      } else if (hit->normal.x != 0.0) {
        b.x = hit->normal.x < 0 ? d.lo.x : d.hi.x;
      } else {
        b.y = hit->normal.y < 0 ? d.lo.y : d.hi.y;
      }
    }
    if (!absorbed) e.x[std::size_t(j)] = b;
  }
}

MicroResult run_micro(const Grid& g, const CostModel& cm,
                      const ScalarField* wall_cost, const VisionSpec& vision,
                      const EngineOptions& eopt, const MicroParams& mp,
                      const std::vector<DensityBlock>& rho0) {
  Rng rng(mp.seed);
  std::vector<Vec2> pos =
      sample_block_positions(rho0, mp.n_particles, g.dim, rng);
  MicroResult out;
  out.ensemble = ParticleEnsemble(std::move(pos), block_mass(g.dim, rho0));

  LocalPotentialEngine engine(g, cm, wall_cost, vision, eopt);
  Kernel K = make_kernel(mp.kernel_kind, mp.kernel_radius, g);
  std::vector<double> snaps = mp.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  std::size_t next_snap = 0;

  const int n = out.ensemble.n();
  const int exits = int(g.dom.exits.size());
  double t = 0.0;
  int step = 0;
  const SelfFields* fields = nullptr;

  for (;;) {
    if (next_snap < snaps.size() && std::abs(t - snaps[next_snap]) <= 1e-9) {
      out.snapshots.push_back({t, out.ensemble});
      ++next_snap;
    }
    if (out.ensemble.alive_count() == 0) {
      out.reason = StopReason::Evacuated;
      break;
    }
    if (t >= mp.t_max - 1e-12) {
      out.reason = StopReason::TimeLimit;
      break;
    }

    ScalarField rho = empirical_density(out.ensemble, g, mp.kde);
    // Packed spots can exceed rho_max; every consumer below expects an
    // admissible density.
    for (double& r : rho.v) r = std::min(r, mp.rho_max);

    if (step % std::max(1, mp.refresh_every) == 0 || !fields)
      fields = &engine.compute(rho);
    ExitChoice choice = select_exits(g, fields->self_cost);
    ConvictionStats cstats;
    VectorField u =
        conviction_field(g, choice, fields->self_grad, mp.u_single, &cstats);
    out.zero_gradient_hits += cstats.zero_gradient_hits;
    VectorField phi = consensus_field(rho, u, K, mp.consensus_delta);

    VectorField vel(g, Centering::Vertex);
    for (int v = 0; v < g.vcount(); ++v) {
      if (!g.vert_active[std::size_t(v)]) continue;
      double f = flux_speed(mp.law, rho.v[std::size_t(v)], mp.rho_max);
      vel.v[std::size_t(v)] =
          mp.literal_velocity
              ? -(f * f) * phi.v[std::size_t(v)]
              : f * -smoothed_projection(phi.v[std::size_t(v)], mp.proj);
    }

    MicroStepStats st;
    step_micro(g, out.ensemble, vel, t, mp.dt, &st);
    t += mp.dt;
    ++step;
    out.turnaround_count += st.new_turnarounds;

    MicroRow row;
    row.t = t;
    row.alive = out.ensemble.alive_count();
    row.exit_fraction = double(n - row.alive) / std::max(1, n);
    row.by_exit.assign(std::size_t(exits), 0.0);
    for (int j = 0; j < n; ++j)
      if (out.ensemble.exit_taken[std::size_t(j)] >= 0)
        row.by_exit[std::size_t(out.ensemble.exit_taken[std::size_t(j)])] +=
            1.0 / std::max(1, n);
    out.history.push_back(std::move(row));
  }

  out.engine = engine.stats();
  return out;
}

}  // namespace pedflow
