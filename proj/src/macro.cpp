#include "pedflow/macro.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace pedflow {

namespace {

double total_mass(const Grid& g, const ScalarField& rho_cell) {
  double m = 0.0;
  for (int c = 0; c < g.ccount(); ++c)
    if (g.cell_active[std::size_t(c)]) m += rho_cell.v[std::size_t(c)];
  return m * g.cell_volume();
}

}  // namespace

double force_flux(FluxLaw law, double rho_max, double rho_l, double rho_r,
                  double theta, double dt, double h) {
  double gl = flux_value(law, rho_l, rho_max) * theta;
  double gr = flux_value(law, rho_r, rho_max) * theta;
  double lam = dt / h;
  double f_lf = 0.5 * (gl + gr) - (rho_r - rho_l) / (2.0 * lam);
  double mid = 0.5 * (rho_l + rho_r) - 0.5 * lam * (gr - gl);
  double f_lw = flux_value(law, mid, rho_max) * theta;
  return 0.5 * (f_lf + f_lw);
}

double cfl_dt(double max_wave_speed, double h, double safety, double cap) {
  if (max_wave_speed <= 0.0) return cap;
  return std::min(cap, safety * h / max_wave_speed);
}

namespace {

// Conservative update over the faces of one axis (0 = x, 1 = y), exit faces
// of that axis included. Each sweep is a 1D FORCE step, monotone whenever
// lam * max|theta g'| <= 1, which the caller's CFL bound guarantees. The
// axes run one after another because a joint four-face update loses the
// discrete maximum principle for every positive time step: converging
// directions can then push a jammed cell past rho_max.
void sweep_axis(const Grid& g, MacroState& state, const VelocityAssembly& va,
                FluxLaw law, double rho_max, double dt, int axis,
                double& exited_total, double& clamp_residual) {
  auto& rho = state.rho.v;
  const double h = axis == 0 ? g.hx : g.hy;
  const double lam = dt / h;
  std::vector<double> delta(rho.size(), 0.0);

  auto active = [&](int c) { return bool(g.cell_active[std::size_t(c)]); };

  // Interior faces: FORCE flux with the face direction frozen for the step.
  const int ny = g.dim == 2 ? g.ny : 1;
  const int i0 = axis == 0 ? 1 : 0;
  const int j0 = axis == 0 ? 0 : 1;
  for (int j = j0; j < ny; ++j)
    for (int i = i0; i < g.nx; ++i) {
      int cl = axis == 0 ? g.cidx(i - 1, j) : g.cidx(i, j - 1);
      int cr = g.cidx(i, j);
      if (!active(cl) || !active(cr)) continue;
      double theta =
          axis == 0
              ? 0.5 * (va.dir.v[std::size_t(cl)].x + va.dir.v[std::size_t(cr)].x)
              : 0.5 * (va.dir.v[std::size_t(cl)].y + va.dir.v[std::size_t(cr)].y);
      // A face nobody moves across is a stationary Riemann problem whose
      // exact flux is zero; skipping it spares standing crowds the
      // Lax-Friedrichs smearing.
      if (theta == 0.0) continue;
      double f = force_flux(law, rho_max, rho[std::size_t(cl)],
                            rho[std::size_t(cr)], theta, dt, h);
      delta[std::size_t(cl)] -= lam * f;
      delta[std::size_t(cr)] += lam * f;
    }

  // Exit faces: free outflow at the cell's own flux rate, scaled by how much
  // of the frozen direction actually points out (the assembly pins exit
  // cells to the outward normal, making the scale 1; mass never enters
  // through an exit). Wall faces carry nothing. The transverse face measure
  // converts flux to mass per time.
  for (const auto& faces : g.exit_faces)
    for (const BoundaryFace& bf : faces) {
      bool xface = bf.side == kWest || bf.side == kEast;
      if (xface != (axis == 0)) continue;
      int c = g.cidx(bf.ci, bf.cj);
      double open = std::max(0.0, va.dir.v[std::size_t(c)].dot(bf.normal));
      double f = open * flux_value(law, rho[std::size_t(c)], rho_max);
      delta[std::size_t(c)] -= lam * f;
      double measure = g.dim == 2 ? (xface ? g.hy : g.hx) : 1.0;
      double mass_out = f * dt * measure;
      state.outflux[std::size_t(bf.exit)] += mass_out;
      exited_total += mass_out;
    }

  for (int c = 0; c < g.ccount(); ++c) {
    if (!active(c)) continue;
    double r = rho[std::size_t(c)] + delta[std::size_t(c)];
    if (r < -1e-12 || r > rho_max + 1e-12)
      throw NumericsError(
          "finite-volume step produced density " + std::to_string(r) +
          " outside [0, rho_max]: time step too large for the wave speeds");
    double trimmed = std::clamp(r, 0.0, rho_max);
    clamp_residual += std::abs(trimmed - r) * g.cell_volume();
    rho[std::size_t(c)] = trimmed;
  }
}

}  // namespace

void step_macro(const Grid& g, MacroState& state, const VelocityAssembly& va,
                FluxLaw law, double rho_max, double dt, StepStats* stats) {
  double exited_total = 0.0;
  double clamp_residual = 0.0;
  if (g.dim == 1) {
    sweep_axis(g, state, va, law, rho_max, dt, 0, exited_total,
               clamp_residual);
  } else if (state.step % 2 == 0) {
    // Alternate the sweep order so neither axis is systematically first.
    sweep_axis(g, state, va, law, rho_max, dt, 0, exited_total,
               clamp_residual);
    sweep_axis(g, state, va, law, rho_max, dt, 1, exited_total,
               clamp_residual);
  } else {
    sweep_axis(g, state, va, law, rho_max, dt, 1, exited_total,
               clamp_residual);
    sweep_axis(g, state, va, law, rho_max, dt, 0, exited_total,
               clamp_residual);
  }

  state.t += dt;
  state.step += 1;
  if (stats) {
    stats->exited = exited_total;
    stats->clamp_residual = clamp_residual;
  }
}

MacroResult run_macro(const Grid& g, const CostModel& cm,
                      const ScalarField* wall_cost, const VisionSpec& vision,
                      const EngineOptions& eopt, const MacroParams& mp,
                      const ScalarField& rho0_cell, const StepHook& hook) {
  const int exits = int(g.exit_faces.size());
  MacroResult out(g, exits);
  out.state.rho = rho0_cell;
  out.initial_mass = total_mass(g, rho0_cell);

  if (out.initial_mass <= 0.0) {
    out.reason = StopReason::Evacuated;
    out.history.push_back({0.0, 0.0, 0.0, out.state.outflux, 0});
    return out;
  }

  std::vector<double> snaps = mp.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  std::size_t next_snap = 0;

  LocalPotentialEngine engine(g, cm, wall_cost, vision, eopt);
  Kernel K = make_kernel(mp.kernel_kind, mp.kernel_radius, g);
  std::vector<int> streak(std::size_t(g.ccount()), 0);
  const double hmin = g.min_h();
  const double wave_bound = flux_wave_bound(mp.law, mp.rho_max);
  const SelfFields* fields = nullptr;

  for (;;) {
    ScalarField rho_vert = to_vertices(out.state.rho);
    if (out.state.step % std::max(1, mp.refresh_every) == 0 || !fields)
      fields = &engine.compute(rho_vert);

    ExitChoice choice = select_exits(g, fields->self_cost);
    ConvictionStats cstats;
    VectorField u = conviction_field(g, choice, fields->self_grad,
                                     mp.u_single, &cstats);
    out.zero_gradient_hits += cstats.zero_gradient_hits;
    VectorField phi = consensus_field(rho_vert, u, K, mp.consensus_delta);
    VelocityAssembly va =
        assemble_velocity(g, out.state.rho, phi, mp.law, mp.rho_max, mp.proj);

    // Waiting regions: occupied cells that keep hesitating, step after step.
    int waiting_now = 0;
    for (int c = 0; c < g.ccount(); ++c) {
      if (!g.cell_active[std::size_t(c)]) continue;
      bool hesitant = out.state.rho.v[std::size_t(c)] > mp.waiting_density &&
                      va.commit.v[std::size_t(c)] < mp.waiting_commit;
      int& s = streak[std::size_t(c)];
      s = hesitant ? s + 1 : 0;
      out.waiting_peak_streak = std::max(out.waiting_peak_streak, s);
      if (s == mp.waiting_steps) ++out.waiting_cells_qualified;
      if (s >= mp.waiting_steps) ++waiting_now;
    }

    if (next_snap < snaps.size() &&
        std::abs(out.state.t - snaps[next_snap]) <= 1e-9) {
      out.snapshots.push_back(
          {out.state.t, out.state.rho, va.vel, va.commit});
      ++next_snap;
    }

    double max_dir = 0.0;
    for (int c = 0; c < g.ccount(); ++c) {
      if (!g.cell_active[std::size_t(c)]) continue;
      max_dir = std::max(max_dir, va.dir.v[std::size_t(c)].norm());
    }
    double dt = cfl_dt(wave_bound * max_dir, hmin, mp.cfl_safety, mp.dt_cap);
    if (next_snap < snaps.size() && snaps[next_snap] > out.state.t)
      dt = std::min(dt, snaps[next_snap] - out.state.t);
    dt = std::min(dt, mp.t_max - out.state.t);
    if (dt < 1e-13)
      throw NumericsError("macro time step collapsed to zero at t=" +
                          std::to_string(out.state.t));

    StepStats sstats;
    step_macro(g, out.state, va, mp.law, mp.rho_max, dt, &sstats);
    out.clamp_residual += sstats.clamp_residual;

    double mass = total_mass(g, out.state.rho);
    out.history.push_back(
        {out.state.t, dt, mass, out.state.outflux, waiting_now});
    if (hook) hook(g, out.state, va);

    if (mass < mp.stop_mass_fraction * out.initial_mass) {
      out.reason = StopReason::Evacuated;
      break;
    }
    if (out.state.t >= mp.t_max - 1e-12) {
      out.reason = StopReason::TimeLimit;
      break;
    }
  }

  out.engine = engine.stats();
  return out;
}

}  // namespace pedflow
