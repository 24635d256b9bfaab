#pragma once

#include <functional>
#include <vector>

#include "pedflow/direction.hpp"
#include "pedflow/eikonal.hpp"
#include "pedflow/fields.hpp"

namespace pedflow {

/** Cell-averaged crowd state advanced by the finite-volume loop. */
struct MacroState {
  double t = 0.0;
  int step = 0;
  ScalarField rho;               // cell-centered, in [0, rho_max]
  std::vector<double> outflux;   // cumulative mass left through each exit

  MacroState(const Grid& g, int exits)
      : rho(g, Centering::Cell), outflux(std::size_t(exits), 0.0) {}
};

/**
 * FORCE numeric flux for the scalar face problem with flux g(rho) =
 * rho*f(rho)*theta, theta frozen for the step: the average of the
 * Lax-Friedrichs flux and the Lax-Wendroff flux through the midpoint state
 *   rho* = (rho_l+rho_r)/2 - dt/(2h) (g(rho_r)-g(rho_l)).
 * Monotone whenever dt/h * max|g'| <= 1.
 */
double force_flux(FluxLaw law, double rho_max, double rho_l, double rho_r,
                  double theta, double dt, double h);

/**
 * Stable step size safety*h/max_wave_speed, capped at `cap`. A stopped crowd
 * (zero wave speed) gets the cap.
 */
double cfl_dt(double max_wave_speed, double h, double safety, double cap);

struct StepStats {
  double exited = 0.0;          // mass through all exits this step
  double clamp_residual = 0.0;  // |mass| adjusted when trimming roundoff
};

/**
 * One conservative finite-volume update with the direction field frozen:
 * interior faces use the FORCE flux with theta = face-average dir dotted with
 * the face normal, wall faces are impermeable, and exit faces release the
 * full upwind outflow rho*f(rho) of the owning cell. Advances t, the step
 * counter, and the per-exit outflux tallies.
 *
 * Throws NumericsError if any updated density leaves
 * [-1e-12, rho_max + 1e-12]: the step size violated the monotonicity bound.
 * Densities inside that tolerance band are trimmed back to [0, rho_max].
 */
void step_macro(const Grid& g, MacroState& state, const VelocityAssembly& va,
                FluxLaw law, double rho_max, double dt,
                StepStats* stats = nullptr);

struct MacroParams {
  FluxLaw law = FluxLaw::AsWritten;
  double rho_max = 1.0;
  double dt_cap = 5e-3;
  double cfl_safety = 0.45;
  double t_max = 4.0;
  double stop_mass_fraction = 0.01;  // finish when this fraction remains
  int refresh_every = 1;             // recompute potentials every n steps
  double u_single = 1.0;
  ProjectionParams proj{};
  KernelKind kernel_kind = KernelKind::Indicator;
  double kernel_radius = 0.05;
  double consensus_delta = 1e-7;
  std::vector<double> snapshot_times{};
  // A cell is "waiting" while it is occupied but hesitant; a waiting region
  // is a cell that stays that way for waiting_steps consecutive steps.
  double waiting_density = 0.1;
  double waiting_commit = 1.0 - 1e-9;
  int waiting_steps = 50;
};

struct MacroSnapshot {
  double t = 0.0;
  ScalarField rho;     // cells
  VectorField vel;     // cells
  ScalarField commit;  // cells
};

struct MassRow {
  double t = 0.0;
  double dt = 0.0;
  double mass = 0.0;
  std::vector<double> outflux;  // cumulative per exit
  int waiting_cells = 0;        // cells currently past the waiting streak
};

struct MacroResult {
  MacroState state;
  double initial_mass = 0.0;
  StopReason reason = StopReason::TimeLimit;
  std::vector<MassRow> history;
  std::vector<MacroSnapshot> snapshots;
  EngineStats engine;
  long zero_gradient_hits = 0;
  double clamp_residual = 0.0;
  int waiting_peak_streak = 0;     // longest waiting streak over all cells
  int waiting_cells_qualified = 0; // cells whose streak reached waiting_steps

  explicit MacroResult(const Grid& g, int exits) : state(g, exits) {}
};

/** Per-step observer: called after each update with the frozen assembly. */
using StepHook =
    std::function<void(const Grid&, const MacroState&, const VelocityAssembly&)>;

/**
 * Full crowd simulation loop: per-exit local potentials (refreshed on the
 * configured cadence), exit choice, conviction, consensus, smoothed
 * projection, boundary post-processing, CFL-limited FORCE update. Runs until
 * the remaining mass fraction drops under stop_mass_fraction or t reaches
 * t_max. Steps land exactly on snapshot times.
 */
MacroResult run_macro(const Grid& g, const CostModel& cm,
                      const ScalarField* wall_cost, const VisionSpec& vision,
                      const EngineOptions& eopt, const MacroParams& mp,
                      const ScalarField& rho0_cell, const StepHook& hook = {});

}  // namespace pedflow
