#pragma once

#include <cstdint>
#include <vector>

#include "pedflow/direction.hpp"
#include "pedflow/eikonal.hpp"
#include "pedflow/fields.hpp"

namespace pedflow {

struct KDEConfig {
  double sigma = 0.05;      // Gaussian bandwidth
  double truncation = 4.0;  // support radius in bandwidths
};

/** Particle crowd: positions plus absorption and turnaround bookkeeping. */
struct ParticleEnsemble {
  std::vector<Vec2> x;
  std::vector<std::uint8_t> alive;
  std::vector<int> exit_taken;        // -1 until absorbed
  std::vector<double> exit_time;      // absorption time, -1 until absorbed
  std::vector<std::uint8_t> turned;   // horizontal velocity changed sign
  std::vector<std::int8_t> last_sign; // last nonzero sign of v.x
  double total_mass = 1.0;            // crowd mass the ensemble represents

  ParticleEnsemble() = default;
  explicit ParticleEnsemble(std::vector<Vec2> pos, double mass = 1.0);
  int n() const { return int(x.size()); }
  int alive_count() const;
};

/**
 * Vertex field (total_mass/N) sum of truncated Gaussian bumps, one per living
 * particle. Integrates to ~total_mass (truncation error only; no wall
 * renormalization), so values can exceed rho_max in packed spots: consumers
 * that need an admissible density clamp their own copy.
 */
ScalarField empirical_density(const ParticleEnsemble& e, const Grid& g,
                              const KDEConfig& kde);

/** Bilinear sample of the vertex velocity; throws ConfigError outside. */
Vec2 particle_velocity(const Grid& g, const VectorField& vel_vert, Vec2 p);

struct MicroStepStats {
  int absorbed = 0;
  int new_turnarounds = 0;
};

/**
 * Explicit Euler push. A particle whose path leaves the domain through an
 * exit segment is absorbed there (labeled with the exit and the crossing
 * time); a path into a wall is projected back along the wall normal. The
 * horizontal turnaround flag latches when the sign of v.x flips. t_before
 * is the clock at the start of the step.
 */
void step_micro(const Grid& g, ParticleEnsemble& e, const VectorField& vel_vert,
                double t_before, double dt, MicroStepStats* stats = nullptr);

struct MicroParams {
  FluxLaw law = FluxLaw::AsWritten;
  double rho_max = 1.0;
  double dt = 1e-2;
  double t_max = 1.5;
  int n_particles = 500;
  KDEConfig kde{};
  // Velocity composition: the default mirrors the macroscopic field
  // -f(rho) P[phi]; `literal` uses -f(rho)^2 phi, the printed form whose
  // projection-free composition relies on the eikonal identity |grad| = 1/f.
  bool literal_velocity = false;
  double u_single = 1.0;
  ProjectionParams proj{};
  KernelKind kernel_kind = KernelKind::Indicator;
  double kernel_radius = 0.05;
  double consensus_delta = 1e-7;
  int refresh_every = 1;
  std::uint64_t seed = 1;
  std::vector<double> snapshot_times{};
};

struct MicroSnapshot {
  double t = 0.0;
  ParticleEnsemble state;
};

struct MicroRow {
  double t = 0.0;
  double exit_fraction = 0.0;     // absorbed / N
  std::vector<double> by_exit;    // absorbed through exit k / N
  int alive = 0;
};

struct MicroResult {
  ParticleEnsemble ensemble;
  std::vector<MicroRow> history;
  std::vector<MicroSnapshot> snapshots;
  EngineStats engine;
  StopReason reason = StopReason::TimeLimit;
  int turnaround_count = 0;
  long zero_gradient_hits = 0;
};

/**
 * Particle crowd loop: seeded inverse-CDF sampling of the initial blocks,
 * then per step a kernel density estimate, the shared per-exit potential
 * machinery, consensus velocity on vertices, and an Euler push with
 * absorption. The ensemble mass is the analytic block mass, so the density
 * estimate is comparable with the continuum runs.
 */
MicroResult run_micro(const Grid& g, const CostModel& cm,
                      const ScalarField* wall_cost, const VisionSpec& vision,
                      const EngineOptions& eopt, const MicroParams& mp,
                      const std::vector<DensityBlock>& rho0);

}  // namespace pedflow
