#pragma once

#include <vector>

#include "pedflow/eikonal.hpp"
#include "pedflow/fields.hpp"
#include "pedflow/geometry.hpp"

namespace pedflow {

/**
 * Walking-speed laws for the transport step. `AsWritten` keeps the quadratic
 * speed f(rho) = (rho/rho_max)(1 - rho/rho_max) so the flux rho*f is cubic;
 * `Lwr` uses the classical linear speed 1 - rho/rho_max.
 */
enum class FluxLaw { AsWritten, Lwr };

/** Speed f(rho) >= 0; densities outside [0, rho_max] are clamped. */
double flux_speed(FluxLaw law, double rho, double rho_max);

/** Scalar flux g(rho) = rho * f(rho). */
double flux_value(FluxLaw law, double rho, double rho_max);

/** Signed derivative g'(rho); its |.| bounds the local wave speed. */
double flux_wave_speed(FluxLaw law, double rho, double rho_max);

/**
 * Largest |g'| over the whole admissible range [0, rho_max]. Time steps
 * must respect this bound, not the one at current densities: converging
 * direction fields compress crowds into steeper parts of the flux within
 * a single step.
 */
double flux_wave_bound(FluxLaw law, double rho_max);

struct ProjectionParams {
  double ell = 0.05;  // norm threshold below which commitment decays
  double k_P = 25.0;  // steepness of the decay
};

/**
 * Smooth stand-in for v/||v||: identity direction with norm 1 above ell,
 * sin(pi*arctan(k_P*||v||)/(2*arctan(k_P*ell))) * v/||v|| at or below ell,
 * zero at v = 0. Continuous at ||v|| = ell where the sine reaches 1.
 */
Vec2 smoothed_projection(Vec2 v, const ProjectionParams& p);

/**
 * Per-vertex exit decision. Exit ids are 0-based; reports and file outputs
 * print them 1-based. `best` is the cheapest exit with ties broken toward
 * the lowest id; `runner` is the second-cheapest, or -1 when no second
 * finite-cost exit exists (then runner_cost is +inf).
 */
struct ExitChoice {
  const Grid* g = nullptr;
  std::vector<int> best;
  std::vector<int> runner;
  std::vector<double> best_cost;
  std::vector<double> runner_cost;
};

ExitChoice select_exits(const Grid& g,
                        const std::vector<ScalarField>& self_costs);

struct ConvictionStats {
  long zero_gradient_hits = 0;  // positive cost gap but no usable gradient
};

/**
 * Conviction u on vertices: the unit ascent direction of the chosen exit's
 * potential scaled by the cost gap to the runner-up. The ascent orientation
 * pairs with the final velocity v = -f(rho)*P[phi] so that motion descends
 * toward the chosen exit. Where no runner-up exists (single exit), the gap
 * is replaced by u_single; where the gap is zero (sonic points) u = 0.
 */
VectorField conviction_field(const Grid& g, const ExitChoice& choice,
                             const std::vector<VectorField>& self_grads,
                             double u_single = 1.0,
                             ConvictionStats* stats = nullptr);

/**
 * Crowd consensus phi = (rho*u (*) K) / (rho (*) K) on vertices, falling
 * back to the own preference u wherever the smoothed mass is below
 * delta_rho (empty neighborhoods defer to the individual).
 */
VectorField consensus_field(const ScalarField& rho_vert, const VectorField& u,
                            const Kernel& K, double delta_rho = 1e-7);

/** Cell-centered walking direction and velocity. */
struct VelocityAssembly {
  VectorField dir;     // -P[consensus], ||dir|| <= 1; outward on exit cells
  VectorField vel;     // f(rho) * dir
  ScalarField commit;  // ||P[consensus]|| before boundary fixes; <1 = hesitant
};

/**
 * Final velocity v = -f(rho)*P[phi] on cells. Cells owning an exit face are
 * overridden to maximum outflow f(rho) through the exit; components of dir
 * that would cross a wall face are removed.
 */
VelocityAssembly assemble_velocity(const Grid& g, const ScalarField& rho_cell,
                                   const VectorField& consensus_vert,
                                   FluxLaw law, double rho_max,
                                   const ProjectionParams& proj);

}  // namespace pedflow
