#pragma once

#include <memory>
#include <vector>

#include "pedflow/cost.hpp"
#include "pedflow/fields.hpp"

namespace pedflow {

enum class SolverMethod { FSM, FMM };
enum class ReductionMode { None, MH, Vsharp };

struct SolverOptions {
  SolverMethod method = SolverMethod::FSM;
  double tol = -1.0;  // negative: use default_tolerance()
  int max_sweeps = 100;
};

/** Default iteration tolerance, scaled to the largest representable cost. */
double default_tolerance(const Grid& g, double c_max);

struct EikonalProblem {
  const Grid* g = nullptr;
  ScalarField cost;           // vertex-indexed, strictly positive
  std::vector<int> boundary;  // vertices held at zero
};

struct SolveStats {
  int sweeps = 0;
  double residual = 0.0;
  int zero_gradient_hits = 0;  // diagnostic counter, filled by callers
};

struct EikonalSolution {
  ScalarField phi;  // vertex-indexed; kInf where unreachable
  SolveStats stats;
};

EikonalSolution fsm_solve(const EikonalProblem& p, double tol = -1.0,
                          int max_sweeps = 100);
EikonalSolution fmm_solve(const EikonalProblem& p);

/**
 * Shortest path on the 8-neighbor graph with edge weight
 * (c(a)+c(b))/2 * ||a-b||. Overestimates the grid solution by the
 * metrication error; loose-tolerance cross-checks only.
 */
EikonalSolution dijkstra_oracle(const EikonalProblem& p);

/**
 * Travel cost per vertex: visible vertices pay the density cost plus the
 * wall layer, hidden vertices pay the constant assumed-density cost with
 * no wall term. Wall-exterior vertices are never entered by the solvers.
 */
ScalarField assemble_cost(const ScalarField& rho_vert,
                          const std::vector<std::uint8_t>& mask,
                          const ScalarField* W, const CostModel& cm);

/** Constant assumed-density solve with every exit held at zero. */
EikonalSolution compute_reference_potential(const Grid& g, const CostModel& cm,
                                            const SolverOptions& opts = {});

/** Same constant-cost solve against a single exit. */
EikonalSolution compute_exit_reference(const Grid& g, const CostModel& cm,
                                       int exit_k,
                                       const SolverOptions& opts = {});

struct MHSet {
  double m_H = 0.0;
  std::vector<std::uint8_t> inside;  // vertex-indexed superlevel set
};

/**
 * Superlevel set of the reference potential above its minimum over the
 * vision set: everything outside it keeps the reference values.
 */
MHSet compute_MH(const ScalarField& phi_ref,
                 const std::vector<std::uint8_t>& mask);

/**
 * Upwind dependency closure: every vertex whose reference-potential value
 * can be influenced when values inside the seed set drop. Propagates from
 * the seeds to 4-neighbors with non-decreasing reference values.
 */
std::vector<std::uint8_t> dependency_closure(
    const Grid& g, const ScalarField& phi_ref,
    const std::vector<std::uint8_t>& seeds);

/**
 * Shadow of the vision set under the reference flow: vertices whose
 * default gradient-descent path crosses the vision set (explicit Euler,
 * step h/2, budget 10*diameter/h; over-budget points count as inside),
 * united with the dependency closure and clipped to the superlevel set.
 */
std::vector<std::uint8_t> compute_Vsharp(const Grid& g,
                                         const EikonalSolution& ref,
                                         const std::vector<std::uint8_t>& mask);

/** Full per-observer solve: assemble cost from the vision mask, solve exit k. */
EikonalSolution local_potential(const Grid& g, Vec2 x,
                                const ScalarField& rho_vert, int exit_k,
                                const VisionSpec& vision, const CostModel& cm,
                                const ScalarField* W,
                                const SolverOptions& opts = {});

/**
 * Reduced per-observer solve: update only the reduction set, read the
 * single-exit reference everywhere else. Falls back from Vsharp to MH when
 * the cost model is not non-decreasing or the assumed hidden density is
 * positive (the shadow argument needs both).
 */
EikonalSolution reduced_local_potential(const Grid& g, Vec2 x,
                                        const ScalarField& rho_vert, int exit_k,
                                        const VisionSpec& vision,
                                        const CostModel& cm,
                                        const ScalarField* W,
                                        ReductionMode mode,
                                        const EikonalSolution& exit_ref,
                                        const SolverOptions& opts = {});

struct EngineOptions {
  SolverMethod method = SolverMethod::FSM;
  double tol = -1.0;
  int max_sweeps = 100;
  int stride = 1;  // observer lattice spacing in vertices
  ReductionMode reduction = ReductionMode::Vsharp;
};

/** Per-exit self costs and self gradients on every vertex. */
struct SelfFields {
  std::vector<ScalarField> self_cost;  // [exit] phi_k(x,x)
  std::vector<VectorField> self_grad;  // [exit] grad_y phi_k(x,x)
};

struct EngineStats {
  long solves = 0;
  long sweeps = 0;
  long closure_vertices = 0;
};

/**
 * Orchestrates the per-observer eikonal solves for one scenario: observer
 * lattice with optional stride, per-(observer, exit) reduction sets and
 * warm-started potentials, and a shared-solution fast path under global
 * vision. Reference potentials are computed once; refreshing against a new
 * density only re-iterates the reduction sets.
 */
class LocalPotentialEngine {
 public:
  LocalPotentialEngine(const Grid& g, const CostModel& cm, const ScalarField* W,
                       const VisionSpec& vision, const EngineOptions& opts);
  ~LocalPotentialEngine();

  /** Recompute all observer solves against the given vertex density. */
  const SelfFields& compute(const ScalarField& rho_vert);

  const SelfFields& fields() const { return out_; }
  const ScalarField& exit_reference(int k) const;
  bool global_vision() const;  // shared-solution fast path active
  /** Full potential field of exit k; only valid under global vision. */
  const ScalarField& global_potential(int k) const;
  ReductionMode effective_reduction() const { return reduction_; }
  const EngineStats& stats() const { return stats_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  SelfFields out_;
  ReductionMode reduction_;
  EngineStats stats_;
};

}  // namespace pedflow
