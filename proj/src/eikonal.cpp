#include "pedflow/eikonal.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace pedflow {
namespace {

/**
 * Godunov nodal update: smallest phi with
 * max((phi-a)/hx,0)^2 + max((phi-b)/hy,0)^2 = c^2
 * where a, b are the axis-wise upwind neighbor minima (kInf when absent).
 */
double godunov_update(double a, double b, double hx, double hy, double c,
                      int dim) {
  if (dim == 1 || b == kInf) {
    if (a == kInf) return kInf;
    return a + c * hx;
  }
  if (a == kInf) return b + c * hy;
  double w1 = 1.0 / (hx * hx), w2 = 1.0 / (hy * hy);
  double A = w1 + w2;
  double B = w1 * a + w2 * b;
  double C = w1 * a * a + w2 * b * b - c * c;
  double disc = B * B - A * C;
  if (disc >= 0.0) {
    double phi = (B + std::sqrt(disc)) / A;
    if (phi >= std::max(a, b) - 1e-15 * (1.0 + std::abs(phi))) return phi;
  }
  return std::min(a + c * hx, b + c * hy);
}

double change_between(double a, double b) {
  bool ia = a == kInf, ib = b == kInf;
  if (ia && ib) return 0.0;
  if (ia || ib) return kInf;
  return std::abs(a - b);
}

struct Region {
  int i0 = 0, i1 = -1, j0 = 0, j1 = -1;
  bool empty() const { return i1 < i0 || j1 < j0; }
  void grow(int i, int j) {
    if (i1 < i0) {
      i0 = i1 = i;
      j0 = j1 = j;
      return;
    }
    i0 = std::min(i0, i);
    i1 = std::max(i1, i);
    j0 = std::min(j0, j);
    j1 = std::max(j1, j);
  }
};

Region full_region(const Grid& g) {
  return {0, g.vnx - 1, 0, g.dim == 2 ? g.vny - 1 : 0};
}

/**
 * Gauss-Seidel sweeps over the update set; vertices outside it (exits,
 * reduction complements) act as Dirichlet data. Callers must start the
 * update set at kInf: from above, sweeps settle in a handful of cycles.
 * Starting below the fixed point (e.g. reusing a solution after the cost
 * rose) is poison: a long stretch with no lower anchor then rises by only
 * 2*cost*h per cycle, and the sweep count grows like the cost increase
 * over that resolution.
 */
SolveStats fsm_core(const Grid& g, const double* cost,
                    const std::uint8_t* update, Region box,
                    std::vector<double>& phi, double tol, int max_sweeps) {
  SolveStats st;
  if (box.empty()) return st;
  const int vnx = g.vnx;
  const std::uint8_t* act = g.vert_active.data();
  const int orderings = g.dim == 2 ? 4 : 2;
  const double hx = g.hx, hy = g.hy;

  for (int cycle = 0; cycle < max_sweeps; ++cycle) {
    double cyc = 0.0;
    for (int ord = 0; ord < orderings; ++ord) {
      bool xup = (ord & 1) == 0;
      bool yup = (ord & 2) == 0;
      int jb = yup ? box.j0 : box.j1, je = yup ? box.j1 + 1 : box.j0 - 1;
      int js = yup ? 1 : -1;
      int ib = xup ? box.i0 : box.i1, ie = xup ? box.i1 + 1 : box.i0 - 1;
      int is = xup ? 1 : -1;
      for (int j = jb; j != je; j += js) {
        const int row = j * vnx;
        for (int i = ib; i != ie; i += is) {
          const int v = row + i;
          if (!update[v]) continue;
          double a = kInf, b = kInf;
          if (i > 0 && act[v - 1]) a = phi[v - 1];
          if (i + 1 < vnx && act[v + 1]) a = std::min(a, phi[v + 1]);
          if (g.dim == 2) {
            if (j > 0 && act[v - vnx]) b = phi[v - vnx];
            if (j + 1 < g.vny && act[v + vnx]) b = std::min(b, phi[v + vnx]);
          }
          double nv = godunov_update(a, b, hx, hy, cost[v], g.dim);
          double d = change_between(nv, phi[v]);
          if (d > cyc) cyc = d;
          phi[v] = nv;
        }
      }
      ++st.sweeps;
    }
    st.residual = cyc;
    if (cyc < tol) return st;
  }
  throw EikonalError("eikonal sweeps did not converge", st.residual);
}

std::vector<std::uint8_t> full_update_mask(const Grid& g,
                                           const std::vector<int>& boundary) {
  std::vector<std::uint8_t> u(g.vert_active.begin(), g.vert_active.end());
  for (int v : boundary) u[std::size_t(v)] = 0;
  return u;
}

// Restart the update set from above; the complement keeps its pinned values.
void reset_update_set(const std::vector<std::uint8_t>& update,
                      std::vector<double>& phi) {
  for (std::size_t v = 0; v < update.size(); ++v)
    if (update[v]) phi[v] = kInf;
}

void init_cold(const Grid& g, const std::vector<int>& boundary,
               std::vector<double>& phi) {
  phi.assign(std::size_t(g.vcount()), kInf);
  for (int v : boundary) phi[std::size_t(v)] = 0.0;
}

/**
 * Monotone-front solver over the same discretization: vertices outside the
 * update set are treated as already-accepted Dirichlet data.
 */
SolveStats fmm_core(const Grid& g, const double* cost,
                    const std::uint8_t* update, std::vector<double>& phi) {
  SolveStats st;
  const int vnx = g.vnx, n = g.vcount();
  const std::uint8_t* act = g.vert_active.data();
  std::vector<std::uint8_t> accepted(std::size_t(n), 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;

  auto axis_minima = [&](int v, int i, int j, double& a, double& b) {
    a = b = kInf;
    if (i > 0 && act[v - 1] && accepted[v - 1]) a = phi[v - 1];
    if (i + 1 < vnx && act[v + 1] && accepted[v + 1])
      a = std::min(a, phi[v + 1]);
    if (g.dim == 2) {
      if (j > 0 && act[v - vnx] && accepted[v - vnx]) b = phi[v - vnx];
      if (j + 1 < g.vny && act[v + vnx] && accepted[v + vnx])
        b = std::min(b, phi[v + vnx]);
    }
  };
  auto relax_neighbors = [&](int v) {
    int i = v % vnx, j = v / vnx;
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};
    int nn = g.dim == 2 ? 4 : 2;
    for (int q = 0; q < nn; ++q) {
      int ni = i + di[q], nj = j + dj[q];
      if (ni < 0 || ni >= vnx || nj < 0 || nj >= (g.dim == 2 ? g.vny : 1))
        continue;
      int w = nj * vnx + ni;
      if (!act[w] || !update[w] || accepted[w]) continue;
      double a, b;
      axis_minima(w, ni, nj, a, b);
      double t = godunov_update(a, b, g.hx, g.hy, cost[w], g.dim);
      if (t < phi[w]) {
        phi[w] = t;
        heap.push({t, w});
      }
    }
  };

  for (int v = 0; v < n; ++v)
    if (act[v] && !update[v]) accepted[v] = 1;
  for (int v = 0; v < n; ++v)
    if (accepted[v] && phi[v] < kInf) relax_neighbors(v);

  while (!heap.empty()) {
    auto [val, v] = heap.top();
    heap.pop();
    if (accepted[v] || val > phi[v]) continue;  // stale entry
    accepted[v] = 1;
    ++st.sweeps;  // counts accepted promotions
    relax_neighbors(v);
  }
  return st;
}

}  // namespace

double default_tolerance(const Grid& g, double c_max) {
  return 1e-8 * std::max(1.0, g.diameter() * c_max);
}

static double max_cost(const ScalarField& cost, const Grid& g) {
  double m = 0;
  for (int v = 0; v < g.vcount(); ++v)
    if (g.vert_active[v]) m = std::max(m, cost.v[std::size_t(v)]);
  return m;
}

EikonalSolution fsm_solve(const EikonalProblem& p, double tol, int max_sweeps) {
  const Grid& g = *p.g;
  if (p.boundary.empty()) throw ConfigError("eikonal problem has no boundary");
  EikonalSolution sol;
  sol.phi = ScalarField(g, Centering::Vertex);
  init_cold(g, p.boundary, sol.phi.v);
  auto update = full_update_mask(g, p.boundary);
  if (tol < 0) tol = default_tolerance(g, max_cost(p.cost, g));
  sol.stats = fsm_core(g, p.cost.v.data(), update.data(), full_region(g),
                       sol.phi.v, tol, max_sweeps);
  return sol;
}

EikonalSolution fmm_solve(const EikonalProblem& p) {
  const Grid& g = *p.g;
  if (p.boundary.empty()) throw ConfigError("eikonal problem has no boundary");
  EikonalSolution sol;
  sol.phi = ScalarField(g, Centering::Vertex);
  init_cold(g, p.boundary, sol.phi.v);
  auto update = full_update_mask(g, p.boundary);
  sol.stats = fmm_core(g, p.cost.v.data(), update.data(), sol.phi.v);
  return sol;
}

EikonalSolution dijkstra_oracle(const EikonalProblem& p) {
  const Grid& g = *p.g;
  EikonalSolution sol;
  sol.phi = ScalarField(g, Centering::Vertex);
  init_cold(g, p.boundary, sol.phi.v);
  auto& phi = sol.phi.v;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (int v : p.boundary) heap.push({0.0, v});
  std::vector<std::uint8_t> done(std::size_t(g.vcount()), 0);
  const int vnx = g.vnx, vny = g.dim == 2 ? g.vny : 1;
  while (!heap.empty()) {
    auto [val, v] = heap.top();
    heap.pop();
    if (done[v] || val > phi[v]) continue;
    done[v] = 1;
    int i = v % vnx, j = v / vnx;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        if (g.dim == 1 && dj != 0) continue;
        int ni = i + di, nj = j + dj;
        if (ni < 0 || ni >= vnx || nj < 0 || nj >= vny) continue;
        int w = nj * vnx + ni;
        if (!g.vert_active[w] || done[w]) continue;
        double len = std::hypot(di * g.hx, dj * g.hy);
        double edge =
            0.5 * (p.cost.v[std::size_t(v)] + p.cost.v[std::size_t(w)]) * len;
        if (phi[v] + edge < phi[w]) {
          phi[w] = phi[v] + edge;
          heap.push({phi[w], w});
        }
      }
  }
  return sol;
}

ScalarField assemble_cost(const ScalarField& rho_vert,
                          const std::vector<std::uint8_t>& mask,
                          const ScalarField* W, const CostModel& cm) {
  const Grid& g = *rho_vert.g;
  ScalarField c(g, Centering::Vertex, cm.hidden_cost());
  for (int v = 0; v < g.vcount(); ++v) {
    if (!g.vert_active[v]) {
      c.v[std::size_t(v)] = cm.c_max;
      continue;
    }
    if (!mask[std::size_t(v)]) continue;
    double w = W ? W->v[std::size_t(v)] : 0.0;
    c.v[std::size_t(v)] = cm.cost(rho_vert.v[std::size_t(v)]) + w;
  }
  return c;
}

static EikonalSolution solve_constant(const Grid& g, const CostModel& cm,
                                      const std::vector<int>& boundary,
                                      const SolverOptions& opts) {
  EikonalProblem p;
  p.g = &g;
  p.cost = ScalarField(g, Centering::Vertex, cm.hidden_cost());
  p.boundary = boundary;
  double tol =
      opts.tol < 0 ? default_tolerance(g, cm.hidden_cost()) : opts.tol;
  if (opts.method == SolverMethod::FMM) return fmm_solve(p);
  return fsm_solve(p, tol, opts.max_sweeps);
}

EikonalSolution compute_reference_potential(const Grid& g, const CostModel& cm,
                                            const SolverOptions& opts) {
  std::vector<int> boundary;
  for (const auto& verts : g.exit_vertices)
    boundary.insert(boundary.end(), verts.begin(), verts.end());
  std::sort(boundary.begin(), boundary.end());
  boundary.erase(std::unique(boundary.begin(), boundary.end()),
                 boundary.end());
  return solve_constant(g, cm, boundary, opts);
}

EikonalSolution compute_exit_reference(const Grid& g, const CostModel& cm,
                                       int exit_k, const SolverOptions& opts) {
  if (exit_k < 0 || exit_k >= int(g.exit_vertices.size()))
    throw ConfigError("exit index out of range");
  return solve_constant(g, cm, g.exit_vertices[std::size_t(exit_k)], opts);
}

MHSet compute_MH(const ScalarField& phi_ref,
                 const std::vector<std::uint8_t>& mask) {
  const Grid& g = *phi_ref.g;
  MHSet out;
  out.m_H = kInf;
  for (int v = 0; v < g.vcount(); ++v)
    if (mask[std::size_t(v)] && g.vert_active[v])
      out.m_H = std::min(out.m_H, phi_ref.v[std::size_t(v)]);
  if (out.m_H == kInf) out.m_H = 0.0;  // empty vision set: keep everything
  out.inside.assign(std::size_t(g.vcount()), 0);
  for (int v = 0; v < g.vcount(); ++v)
    if (g.vert_active[v] && phi_ref.v[std::size_t(v)] >= out.m_H)
      out.inside[std::size_t(v)] = 1;
  return out;
}

std::vector<std::uint8_t> dependency_closure(
    const Grid& g, const ScalarField& phi_ref,
    const std::vector<std::uint8_t>& seeds) {
  std::vector<std::uint8_t> in(std::size_t(g.vcount()), 0);
  std::vector<int> queue;
  for (int v = 0; v < g.vcount(); ++v)
    if (seeds[std::size_t(v)] && g.vert_active[v]) {
      in[std::size_t(v)] = 1;
      queue.push_back(v);
    }
  const int vnx = g.vnx, vny = g.dim == 2 ? g.vny : 1;
  const int di[4] = {-1, 1, 0, 0};
  const int dj[4] = {0, 0, -1, 1};
  const int nn = g.dim == 2 ? 4 : 2;
  while (!queue.empty()) {
    int v = queue.back();
    queue.pop_back();
    double pv = phi_ref.v[std::size_t(v)];
    int i = v % vnx, j = v / vnx;
    for (int q = 0; q < nn; ++q) {
      int ni = i + di[q], nj = j + dj[q];
      if (ni < 0 || ni >= vnx || nj < 0 || nj >= vny) continue;
      int w = nj * vnx + ni;
      if (in[std::size_t(w)] || !g.vert_active[w]) continue;
      double pw = phi_ref.v[std::size_t(w)];
      // Non-descending reference value: w's solve may read v's value.
      if (pw >= pv - 1e-12 * (1.0 + std::abs(pv))) {
        in[std::size_t(w)] = 1;
        queue.push_back(w);
      }
    }
  }
  return in;
}

std::vector<std::uint8_t> compute_Vsharp(const Grid& g,
                                         const EikonalSolution& ref,
                                         const std::vector<std::uint8_t>& mask) {
  // Sound core: the upwind dependency closure of the vision set.
  std::vector<std::uint8_t> seeds(std::size_t(g.vcount()), 0);
  for (int v = 0; v < g.vcount(); ++v)
    if (mask[std::size_t(v)] && g.vert_active[v] &&
        ref.phi.v[std::size_t(v)] > 1e-12)
      seeds[std::size_t(v)] = 1;
  auto out = dependency_closure(g, ref.phi, seeds);
  MHSet mh = compute_MH(ref.phi, mask);

  // Literal shadow: gradient-descent walks on the reference potential.
  ScalarField walkable = ref.phi;
  double vmax = 0;
  for (int v = 0; v < g.vcount(); ++v)
    if (g.vert_active[v] && walkable.v[std::size_t(v)] < kInf)
      vmax = std::max(vmax, walkable.v[std::size_t(v)]);
  for (auto& x : walkable.v)
    if (x == kInf) x = 2 * vmax + 1.0;  // repel walks from unreachable spots
  VectorField grad = gradient(walkable);

  const double step = (g.dim == 2 ? std::min(g.hx, g.hy) : g.hx) / 2.0;
  const long budget = std::lround(10.0 * g.diameter() / step);
  std::vector<std::uint8_t> memo(std::size_t(g.vcount()), 0);  // 0 ? 1 in 2 out
  std::vector<int> trail;

  for (int v0 = 0; v0 < g.vcount(); ++v0) {
    if (!g.vert_active[v0] || out[std::size_t(v0)] || memo[std::size_t(v0)])
      continue;
    trail.clear();
    trail.push_back(v0);
    Vec2 p = g.vpos(v0 % g.vnx, v0 / g.vnx);
    std::uint8_t verdict = 1;  // conservative default: inside
    for (long s = 0; s < budget; ++s) {
      int ni, nj;
      g.nearest_vertex(p, ni, nj);
      int nv = g.vidx(ni, nj);
      if (nv != trail.back()) trail.push_back(nv);
      if (memo[std::size_t(nv)]) {
        verdict = memo[std::size_t(nv)];
        break;
      }
      if (mask[std::size_t(nv)]) {
        verdict = 1;
        break;
      }
      if (ref.phi.v[std::size_t(nv)] <= 1e-12) {
        verdict = 2;
        break;
      }
      Vec2 d = sample_vertex_field(grad, p);
      double n = d.norm();
      if (n < 1e-14) break;  // stalled on a ridge: stay conservative
      p = p + (-step / n) * d;
    }
    for (int t : trail)
      if (!memo[std::size_t(t)]) memo[std::size_t(t)] = verdict;
  }
  for (int v = 0; v < g.vcount(); ++v)
    if (memo[std::size_t(v)] == 1 && mh.inside[std::size_t(v)])
      out[std::size_t(v)] = 1;
  return out;
}

EikonalSolution local_potential(const Grid& g, Vec2 x,
                                const ScalarField& rho_vert, int exit_k,
                                const VisionSpec& vision, const CostModel& cm,
                                const ScalarField* W,
                                const SolverOptions& opts) {
  if (exit_k < 0 || exit_k >= int(g.exit_vertices.size()))
    throw ConfigError("exit index out of range");
  auto mask = vision_mask(g, x, vision);
  EikonalProblem p;
  p.g = &g;
  p.cost = assemble_cost(rho_vert, mask, W, cm);
  p.boundary = g.exit_vertices[std::size_t(exit_k)];
  double tol = opts.tol < 0 ? default_tolerance(g, cm.c_max) : opts.tol;
  if (opts.method == SolverMethod::FMM) return fmm_solve(p);
  return fsm_solve(p, tol, opts.max_sweeps);
}

EikonalSolution reduced_local_potential(
    const Grid& g, Vec2 x, const ScalarField& rho_vert, int exit_k,
    const VisionSpec& vision, const CostModel& cm, const ScalarField* W,
    ReductionMode mode, const EikonalSolution& exit_ref,
    const SolverOptions& opts) {
  if (mode == ReductionMode::Vsharp &&
      !(cm.cost_nondecreasing() && cm.rho_H <= cm.delta_rho))
    mode = ReductionMode::MH;  // shadow argument needs both preconditions

  auto mask = vision_mask(g, x, vision);
  auto cost = assemble_cost(rho_vert, mask, W, cm);

  std::vector<std::uint8_t> update;
  if (mode == ReductionMode::Vsharp) {
    update = compute_Vsharp(g, exit_ref, mask);
  } else if (mode == ReductionMode::MH) {
    update = compute_MH(exit_ref.phi, mask).inside;
  } else {
    update.assign(g.vert_active.begin(), g.vert_active.end());
  }
  for (int v : g.exit_vertices[std::size_t(exit_k)])
    update[std::size_t(v)] = 0;

  Region box;
  for (int j = 0; j < (g.dim == 2 ? g.vny : 1); ++j)
    for (int i = 0; i < g.vnx; ++i)
      if (update[std::size_t(g.vidx(i, j))]) box.grow(i, j);

  EikonalSolution sol;
  sol.phi = exit_ref.phi;  // complement keeps the reference values
  reset_update_set(update, sol.phi.v);
  double tol = opts.tol < 0 ? default_tolerance(g, cm.c_max) : opts.tol;
  if (opts.method == SolverMethod::FMM) {
    sol.stats = fmm_core(g, cost.v.data(), update.data(), sol.phi.v);
  } else {
    sol.stats = fsm_core(g, cost.v.data(), update.data(), box, sol.phi.v, tol,
                         opts.max_sweeps);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Observer engine

namespace {

struct VisionPatch {
  std::vector<std::uint8_t> bits;
  Region box;
};

}  // namespace

struct LocalPotentialEngine::Impl {
  const Grid& g;
  CostModel cm;
  ScalarField W;
  bool has_W = false;
  VisionSpec vision;
  EngineOptions opt;
  double tol;
  bool global = false;
  int M = 0;

  std::vector<EikonalSolution> refs;              // per exit
  std::vector<std::vector<std::uint8_t>> exit_bc; // per exit vertex bitmap

  // Observer lattice (includes the last row/column).
  std::vector<int> lat_i, lat_j;
  std::vector<int> obs_vid;           // lattice row-major
  std::vector<std::uint8_t> obs_ok;   // active observer vertices
  std::vector<std::unique_ptr<VisionPatch>> patches;  // per observer, lazy

  struct PairCache {
    std::vector<std::uint8_t> update;
    std::vector<double> phi;
    Region box;
    bool ready = false;
  };
  std::vector<PairCache> pairs;  // obs * M + k

  // Interpolation tables vertex index -> lattice bracket.
  std::vector<int> ix0, ix1, jy0, jy1;
  std::vector<double> wx, wy;

  // Per-exit observer results.
  std::vector<std::vector<double>> obs_cost;
  std::vector<std::vector<Vec2>> obs_grad;

  std::vector<double> cost_scratch;
  std::vector<std::vector<double>> global_phi;  // per exit, warm
  std::vector<ScalarField> global_fields;

  Impl(const Grid& grid) : g(grid) {}

  int nobs() const { return int(obs_vid.size()); }

  /**
   * Removes gradient components whose descent direction would leave the
   * walkable region (walls, obstacles). Exit vertices keep their outward
   * descent.
   */
  void clamp_wall_gradient(int i, int j, Vec2& grad) const {
    int v = g.vidx(i, j);
    if (g.vert_exit[std::size_t(v)] >= 0) return;
    auto walkable = [&](int ii, int jj) {
      if (ii < 0 || ii >= g.vnx || jj < 0 || jj >= (g.dim == 2 ? g.vny : 1))
        return false;
      return g.vert_active[std::size_t(g.vidx(ii, jj))] != 0;
    };
    if (grad.x < 0 && !walkable(i + 1, j)) grad.x = 0;  // descent points +x
    if (grad.x > 0 && !walkable(i - 1, j)) grad.x = 0;
    if (g.dim == 2) {
      if (grad.y < 0 && !walkable(i, j + 1)) grad.y = 0;
      if (grad.y > 0 && !walkable(i, j - 1)) grad.y = 0;
    }
  }

  Vec2 self_gradient(const std::vector<double>& phi, int i, int j) const {
    auto val = [&](int ii, int jj) -> double {
      if (ii < 0 || ii >= g.vnx || jj < 0 || jj >= (g.dim == 2 ? g.vny : 1))
        return kInf;
      int v = g.vidx(ii, jj);
      if (!g.vert_active[v]) return kInf;
      return phi[std::size_t(v)];
    };
    double c = val(i, j);
    Vec2 out{0, 0};
    double xm = val(i - 1, j), xp = val(i + 1, j);
    if (xm < kInf && xp < kInf)
      out.x = (xp - xm) / (2 * g.hx);
    else if (xp < kInf && c < kInf)
      out.x = (xp - c) / g.hx;
    else if (xm < kInf && c < kInf)
      out.x = (c - xm) / g.hx;
    if (g.dim == 2) {
      double ym = val(i, j - 1), yp = val(i, j + 1);
      if (ym < kInf && yp < kInf)
        out.y = (yp - ym) / (2 * g.hy);
      else if (yp < kInf && c < kInf)
        out.y = (yp - c) / g.hy;
      else if (ym < kInf && c < kInf)
        out.y = (c - ym) / g.hy;
    }
    return out;
  }
};

LocalPotentialEngine::LocalPotentialEngine(const Grid& g, const CostModel& cm,
                                           const ScalarField* W,
                                           const VisionSpec& vision,
                                           const EngineOptions& opts)
    : impl_(std::make_unique<Impl>(g)) {
  Impl& im = *impl_;
  im.cm = cm;
  if (W) {
    im.W = *W;
    im.has_W = true;
  }
  im.vision = vision;
  im.opt = opts;
  if (im.opt.stride < 1) throw ConfigError("observer stride must be >= 1");
  im.tol = opts.tol < 0 ? default_tolerance(g, cm.c_max) : opts.tol;
  im.M = int(g.exit_vertices.size());
  im.global = vision.global() || vision.L / 2.0 >= g.diameter();

  reduction_ = opts.reduction;
  if (reduction_ == ReductionMode::Vsharp && !cm.cost_nondecreasing())
    reduction_ = ReductionMode::MH;
  if (reduction_ != ReductionMode::None && cm.rho_H > cm.delta_rho)
    reduction_ = ReductionMode::None;  // reference is not a lower bound then

  im.exit_bc.assign(std::size_t(im.M), {});
  for (int k = 0; k < im.M; ++k) {
    im.exit_bc[std::size_t(k)].assign(std::size_t(g.vcount()), 0);
    for (int v : g.exit_vertices[std::size_t(k)])
      im.exit_bc[std::size_t(k)][std::size_t(v)] = 1;
  }

  SolverOptions ropts;
  ropts.tol = im.tol;
  ropts.max_sweeps = opts.max_sweeps;
  for (int k = 0; k < im.M; ++k)
    im.refs.push_back(compute_exit_reference(g, cm, k, ropts));

  out_.self_cost.assign(std::size_t(im.M), ScalarField(g, Centering::Vertex));
  out_.self_grad.assign(std::size_t(im.M), VectorField(g, Centering::Vertex));

  if (im.global) {
    im.global_phi.resize(std::size_t(im.M));
    im.global_fields.assign(std::size_t(im.M),
                            ScalarField(g, Centering::Vertex));
    im.cost_scratch.assign(std::size_t(g.vcount()), 0.0);
    return;
  }

  // Zero-radius vision navigates on the references alone; no observer
  // machinery is needed.
  if (im.vision.own_point_only()) return;

  // Observer lattice.
  for (int i = 0; i < g.vnx; i += im.opt.stride) im.lat_i.push_back(i);
  if (im.lat_i.back() != g.vnx - 1) im.lat_i.push_back(g.vnx - 1);
  if (g.dim == 2) {
    for (int j = 0; j < g.vny; j += im.opt.stride) im.lat_j.push_back(j);
    if (im.lat_j.back() != g.vny - 1) im.lat_j.push_back(g.vny - 1);
  } else {
    im.lat_j.push_back(0);
  }
  for (int oj : im.lat_j)
    for (int oi : im.lat_i) {
      int vid = im.g.vidx(oi, oj);
      im.obs_vid.push_back(vid);
      im.obs_ok.push_back(g.vert_active[vid]);
    }
  im.patches.resize(im.obs_vid.size());
  im.pairs.resize(im.obs_vid.size() * std::size_t(im.M));
  im.obs_cost.assign(std::size_t(im.M),
                     std::vector<double>(im.obs_vid.size(), kInf));
  im.obs_grad.assign(std::size_t(im.M),
                     std::vector<Vec2>(im.obs_vid.size(), Vec2{0, 0}));

  auto build_axis = [](const std::vector<int>& lat, int n,
                       std::vector<int>& a0, std::vector<int>& a1,
                       std::vector<double>& w) {
    a0.resize(std::size_t(n));
    a1.resize(std::size_t(n));
    w.resize(std::size_t(n));
    std::size_t seg = 0;
    for (int i = 0; i < n; ++i) {
      while (seg + 1 < lat.size() - 1 && lat[seg + 1] <= i) ++seg;
      int lo = lat[seg], hi = lat[std::min(seg + 1, lat.size() - 1)];
      a0[std::size_t(i)] = int(seg);
      a1[std::size_t(i)] = int(std::min(seg + 1, lat.size() - 1));
      w[std::size_t(i)] = hi > lo ? double(i - lo) / (hi - lo) : 0.0;
    }
  };
  build_axis(im.lat_i, g.vnx, im.ix0, im.ix1, im.wx);
  build_axis(im.lat_j, g.dim == 2 ? g.vny : 1, im.jy0, im.jy1, im.wy);

  im.cost_scratch.assign(std::size_t(g.vcount()), cm.hidden_cost());
}

LocalPotentialEngine::~LocalPotentialEngine() = default;

const ScalarField& LocalPotentialEngine::exit_reference(int k) const {
  return impl_->refs.at(std::size_t(k)).phi;
}

bool LocalPotentialEngine::global_vision() const { return impl_->global; }

const ScalarField& LocalPotentialEngine::global_potential(int k) const {
  if (!impl_->global)
    throw ConfigError("global potentials exist only under global vision");
  return impl_->global_fields.at(std::size_t(k));
}

const SelfFields& LocalPotentialEngine::compute(const ScalarField& rho_vert) {
  Impl& im = *impl_;
  const Grid& g = im.g;

  if (im.global) {
    // One shared solve per exit: every observer sees the whole domain.
    for (int v = 0; v < g.vcount(); ++v) {
      if (!g.vert_active[v]) {
        im.cost_scratch[std::size_t(v)] = im.cm.c_max;
        continue;
      }
      double w = im.has_W ? im.W.v[std::size_t(v)] : 0.0;
      im.cost_scratch[std::size_t(v)] =
          im.cm.cost(rho_vert.v[std::size_t(v)]) + w;
    }
    for (int k = 0; k < im.M; ++k) {
      auto& phi = im.global_phi[std::size_t(k)];
      if (phi.empty()) init_cold(g, g.exit_vertices[std::size_t(k)], phi);
      std::vector<std::uint8_t> update(g.vert_active.begin(),
                                       g.vert_active.end());
      for (int v : g.exit_vertices[std::size_t(k)]) update[std::size_t(v)] = 0;
      reset_update_set(update, phi);
      SolveStats st;
      if (im.opt.method == SolverMethod::FMM) {
        st = fmm_core(g, im.cost_scratch.data(), update.data(), phi);
      } else {
        st = fsm_core(g, im.cost_scratch.data(), update.data(), full_region(g),
                      phi, im.tol, im.opt.max_sweeps);
      }
      stats_.solves += 1;
      stats_.sweeps += st.sweeps;
      im.global_fields[std::size_t(k)].v = phi;
      out_.self_cost[std::size_t(k)].v = phi;
      auto& grad = out_.self_grad[std::size_t(k)];
      for (int j = 0; j < (g.dim == 2 ? g.vny : 1); ++j)
        for (int i = 0; i < g.vnx; ++i) {
          Vec2 gv = im.self_gradient(phi, i, j);
          im.clamp_wall_gradient(i, j, gv);
          grad.v[std::size_t(g.vidx(i, j))] = gv;
        }
    }
    return out_;
  }

  if (im.vision.own_point_only()) {
    // Seeing only your own point degenerates to navigation on the hidden
    // density potential. Raising one vertex value never lowers an eikonal
    // solution anywhere, so the masked solve collapses to a single local
    // update of that vertex against the pinned reference neighbors; the
    // descent direction is the reference one (its central stencil never
    // reads the center value).
    const int vny = g.dim == 2 ? g.vny : 1;
    for (int k = 0; k < im.M; ++k) {
      const auto& ref = im.refs[std::size_t(k)].phi.v;
      const auto& bc = im.exit_bc[std::size_t(k)];
      auto& cost = out_.self_cost[std::size_t(k)].v;
      auto& grad = out_.self_grad[std::size_t(k)].v;
      for (int j = 0; j < vny; ++j)
        for (int i = 0; i < g.vnx; ++i) {
          const int v = g.vidx(i, j);
          if (!g.vert_active[std::size_t(v)]) {
            cost[std::size_t(v)] = kInf;
            grad[std::size_t(v)] = Vec2{0, 0};
            continue;
          }
          Vec2 gv = im.self_gradient(ref, i, j);
          im.clamp_wall_gradient(i, j, gv);
          grad[std::size_t(v)] = gv;
          if (bc[std::size_t(v)]) {
            cost[std::size_t(v)] = ref[std::size_t(v)];
            continue;
          }
          double a = kInf, b = kInf;
          if (i > 0 && g.vert_active[std::size_t(v - 1)]) a = ref[std::size_t(v - 1)];
          if (i + 1 < g.vnx && g.vert_active[std::size_t(v + 1)])
            a = std::min(a, ref[std::size_t(v + 1)]);
          if (g.dim == 2) {
            if (j > 0 && g.vert_active[std::size_t(v - g.vnx)])
              b = ref[std::size_t(v - g.vnx)];
            if (j + 1 < g.vny && g.vert_active[std::size_t(v + g.vnx)])
              b = std::min(b, ref[std::size_t(v + g.vnx)]);
          }
          double w = im.has_W ? im.W.v[std::size_t(v)] : 0.0;
          double c = im.cm.cost(rho_vert.v[std::size_t(v)]) + w;
          cost[std::size_t(v)] = godunov_update(a, b, g.hx, g.hy, c, g.dim);
        }
    }
    return out_;
  }

  for (int o = 0; o < im.nobs(); ++o) {
    if (!im.obs_ok[std::size_t(o)]) continue;
    int ovid = im.obs_vid[std::size_t(o)];
    int oi = ovid % g.vnx, oj = ovid / g.vnx;
    Vec2 x = g.vpos(oi, oj);

    if (!im.patches[std::size_t(o)]) {
      auto patch = std::make_unique<VisionPatch>();
      patch->bits = vision_mask(g, x, im.vision);
      for (int j = 0; j < (g.dim == 2 ? g.vny : 1); ++j)
        for (int i = 0; i < g.vnx; ++i)
          if (patch->bits[std::size_t(g.vidx(i, j))]) patch->box.grow(i, j);
      im.patches[std::size_t(o)] = std::move(patch);
    }
    const VisionPatch& patch = *im.patches[std::size_t(o)];

    // Cost deviates from the hidden constant only inside the vision set.
    for (int j = patch.box.j0; j <= patch.box.j1; ++j)
      for (int i = patch.box.i0; i <= patch.box.i1; ++i) {
        int v = g.vidx(i, j);
        if (!patch.bits[std::size_t(v)] || !g.vert_active[v]) continue;
        double w = im.has_W ? im.W.v[std::size_t(v)] : 0.0;
        im.cost_scratch[std::size_t(v)] =
            im.cm.cost(rho_vert.v[std::size_t(v)]) + w;
      }

    for (int k = 0; k < im.M; ++k) {
      auto& pc = im.pairs[std::size_t(o) * im.M + std::size_t(k)];
      const auto& ref = im.refs[std::size_t(k)];
      if (!pc.ready) {
        if (reduction_ == ReductionMode::Vsharp) {
          std::vector<std::uint8_t> seeds(std::size_t(g.vcount()), 0);
          for (int v = 0; v < g.vcount(); ++v)
            if (patch.bits[std::size_t(v)] && g.vert_active[v] &&
                !im.exit_bc[std::size_t(k)][std::size_t(v)])
              seeds[std::size_t(v)] = 1;
          pc.update = dependency_closure(g, ref.phi, seeds);
        } else if (reduction_ == ReductionMode::MH) {
          pc.update = compute_MH(ref.phi, patch.bits).inside;
        } else {
          pc.update.assign(g.vert_active.begin(), g.vert_active.end());
        }
        for (int v : g.exit_vertices[std::size_t(k)])
          pc.update[std::size_t(v)] = 0;
        for (int j = 0; j < (g.dim == 2 ? g.vny : 1); ++j)
          for (int i = 0; i < g.vnx; ++i)
            if (pc.update[std::size_t(g.vidx(i, j))]) pc.box.grow(i, j);
        pc.phi = ref.phi.v;  // complement holds reference values for good
        pc.ready = true;
        for (auto b : pc.update) stats_.closure_vertices += b;
      }
      reset_update_set(pc.update, pc.phi);
      SolveStats st;
      if (im.opt.method == SolverMethod::FMM) {
        st = fmm_core(g, im.cost_scratch.data(), pc.update.data(), pc.phi);
      } else {
        st = fsm_core(g, im.cost_scratch.data(), pc.update.data(), pc.box,
                      pc.phi, im.tol, im.opt.max_sweeps);
      }
      stats_.solves += 1;
      stats_.sweeps += st.sweeps;
      im.obs_cost[std::size_t(k)][std::size_t(o)] = pc.phi[std::size_t(ovid)];
      Vec2 gv = im.self_gradient(pc.phi, oi, oj);
      im.clamp_wall_gradient(oi, oj, gv);
      im.obs_grad[std::size_t(k)][std::size_t(o)] = gv;
    }

    // Restore the hidden constant over the patch.
    for (int j = patch.box.j0; j <= patch.box.j1; ++j)
      for (int i = patch.box.i0; i <= patch.box.i1; ++i) {
        int v = g.vidx(i, j);
        if (patch.bits[std::size_t(v)])
          im.cost_scratch[std::size_t(v)] = im.cm.hidden_cost();
      }
  }

  // Interpolate observer data to every vertex.
  const int lnx = int(im.lat_i.size());
  for (int k = 0; k < im.M; ++k) {
    auto& sc = out_.self_cost[std::size_t(k)];
    auto& sg = out_.self_grad[std::size_t(k)];
    const auto& oc = im.obs_cost[std::size_t(k)];
    const auto& og = im.obs_grad[std::size_t(k)];
    for (int j = 0; j < (g.dim == 2 ? g.vny : 1); ++j)
      for (int i = 0; i < g.vnx; ++i) {
        int v = g.vidx(i, j);
        if (!g.vert_active[v]) {
          sc.v[std::size_t(v)] = kInf;
          sg.v[std::size_t(v)] = {0, 0};
          continue;
        }
        int corners[4] = {
            im.jy0[std::size_t(j)] * lnx + im.ix0[std::size_t(i)],
            im.jy0[std::size_t(j)] * lnx + im.ix1[std::size_t(i)],
            im.jy1[std::size_t(j)] * lnx + im.ix0[std::size_t(i)],
            im.jy1[std::size_t(j)] * lnx + im.ix1[std::size_t(i)]};
        double cw[4] = {
            (1 - im.wx[std::size_t(i)]) * (1 - im.wy[std::size_t(j)]),
            im.wx[std::size_t(i)] * (1 - im.wy[std::size_t(j)]),
            (1 - im.wx[std::size_t(i)]) * im.wy[std::size_t(j)],
            im.wx[std::size_t(i)] * im.wy[std::size_t(j)]};
        double wsum = 0, val = 0;
        Vec2 gval{0, 0};
        for (int q = 0; q < 4; ++q) {
          int ob = corners[q];
          if (!im.obs_ok[std::size_t(ob)] || oc[std::size_t(ob)] == kInf)
            continue;
          wsum += cw[q];
          val += cw[q] * oc[std::size_t(ob)];
          gval += cw[q] * og[std::size_t(ob)];
        }
        if (wsum > 0) {
          sc.v[std::size_t(v)] = val / wsum;
          Vec2 gv = (1.0 / wsum) * gval;
          im.clamp_wall_gradient(i, j, gv);
          sg.v[std::size_t(v)] = gv;
        } else {
          sc.v[std::size_t(v)] = kInf;
          sg.v[std::size_t(v)] = {0, 0};
        }
      }
  }
  return out_;
}

}  // namespace pedflow
