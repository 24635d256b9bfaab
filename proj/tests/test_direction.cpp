#include <doctest.h>

#include <cmath>
#include <vector>

#include "pedflow/direction.hpp"
#include "pedflow/eikonal.hpp"

using namespace pedflow;

namespace {

Domain corridor_1d(bool both_ends = true) {
  Domain d;
  d.dim = 1;
  d.lo = {0, 0};
  d.hi = {1, 0};
  d.exits.push_back({{0, 0}, {0, 0}});
  if (both_ends) d.exits.push_back({{1, 0}, {1, 0}});
  return d;
}

Domain room_left_exit() {
  Domain d;
  d.dim = 2;
  d.lo = {0, 0};
  d.hi = {1, 0.5};
  d.exits.push_back({{0, 0}, {0, 0.5}});
  return d;
}

ScalarField constant_vertex_field(const Grid& g, double value) {
  return ScalarField(g, Centering::Vertex, value);
}

}  // namespace

TEST_CASE("speed laws vanish at jam density and match handbook values") {
  CHECK(flux_speed(FluxLaw::AsWritten, 0.5, 1.0) == doctest::Approx(0.25));
  CHECK(flux_speed(FluxLaw::Lwr, 0.5, 1.0) == doctest::Approx(0.5));
  CHECK(flux_speed(FluxLaw::AsWritten, 1.0, 1.0) == 0.0);
  CHECK(flux_speed(FluxLaw::Lwr, 1.0, 1.0) == 0.0);
  CHECK(flux_speed(FluxLaw::AsWritten, 0.0, 1.0) == 0.0);
  CHECK(flux_speed(FluxLaw::Lwr, 0.0, 1.0) == 1.0);
  // Out-of-range densities clamp instead of producing negative speeds.
  CHECK(flux_speed(FluxLaw::AsWritten, -0.1, 1.0) == 0.0);
  CHECK(flux_speed(FluxLaw::AsWritten, 1.2, 1.0) == 0.0);
  CHECK(flux_value(FluxLaw::AsWritten, 0.5, 1.0) == doctest::Approx(0.125));
  // Cubic flux: g' = 2s - 3s^2, extremes 1/3 at s=1/3 and -1 at s=1.
  CHECK(flux_wave_speed(FluxLaw::AsWritten, 1.0 / 3, 1.0) ==
        doctest::Approx(1.0 / 3));
  CHECK(flux_wave_speed(FluxLaw::AsWritten, 1.0, 1.0) == doctest::Approx(-1));
  CHECK(flux_wave_speed(FluxLaw::Lwr, 0.0, 1.0) == doctest::Approx(1));
}

TEST_CASE("smoothed projection branch structure") {
  ProjectionParams p;  // ell = 0.05, k_P = 25
  SUBCASE("above threshold: exact normalization") {
    Vec2 out = smoothed_projection({0.2, 0}, p);
    CHECK(out.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.y == 0.0);
  }
  SUBCASE("zero maps to zero") {
    Vec2 out = smoothed_projection({0, 0}, p);
    CHECK(out.x == 0.0);
    CHECK(out.y == 0.0);
  }
  SUBCASE("continuous junction at the threshold") {
    Vec2 out = smoothed_projection({p.ell, 0}, p);
    CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("interior branch matches the closed form") {
    double n = p.ell / 2;
    double expect =
        std::sin(3.141592653589793 * std::atan(p.k_P * n) /
                 (2 * std::atan(p.k_P * p.ell)));
    Vec2 out = smoothed_projection({0, n}, p);
    CHECK(out.norm() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(out.y > 0);
    CHECK(expect < 1.0);
  }
  SUBCASE("norm bounded by one, monotone, direction preserving") {
    Rng rng(41);
    for (int t = 0; t < 200; ++t) {
      Vec2 v{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      Vec2 out = smoothed_projection(v, p);
      CHECK(out.norm() <= 1.0 + 1e-12);
      // parallel with the same orientation
      CHECK(std::abs(out.x * v.y - out.y * v.x) < 1e-12);
      CHECK(out.dot(v) >= 0.0);
    }
    double prev = 0;
    for (double n : {0.001, 0.004, 0.01, 0.03, 0.05, 0.2, 1.0}) {
      double cur = smoothed_projection({n, 0}, p).norm();
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("exit selection follows the cost order with low-index ties") {
  Grid g = build_grid(corridor_1d(), 10);
  SUBCASE("two exits, second cheaper") {
    std::vector<ScalarField> costs{constant_vertex_field(g, 2.0),
                                   constant_vertex_field(g, 1.0)};
    auto choice = select_exits(g, costs);
    for (int v = 0; v < g.vcount(); ++v) {
      CHECK(choice.best[std::size_t(v)] == 1);
      CHECK(choice.runner[std::size_t(v)] == 0);
      CHECK(choice.best_cost[std::size_t(v)] == 1.0);
      CHECK(choice.runner_cost[std::size_t(v)] == 2.0);
    }
  }
  SUBCASE("exact tie goes to the lower index with zero gap") {
    std::vector<ScalarField> costs{constant_vertex_field(g, 1.5),
                                   constant_vertex_field(g, 1.5)};
    auto choice = select_exits(g, costs);
    CHECK(choice.best[0] == 0);
    CHECK(choice.runner[0] == 1);
    CHECK(choice.runner_cost[0] - choice.best_cost[0] == 0.0);
  }
  SUBCASE("three exits rank by value") {
    std::vector<ScalarField> costs{constant_vertex_field(g, 3.0),
                                   constant_vertex_field(g, 1.0),
                                   constant_vertex_field(g, 2.0)};
    auto choice = select_exits(g, costs);
    CHECK(choice.best[0] == 1);
    CHECK(choice.runner[0] == 2);
    CHECK(choice.runner_cost[0] == 2.0);
  }
  SUBCASE("single exit leaves an infinite-cost sentinel") {
    std::vector<ScalarField> costs{constant_vertex_field(g, 0.7)};
    auto choice = select_exits(g, costs);
    CHECK(choice.best[0] == 0);
    CHECK(choice.runner[0] == -1);
    CHECK(choice.runner_cost[0] == kInf);
  }
}

TEST_CASE("conviction in an empty two-exit corridor is the cost gap") {
  Grid g = build_grid(corridor_1d(), 100);
  CostModel cm;
  LocalPotentialEngine engine(g, cm, nullptr, VisionSpec{}, EngineOptions{});
  ScalarField rho(g, Centering::Vertex, 0.0);
  const SelfFields& f = engine.compute(rho);
  auto choice = select_exits(g, f.self_cost);
  ConvictionStats stats;
  VectorField u = conviction_field(g, choice, f.self_grad, 1.0, &stats);
  CHECK(stats.zero_gradient_hits == 0);
  for (int i = 0; i < g.vnx; ++i) {
    double x = g.vpos(i, 0).x;
    CHECK(std::abs(u.v[std::size_t(i)].norm() - std::abs(1 - 2 * x)) < 1e-4);
  }
  // Symmetry point: equal costs, zero conviction.
  CHECK(u.v[50].norm() == 0.0);
  // Ascent orientation: left of the middle the left exit wins and its
  // potential grows with x, so u points right while motion goes left.
  CHECK(u.v[25].x > 0);
  CHECK(u.v[75].x < 0);
}

TEST_CASE("single-exit conviction uses the configured magnitude") {
  Grid g = build_grid(corridor_1d(false), 50);
  CostModel cm;
  LocalPotentialEngine engine(g, cm, nullptr, VisionSpec{}, EngineOptions{});
  ScalarField rho(g, Centering::Vertex, 0.0);
  const SelfFields& f = engine.compute(rho);
  auto choice = select_exits(g, f.self_cost);
  VectorField u = conviction_field(g, choice, f.self_grad, 0.75);
  for (int i = 1; i < g.vnx - 1; ++i) {
    CHECK(u.v[std::size_t(i)].norm() == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(u.v[std::size_t(i)].x > 0);  // ascent away from the left exit
  }
}

TEST_CASE("zero gradient with a positive gap is counted and zeroed") {
  Grid g = build_grid(corridor_1d(), 10);
  std::vector<ScalarField> costs{constant_vertex_field(g, 1.0),
                                 constant_vertex_field(g, 2.0)};
  auto choice = select_exits(g, costs);
  std::vector<VectorField> grads{VectorField(g, Centering::Vertex),
                                 VectorField(g, Centering::Vertex)};
  ConvictionStats stats;
  VectorField u = conviction_field(g, choice, grads, 1.0, &stats);
  CHECK(stats.zero_gradient_hits == g.vcount());
  for (int v = 0; v < g.vcount(); ++v) CHECK(u.v[std::size_t(v)].norm() == 0.0);
}

TEST_CASE("consensus reduces to the own preference in simple cases") {
  Grid g = build_grid(corridor_1d(), 100);
  Kernel K = make_kernel(KernelKind::Indicator, 0.05, g);

  SUBCASE("constant preference cancels the quotient") {
    ScalarField rho(g, Centering::Vertex);
    Rng rng(6);
    for (auto& r : rho.v) r = rng.uniform(0.1, 0.9);
    VectorField u(g, Centering::Vertex, Vec2{0.8, -0.6});
    VectorField phi = consensus_field(rho, u, K);
    for (int v = 0; v < g.vcount(); ++v) {
      CHECK(phi.v[std::size_t(v)].x == doctest::Approx(0.8).epsilon(1e-10));
      CHECK(phi.v[std::size_t(v)].y == doctest::Approx(-0.6).epsilon(1e-10));
    }
  }
  SUBCASE("empty surroundings defer to the individual") {
    ScalarField rho(g, Centering::Vertex, 0.0);
    VectorField u(g, Centering::Vertex);
    for (int i = 0; i < g.vnx; ++i) u.v[std::size_t(i)] = {g.vpos(i, 0).x, 0};
    VectorField phi = consensus_field(rho, u, K);
    for (int i = 0; i < g.vnx; ++i)
      CHECK(phi.v[std::size_t(i)].x == u.v[std::size_t(i)].x);
  }
  SUBCASE("opposing equal crowds cancel at the midpoint") {
    ScalarField rho(g, Centering::Vertex, 0.0);
    VectorField u(g, Centering::Vertex);
    for (int i = 0; i < g.vnx; ++i) {
      double x = g.vpos(i, 0).x;
      if (x > 0.44 && x < 0.48) {
        rho.v[std::size_t(i)] = 0.5;
        u.v[std::size_t(i)] = {1, 0};
      } else if (x > 0.52 && x < 0.56) {
        rho.v[std::size_t(i)] = 0.5;
        u.v[std::size_t(i)] = {-1, 0};
      }
    }
    VectorField phi = consensus_field(rho, u, K);
    CHECK(std::abs(phi.v[50].x) < 1e-12);
  }
  SUBCASE("consensus scales linearly with conviction") {
    ScalarField rho(g, Centering::Vertex);
    VectorField u(g, Centering::Vertex);
    Rng rng(14);
    for (int i = 0; i < g.vnx; ++i) {
      rho.v[std::size_t(i)] = rng.uniform(0.0, 1.0);
      u.v[std::size_t(i)] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    }
    VectorField a = consensus_field(rho, u, K);
    for (auto& q : u.v) q = 2.5 * q;
    VectorField b = consensus_field(rho, u, K);
    for (int v = 0; v < g.vcount(); ++v) {
      CHECK(b.v[std::size_t(v)].x ==
            doctest::Approx(2.5 * a.v[std::size_t(v)].x).epsilon(1e-10));
      CHECK(b.v[std::size_t(v)].y ==
            doctest::Approx(2.5 * a.v[std::size_t(v)].y).epsilon(1e-10));
    }
  }
}

TEST_CASE("velocity assembly composes speed, projection and boundary rules") {
  Grid g = build_grid(corridor_1d(), 100);
  CostModel cm;
  LocalPotentialEngine engine(g, cm, nullptr, VisionSpec{}, EngineOptions{});

  SUBCASE("jam density freezes the crowd") {
    ScalarField rho_v(g, Centering::Vertex, 0.0);
    const SelfFields& f = engine.compute(rho_v);
    auto choice = select_exits(g, f.self_cost);
    VectorField u = conviction_field(g, choice, f.self_grad);
    Kernel K = make_kernel(KernelKind::Indicator, 0.05, g);
    VectorField phi = consensus_field(rho_v, u, K);
    ScalarField rho_c(g, Centering::Cell, 1.0);
    auto va = assemble_velocity(g, rho_c, phi, FluxLaw::AsWritten, 1.0,
                                ProjectionParams{});
    for (int c = 0; c < g.ccount(); ++c)
      CHECK(va.vel.v[std::size_t(c)].norm() == 0.0);
  }
  SUBCASE("motion descends toward the chosen exit at speed f") {
    ScalarField rho_v(g, Centering::Vertex, 0.0);
    const SelfFields& f = engine.compute(rho_v);
    auto choice = select_exits(g, f.self_cost);
    VectorField u = conviction_field(g, choice, f.self_grad);
    Kernel K = make_kernel(KernelKind::Indicator, 0.05, g);
    VectorField phi = consensus_field(rho_v, u, K);
    ScalarField rho_c(g, Centering::Cell, 0.5);
    auto va = assemble_velocity(g, rho_c, phi, FluxLaw::AsWritten, 1.0,
                                ProjectionParams{});
    double speed = flux_speed(FluxLaw::AsWritten, 0.5, 1.0);
    // Left half moves left, right half moves right, at full commitment
    // (|phi| far exceeds ell away from the center).
    CHECK(va.vel.v[10].x == doctest::Approx(-speed).epsilon(1e-9));
    CHECK(va.vel.v[89].x == doctest::Approx(speed).epsilon(1e-9));
    // Exit cells are forced to maximum outflow through the exit.
    CHECK(va.dir.v[0].x == doctest::Approx(-1.0));
    CHECK(va.vel.v[0].x == doctest::Approx(-speed));
    CHECK(va.dir.v[std::size_t(g.ccount() - 1)].x == doctest::Approx(1.0));
  }
  SUBCASE("undecided consensus slows below the free speed") {
    ScalarField rho_v(g, Centering::Vertex, 0.3);
    ScalarField rho_c(g, Centering::Cell, 0.3);
    VectorField phi(g, Centering::Vertex, Vec2{0.01, 0});  // below ell
    auto va = assemble_velocity(g, rho_c, phi, FluxLaw::AsWritten, 1.0,
                                ProjectionParams{});
    double speed = flux_speed(FluxLaw::AsWritten, 0.3, 1.0);
    int mid = g.ccount() / 2;
    CHECK(va.vel.v[std::size_t(mid)].norm() > 0.0);
    CHECK(va.vel.v[std::size_t(mid)].norm() < speed - 1e-6);
  }
}

TEST_CASE("wall faces strip outward direction components") {
  Grid g = build_grid(room_left_exit(), 40, 20);
  ScalarField rho_c(g, Centering::Cell, 0.4);
  // Consensus pushing down-left everywhere: the bottom wall removes the
  // downward part, the left exit keeps the leftward part.
  VectorField phi(g, Centering::Vertex, Vec2{0.5, 0.5});  // dir = -P = down-left
  auto va = assemble_velocity(g, rho_c, phi, FluxLaw::Lwr, 1.0,
                              ProjectionParams{});
  int bottom = g.cidx(20, 0);
  CHECK(va.dir.v[std::size_t(bottom)].y == 0.0);
  CHECK(va.dir.v[std::size_t(bottom)].x < 0.0);
  int interior = g.cidx(20, 10);
  CHECK(va.dir.v[std::size_t(interior)].y < 0.0);
  // Exit-face cells override to the outward normal regardless of consensus.
  int exit_cell = g.cidx(0, 10);
  CHECK(va.dir.v[std::size_t(exit_cell)].x == doctest::Approx(-1.0));
  CHECK(va.dir.v[std::size_t(exit_cell)].y == 0.0);
}

TEST_CASE("the full direction stack is antisymmetric for mirror scenarios") {
  Grid g = build_grid(corridor_1d(), 120);
  CostModel cm;
  LocalPotentialEngine engine(g, cm, nullptr,
                              VisionSpec{0.4, VisionShape::Disc},
                              EngineOptions{});
  ScalarField rho_v(g, Centering::Vertex);
  for (int i = 0; i < g.vnx; ++i) {
    double x = g.vpos(i, 0).x;
    rho_v.v[std::size_t(i)] = 0.4 * std::exp(-30 * sq(x - 0.5));  // even in x
  }
  const SelfFields& f = engine.compute(rho_v);
  auto choice = select_exits(g, f.self_cost);
  VectorField u = conviction_field(g, choice, f.self_grad);
  Kernel K = make_kernel(KernelKind::Indicator, 0.05, g);
  VectorField phi = consensus_field(rho_v, u, K);
  ScalarField rho_c = to_cells(rho_v);
  auto va = assemble_velocity(g, rho_c, phi, FluxLaw::AsWritten, 1.0,
                              ProjectionParams{});
  for (int c = 0; c < g.ccount(); ++c) {
    int m = g.ccount() - 1 - c;
    CHECK(va.vel.v[std::size_t(c)].x ==
          doctest::Approx(-va.vel.v[std::size_t(m)].x).epsilon(1e-7));
  }
}

TEST_CASE("global vision yields a single exit-choice switch in a corridor") {
  Grid g = build_grid(corridor_1d(), 150);
  CostModel cm;
  LocalPotentialEngine engine(g, cm, nullptr, VisionSpec{}, EngineOptions{});
  Rng rng(55);
  ScalarField rho_v(g, Centering::Vertex);
  for (int i = 0; i < g.vnx; ++i)
    rho_v.v[std::size_t(i)] = rng.uniform(0.0, 0.8);
  const SelfFields& f = engine.compute(rho_v);
  auto choice = select_exits(g, f.self_cost);
  int switches = 0;
  for (int i = 1; i < g.vnx; ++i)
    if (choice.best[std::size_t(i)] != choice.best[std::size_t(i - 1)])
      ++switches;
  CHECK(switches == 1);
  CHECK(choice.best[0] == 0);
  CHECK(choice.best[std::size_t(g.vnx - 1)] == 1);
}
