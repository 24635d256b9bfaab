#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pedflow/experiments.hpp"
#include "pedflow/fields.hpp"

using namespace pedflow;

namespace {

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

bool mentions(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

Scenario tiny_corridor() {
  Scenario sc = preset("corridor1d");
  sc.nx = 60;
  sc.vision.L = kInf;
  return sc;
}

}  // namespace

TEST_CASE("evacuation time interpolates between samples") {
  std::vector<std::pair<double, double>> h{{0, 1}, {1, 0.5}, {2, 0.005}};
  // target 0.01 sits at fraction 0.49/0.495 of the last interval
  CHECK(evacuation_time(h, 0.99) ==
        doctest::Approx(1.0 + 0.49 / 0.495).epsilon(1e-12));

  CHECK(evacuation_time({{0, 1}, {1, 0.5}}, 0.99) == kNotReached);
  CHECK(evacuation_time({{0, 0}}, 0.99) == 0.0);
  CHECK(evacuation_time({{0, 1}, {1, 0.01}}, 0.99) == doctest::Approx(1.0));
  // a flat stretch that is already at the target reports its first sample
  CHECK(evacuation_time({{0, 1}, {1, 0.01}, {2, 0.01}}, 0.99) ==
        doctest::Approx(1.0));

  CHECK_THROWS_AS(evacuation_time({}), ConfigError);
  CHECK_THROWS_AS(evacuation_time({{0, 1}, {1, 1.2}}), ConfigError);
  CHECK_THROWS_AS(evacuation_time({{0, 1}, {-1, 0.5}}), ConfigError);
  CHECK_THROWS_AS(evacuation_time({{0, 1}}, 0.0), ConfigError);
}

TEST_CASE("the built-in crowd data matches its documented mass") {
  auto b1 = corridor_blocks_1d();
  CHECK(block_mass(1, b1) == doctest::Approx(0.355).epsilon(1e-12));

  Domain d;
  d.dim = 1;
  d.lo = {0, 0};
  d.hi = {1, 0};
  d.exits.push_back({{0, 0}, {0, 0}});
  d.walls_enabled = false;
  Grid g = build_grid(d, 500);
  ScalarField rho = block_density_cells(g, b1);
  auto cell = [&](double x) {
    int i = 0, j = 0;
    g.cell_of({x, 0.0}, i, j);
    return g.cidx(i, j);
  };
  CHECK(rho.v[cell(0.1)] == doctest::Approx(0.85));
  CHECK(rho.v[cell(0.45)] == doctest::Approx(0.0));
  CHECK(rho.v[cell(0.8)] == doctest::Approx(0.25));

  auto b2 = room_blocks_2d();
  CHECK(block_mass(2, b2) ==
        doctest::Approx(0.1 * 0.25 * 0.25 + 0.95 * 0.35 * 0.5).epsilon(1e-12));
}

TEST_CASE("presets parse, dump and reload unchanged") {
  for (const std::string& name : preset_names()) {
    CAPTURE(name);
    Scenario sc = preset(name);
    std::string once = dump_scenario(sc);
    Scenario back = parse_scenario(once, "roundtrip");
    CHECK(dump_scenario(back) == once);
  }
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("scenario files reject unknown keys with their path") {
  auto e1 = error_text([] {
    parse_scenario(R"({"preset":"corridor1d","grid":{"nx":100,"nz":3}})");
  });
  CHECK(mentions(e1, "$.grid.nz"));

  auto e2 = error_text(
      [] { parse_scenario(R"({"preset":"corridor1d","extra":1})"); });
  CHECK(mentions(e2, "$.extra"));

  auto e3 = error_text([] {
    parse_scenario(R"({"preset":"corridor1d","vision":{"L":"wide"}})");
  });
  CHECK(mentions(e3, "$.vision.L"));

  auto e4 = error_text([] {
    parse_scenario(
        R"({"domain":{"dim":1,"lo":[0,0],"hi":[1,0]},"grid":{"nx":10}})");
  });
  CHECK(mentions(e4, "$.domain.exits"));

  auto e5 = error_text([] {
    parse_scenario(
        R"({"preset":"corridor1d",
            "initial":[{"lo":[-0.5,0],"hi":[0.2,0],"value":0.5}]})");
  });
  CHECK(mentions(e5, "$.initial[0]"));

  auto e6 = error_text([] {
    parse_scenario(R"({"preset":"corridor1d","cost":{"law":"cubic"}})");
  });
  CHECK(mentions(e6, "$.cost.law"));
  CHECK(mentions(e6, "linear"));

  auto e7 = error_text([] { parse_scenario("{nonsense", "broken.json"); });
  CHECK(mentions(e7, "broken.json"));
}

TEST_CASE("json keys override preset fields") {
  Scenario sc = parse_scenario(R"({
    "preset": "corridor1d",
    "grid": {"nx": 64},
    "vision": {"L": "inf"},
    "flux": {"law": "linear"},
    "cost": {"rho_max": 2.0},
    "seed": 7
  })");
  CHECK(sc.nx == 64);
  CHECK(sc.vision.global());
  CHECK(sc.macro.law == FluxLaw::Lwr);
  CHECK(sc.micro.law == FluxLaw::Lwr);
  CHECK(sc.micro.seed == 7);
  CHECK(sc.cost.rho_max == 2.0);
  CHECK(sc.macro.rho_max == 2.0);
  CHECK(sc.micro.rho_max == 2.0);

  Scenario up = parse_scenario(R"({"preset":"corridor1d","paper_scale":true})");
  CHECK(up.nx == 10000);
  CHECK(up.macro.dt_cap == doctest::Approx(5e-5));
  CHECK(up.paper_scale);

  Scenario trimmed = parse_scenario(
      R"({"preset":"corridor1d","paper_scale":true,"grid":{"nx":1234}})");
  CHECK(trimmed.nx == 1234);  // explicit keys win over the rescale
}

TEST_CASE("run_scenario rejects invalid programmatic scenarios") {
  Scenario sc = tiny_corridor();
  sc.blocks[0].value = 1.5;
  auto e1 = error_text([&] { run_scenario(sc); });
  CHECK(mentions(e1, "$.initial[0]"));

  Scenario sc2 = tiny_corridor();
  sc2.nx = 2;
  auto e2 = error_text([&] { run_scenario(sc2); });
  CHECK(mentions(e2, "$.grid.nx"));
}

TEST_CASE("a tiny corridor run reports consistent bookkeeping") {
  Scenario sc = tiny_corridor();
  ScenarioRun run = run_scenario(sc);
  REQUIRE(run.macro.has_value());
  CHECK_FALSE(run.micro.has_value());
  const RunReport& r = run.report;
  CHECK(r.dim == 1);
  CHECK(r.initial_mass == doctest::Approx(0.355).epsilon(1e-12));
  CHECK(r.final_mass <= r.initial_mass + 1e-12);
  CHECK(r.steps > 0);
  CHECK(r.t_end > 0);
  CHECK(r.wall_seconds > 0);
  REQUIRE(r.exit_shares.size() == 2);
  double drained = (r.initial_mass - r.final_mass) / r.initial_mass;
  CHECK(r.exit_shares[0] + r.exit_shares[1] ==
        doctest::Approx(drained).epsilon(1e-9));
  if (r.evac_time != kNotReached) CHECK(r.evac_time <= r.t_end + 1e-9);

  ScenarioRun again = run_scenario(sc);
  CHECK(again.report.evac_time == r.evac_time);
  CHECK(again.report.final_mass == r.final_mass);
  CHECK(again.report.steps == r.steps);
}

TEST_CASE("artifact files land in the output directory") {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("pedflow_artifacts_" +
                                   std::to_string(::getpid()));
  Scenario sc = tiny_corridor();
  sc.macro.t_max = 0.2;
  sc.macro.snapshot_times = {0.05};
  sc.outdir = dir.string();
  run_scenario(sc);
  CHECK(fs::exists(dir / "scenario.json"));
  CHECK(fs::exists(dir / "summary.txt"));
  CHECK(fs::exists(dir / "mass_history.csv"));
  CHECK(fs::exists(dir / "final.csv"));
  CHECK(fs::exists(dir / "snapshot_0.0500.csv"));

  // the dumped scenario reloads
  Scenario back = load_scenario((dir / "scenario.json").string());
  CHECK(back.nx == sc.nx);
  CHECK(back.macro.t_max == doctest::Approx(0.2));

  Scenario mc = preset("corridor1d");
  mc.model = ModelKind::Micro;
  mc.nx = 60;
  mc.vision.L = kInf;
  mc.micro.n_particles = 30;
  mc.micro.t_max = 0.1;
  mc.outdir = (dir / "micro").string();
  ScenarioRun mr = run_scenario(mc);
  REQUIRE(mr.micro.has_value());
  CHECK(fs::exists(dir / "micro" / "exit_curves.csv"));
  CHECK(fs::exists(dir / "micro" / "particles_final.csv"));
  CHECK(mr.report.final_mass ==
        doctest::Approx(mr.report.initial_mass *
                        (1.0 - mr.micro->history.back().exit_fraction)));
  fs::remove_all(dir);
}

TEST_CASE("vision sweep rows are isolated and reproducible") {
  Scenario base = preset("corridor1d");
  base.nx = 40;
  base.blocks = {{{0.0, 0.0}, {0.3, 0.0}, 0.3}};  // light crowd, quick drain
  base.macro.t_max = 3.0;
  base.micro.t_max = 3.0;

  const std::vector<double> Ls{0.0, 0.4, kInf, 0.4};
  SweepResult sweep = vision_sweep(base, Ls, 1);
  REQUIRE(sweep.rows.size() == 4);
  for (const SweepRow& row : sweep.rows) CHECK(row.ok);

  // duplicate radii give identical physics
  CHECK(sweep.rows[1].evac_time == sweep.rows[3].evac_time);
  CHECK(sweep.rows[1].evacuated == sweep.rows[3].evacuated);

  // rows match dedicated runs of the same scenario
  Scenario solo = base;
  solo.vision.L = 0.4;
  CHECK(run_scenario(solo).report.evac_time == sweep.rows[1].evac_time);
  solo.vision.L = 0.0;
  CHECK(run_scenario(solo).report.evac_time == sweep.rows[0].evac_time);

  CHECK(sweep.global_row == 2);
  CHECK_FALSE(sweep.report.empty());
  if (sweep.finite_beats_global) {
    REQUIRE(sweep.best_row >= 0);
    CHECK(sweep.rows[sweep.best_row].evac_time <
          sweep.rows[2].evac_time);
  }

  // thread count must not change the numbers
  SweepResult threaded = vision_sweep(base, Ls, 2);
  for (std::size_t i = 0; i < Ls.size(); ++i)
    CHECK(threaded.rows[i].evac_time == sweep.rows[i].evac_time);

  // a broken row fails alone
  SweepResult mixed = vision_sweep(base, {-1.0, kInf}, 1);
  CHECK_FALSE(mixed.rows[0].ok);
  CHECK(mentions(mixed.rows[0].error, "$.vision.L"));
  CHECK(mixed.rows[1].ok);
}

TEST_CASE("a coarse micro room scenario runs end to end") {
  Scenario sc = preset("corridor2d_micro");
  sc.nx = 40;
  sc.ny = 20;
  sc.solver.stride = 2;
  sc.micro.n_particles = 40;
  sc.micro.t_max = 0.2;
  ScenarioRun run = run_scenario(sc);
  REQUIRE(run.micro.has_value());
  const RunReport& r = run.report;
  CHECK(r.dim == 2);
  CHECK(r.initial_mass > 0);
  REQUIRE(r.exit_shares.size() == 2);
  CHECK(r.steps == 20);
  CHECK(r.turnarounds >= 0);
  CHECK(r.engine.solves > 0);
}
