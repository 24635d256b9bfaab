#include "pedflow/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pedflow/io.hpp"

namespace pedflow {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string fmt_length(double L) {
  if (std::isinf(L)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", L);
  return buf;
}

// ---------------------------------------------------------------------------
// strict JSON reading

[[noreturn]] void bad(const std::string& src, const std::string& path,
                      const std::string& msg) {
  throw ConfigError(src + ": " + path + ": " + msg);
}

struct Loader {
  std::string src;

  void keys(const json& j, const std::string& path,
            std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) bad(src, path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool known = false;
      for (const char* a : allowed)
        if (it.key() == a) {
          known = true;
          break;
        }
      if (!known) bad(src, path + "." + it.key(), "unknown key");
    }
  }

  double num(const json& j, const std::string& path) const {
    if (!j.is_number()) bad(src, path, "expected a number");
    return j.get<double>();
  }

  double num_or_inf(const json& j, const std::string& path) const {
    if (j.is_string()) {
      std::string s = j.get<std::string>();
      if (s == "inf" || s == "Inf" || s == "infinity") return kInf;
      bad(src, path, "expected a number or \"inf\"");
    }
    return num(j, path);
  }

  long long integer(const json& j, const std::string& path) const {
    if (!j.is_number_integer()) bad(src, path, "expected an integer");
    return j.get<long long>();
  }

  bool boolean(const json& j, const std::string& path) const {
    if (!j.is_boolean()) bad(src, path, "expected true or false");
    return j.get<bool>();
  }

  std::string str(const json& j, const std::string& path) const {
    if (!j.is_string()) bad(src, path, "expected a string");
    return j.get<std::string>();
  }

  Vec2 vec2(const json& j, const std::string& path) const {
    if (!j.is_array() || j.size() != 2) bad(src, path, "expected [x, y]");
    return {num(j[0], path + "[0]"), num(j[1], path + "[1]")};
  }

  template <class E>
  E pick(const json& j, const std::string& path,
         std::initializer_list<std::pair<const char*, E>> table) const {
    std::string s = str(j, path);
    std::string options;
    for (const auto& [name, value] : table) {
      if (s == name) return value;
      if (!options.empty()) options += ", ";
      options += name;
    }
    bad(src, path, "expected one of: " + options);
  }
};

// ---------------------------------------------------------------------------
// scenario validation shared by JSON loading and programmatic runs

void validate_scenario(const Scenario& sc, const std::string& src) {
  auto fail = [&](const std::string& path, const std::string& msg) {
    bad(src, path, msg);
  };
  const Domain& d = sc.domain;
  if (d.dim != 1 && d.dim != 2) fail("$.domain.dim", "must be 1 or 2");
  if (!(d.hi.x > d.lo.x) || (d.dim == 2 && !(d.hi.y > d.lo.y)))
    fail("$.domain", "hi must exceed lo");
  if (d.exits.empty()) fail("$.domain.exits", "at least one exit is required");
  if (sc.nx < 3) fail("$.grid.nx", "need at least 3 cells");
  if (d.dim == 2 && sc.ny < 3) fail("$.grid.ny", "need at least 3 cells");
  if (!(sc.vision.L >= 0)) fail("$.vision.L", "must be nonnegative");
  if (!(sc.cost.rho_max > 0)) fail("$.cost.rho_max", "must be positive");
  if (!(sc.cost.c_max > 0)) fail("$.cost.c_max", "must be positive");
  if (sc.cost.delta_rho < 0) fail("$.cost.delta_rho", "must be nonnegative");
  if (sc.cost.rho_H < 0 || sc.cost.rho_H > sc.cost.rho_max)
    fail("$.cost.rho_hidden", "must lie in [0, rho_max]");
  if (sc.walls_priced && !(sc.wall.eps > 0 && sc.wall.eps < sc.cost.rho_max))
    fail("$.wall_cost.eps", "must lie in (0, rho_max)");
  const double slack = 1e-12;
  for (std::size_t i = 0; i < sc.blocks.size(); ++i) {
    const DensityBlock& b = sc.blocks[i];
    const std::string path = "$.initial[" + std::to_string(i) + "]";
    if (b.value < 0 || b.value > sc.cost.rho_max)
      fail(path + ".value", "must lie in [0, rho_max]");
    if (b.lo.x > b.hi.x || (d.dim == 2 && b.lo.y > b.hi.y))
      fail(path, "lo must not exceed hi");
    bool inside = b.lo.x >= d.lo.x - slack && b.hi.x <= d.hi.x + slack;
    if (d.dim == 2)
      inside = inside && b.lo.y >= d.lo.y - slack && b.hi.y <= d.hi.y + slack;
    if (!inside) fail(path, "block must lie inside the domain");
  }
  if (!(sc.macro.dt_cap > 0)) fail("$.time.dt_cap", "must be positive");
  const double t_max =
      sc.model == ModelKind::Micro ? sc.micro.t_max : sc.macro.t_max;
  if (!(t_max > 0)) fail("$.time.t_max", "must be positive");
  if (!(sc.macro.cfl_safety > 0 && sc.macro.cfl_safety <= 1))
    fail("$.time.cfl_safety", "must lie in (0, 1]");
  if (sc.macro.stop_mass_fraction < 0 || sc.macro.stop_mass_fraction >= 1)
    fail("$.time.stop_mass_fraction", "must lie in [0, 1)");
  const int refresh = sc.model == ModelKind::Micro ? sc.micro.refresh_every
                                                   : sc.macro.refresh_every;
  if (refresh < 1) fail("$.time.refresh_every", "must be at least 1");
  const double radius = sc.model == ModelKind::Micro ? sc.micro.kernel_radius
                                                     : sc.macro.kernel_radius;
  if (!(radius > 0)) fail("$.kernel.radius", "must be positive");
  const ProjectionParams& proj =
      sc.model == ModelKind::Micro ? sc.micro.proj : sc.macro.proj;
  if (!(proj.ell > 0)) fail("$.projection.ell", "must be positive");
  if (!(proj.k_P > 0)) fail("$.projection.k", "must be positive");
  if (sc.micro.n_particles < 1) fail("$.micro.n", "must be at least 1");
  if (!(sc.micro.dt > 0)) fail("$.micro.dt", "must be positive");
  if (!(sc.micro.kde.sigma > 0)) fail("$.micro.sigma", "must be positive");
  if (!(sc.micro.kde.truncation > 0))
    fail("$.micro.truncation", "must be positive");
  if (sc.macro.waiting_steps < 1) fail("$.waiting.steps", "must be at least 1");
  if (sc.solver.stride < 1) fail("$.solver.stride", "must be at least 1");
  if (sc.solver.max_sweeps < 1)
    fail("$.solver.max_sweeps", "must be at least 1");
}

// Physics knobs shared by the two models are stored twice (MacroParams and
// MicroParams); the setters below keep them in lockstep so one JSON key
// drives both.
void set_flux_law(Scenario& sc, FluxLaw law) {
  sc.macro.law = law;
  sc.micro.law = law;
}
void set_rho_max(Scenario& sc, double rho_max) {
  sc.cost.rho_max = rho_max;
  sc.macro.rho_max = rho_max;
  sc.micro.rho_max = rho_max;
}
void set_kernel(Scenario& sc, KernelKind kind, double radius) {
  sc.macro.kernel_kind = kind;
  sc.micro.kernel_kind = kind;
  sc.macro.kernel_radius = radius;
  sc.micro.kernel_radius = radius;
}
void set_projection(Scenario& sc, const ProjectionParams& p) {
  sc.macro.proj = p;
  sc.micro.proj = p;
}
void set_consensus(Scenario& sc, double delta, double u_single) {
  sc.macro.consensus_delta = delta;
  sc.micro.consensus_delta = delta;
  sc.macro.u_single = u_single;
  sc.micro.u_single = u_single;
}
void set_t_max(Scenario& sc, double t) {
  sc.macro.t_max = t;
  sc.micro.t_max = t;
}
void set_refresh(Scenario& sc, int n) {
  sc.macro.refresh_every = n;
  sc.micro.refresh_every = n;
}
void set_snapshots(Scenario& sc, std::vector<double> times) {
  sc.macro.snapshot_times = times;
  sc.micro.snapshot_times = std::move(times);
}

// ---------------------------------------------------------------------------
// run summary text

std::string reason_word(bool evacuated) {
  return evacuated ? "evacuated" : "time-limit";
}

std::string make_summary(const ScenarioRun& run) {
  const RunReport& r = run.report;
  std::ostringstream s;
  char line[256];
  s << "scenario: " << r.scenario << "\n";
  s << "model: " << (r.model == ModelKind::Micro ? "micro" : "macro") << "\n";
  std::snprintf(line, sizeof line, "grid: %d x %d (h = %.6g)\n", run.grid->nx,
                run.grid->ny, run.grid->min_h());
  s << line;
  std::snprintf(line, sizeof line, "initial mass: %.9g\n", r.initial_mass);
  s << line;
  std::snprintf(line, sizeof line, "final mass: %.9g\n", r.final_mass);
  s << line;
  s << "stop: " << reason_word(r.evacuated) << "\n";
  if (r.evac_time == kNotReached)
    s << "evacuation time (99%): not reached\n";
  else {
    std::snprintf(line, sizeof line, "evacuation time (99%%): %.6f\n",
                  r.evac_time);
    s << line;
  }
  std::snprintf(line, sizeof line, "t_end: %.6f after %ld steps\n", r.t_end,
                r.steps);
  s << line;
  s << "exit shares:";
  for (std::size_t k = 0; k < r.exit_shares.size(); ++k) {
    std::snprintf(line, sizeof line, " exit%zu=%.4f", k + 1, r.exit_shares[k]);
    s << line;
  }
  s << "\n";
  std::snprintf(line, sizeof line,
                "potential solves: %lld (%lld sweeps, %lld closure vertices)\n",
                static_cast<long long>(r.engine.solves),
                static_cast<long long>(r.engine.sweeps),
                static_cast<long long>(r.engine.closure_vertices));
  s << line;
  s << "zero-gradient fallbacks: " << r.zero_gradient_hits << "\n";
  if (r.model == ModelKind::Macro)
    s << "longest waiting streak: " << r.waiting_peak_streak << " steps\n";
  else
    s << "turnarounds: " << r.turnarounds << "\n";
  std::snprintf(line, sizeof line, "wall seconds: %.2f\n", r.wall_seconds);
  s << line;
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << text;
}

std::string snap_stamp(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", t);
  return buf;
}

void write_artifacts(const Scenario& sc, const ScenarioRun& run) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(sc.outdir, ec);
  if (ec)
    throw ConfigError("cannot create output directory " + sc.outdir + ": " +
                      ec.message());
  auto at = [&](const std::string& name) { return sc.outdir + "/" + name; };
  write_text(at("scenario.json"), dump_scenario(sc));
  write_text(at("summary.txt"), make_summary(run));
  const Grid& g = *run.grid;
  if (run.macro) {
    const MacroResult& m = *run.macro;
    write_mass_history_csv(at("mass_history.csv"), m.history);
    for (const MacroSnapshot& snap : m.snapshots) {
      const std::string stamp = snap_stamp(snap.t);
      if (g.dim == 1)
        write_profile_csv(at("snapshot_" + stamp + ".csv"), g, snap.rho,
                          &snap.vel);
      else
        write_vtk_cells(at("snapshot_" + stamp + ".vtk"), g, snap.rho,
                        &snap.vel);
    }
    if (g.dim == 1)
      write_profile_csv(at("final.csv"), g, m.state.rho);
    else
      write_vtk_cells(at("final.vtk"), g, m.state.rho);
  }
  if (run.micro) {
    const MicroResult& m = *run.micro;
    write_exit_curves_csv(at("exit_curves.csv"), m.history);
    write_particles_csv(at("particles_final.csv"), m.ensemble);
    for (const MicroSnapshot& snap : m.snapshots)
      write_particles_csv(at("particles_" + snap_stamp(snap.t) + ".csv"),
                          snap.state);
  }
}

}  // namespace

std::string run_summary(const ScenarioRun& run) { return make_summary(run); }

// ---------------------------------------------------------------------------
// presets

std::vector<DensityBlock> corridor_blocks_1d() {
  return {{{0.0, 0.0}, {0.3, 0.0}, 0.85}, {{0.6, 0.0}, {1.0, 0.0}, 0.25}};
}

std::vector<DensityBlock> room_blocks_2d() {
  return {{{0.05, 0.0}, {0.3, 0.25}, 0.1}, {{0.6, 0.0}, {0.95, 0.5}, 0.95}};
}

std::vector<std::string> preset_names() {
  return {"corridor1d", "corridor2d_macro", "corridor2d_micro"};
}

Scenario preset(const std::string& name) {
  Scenario sc;
  sc.name = name;
  if (name == "corridor1d") {
    sc.model = ModelKind::Macro;
    sc.domain.dim = 1;
    sc.domain.lo = {0, 0};
    sc.domain.hi = {1, 0};
    sc.domain.exits.push_back({{0, 0}, {0, 0}, {0, 0}});
    sc.domain.exits.push_back({{1, 0}, {1, 0}, {0, 0}});
    sc.domain.walls_enabled = false;
    sc.nx = 500;
    sc.ny = 1;
    sc.blocks = corridor_blocks_1d();
    sc.vision = {0.75, VisionShape::Disc};
    sc.cost = {SpeedLaw::Linear, 1.0, 0.0, 1e4, 1e-7};
    sc.walls_priced = false;
    set_flux_law(sc, FluxLaw::AsWritten);
    sc.macro.dt_cap = 5e-3;
    sc.macro.cfl_safety = 0.45;
    set_t_max(sc, 1.5);
    sc.macro.stop_mass_fraction = 0.01;
    set_refresh(sc, 1);
    set_kernel(sc, KernelKind::Indicator, 0.05);
    set_projection(sc, {0.05, 25.0});
    set_consensus(sc, 1e-7, 1.0);
    sc.micro.n_particles = 500;
    sc.micro.dt = 1e-2;
    sc.micro.kde = {0.05, 4.0};
    sc.solver = {SolverMethod::FSM, -1.0, 100, 1, ReductionMode::Vsharp};
    return sc;
  }
  if (name == "corridor2d_macro" || name == "corridor2d_micro") {
    sc.domain.dim = 2;
    sc.domain.lo = {0, 0};
    sc.domain.hi = {1, 0.5};
    sc.domain.wall_width = 0.025;
    sc.domain.walls_enabled = true;
    sc.nx = 200;
    sc.ny = 100;
    sc.cost = {SpeedLaw::Linear, 1.0, 0.0, 1e3, 1e-7};
    sc.walls_priced = true;
    sc.wall = {0.025, 0.975};
    sc.macro.dt_cap = 5e-3;
    sc.macro.cfl_safety = 0.45;
    sc.macro.stop_mass_fraction = 0.01;
    set_refresh(sc, 1);
    set_kernel(sc, KernelKind::Bump, 0.05);
    set_projection(sc, {0.05, 25.0});
    set_consensus(sc, 1e-7, 1.0);
    sc.micro.n_particles = 500;
    sc.micro.dt = 1e-2;
    sc.micro.kde = {0.05, 4.0};
    sc.solver = {SolverMethod::FSM, -1.0, 100, 4, ReductionMode::Vsharp};
    if (name == "corridor2d_macro") {
      sc.model = ModelKind::Macro;
      // Narrow doors: lower left corner and upper right corner.
      sc.domain.exits.push_back({{0, 0}, {0, 0.1}, {0, 0}});
      sc.domain.exits.push_back({{1, 0.4}, {1, 0.5}, {0, 0}});
      sc.blocks = room_blocks_2d();
      sc.vision = {kInf, VisionShape::Disc};
      set_flux_law(sc, FluxLaw::AsWritten);
      set_t_max(sc, 8.0);
    } else {
      sc.model = ModelKind::Micro;
      // Open ends: the full left and right edges absorb.
      sc.domain.exits.push_back({{0, 0}, {0, 0.5}, {0, 0}});
      sc.domain.exits.push_back({{1, 0}, {1, 0.5}, {0, 0}});
      sc.blocks = {{{0.0, 0.0}, {0.3, 0.5}, 0.85},
                   {{0.6, 0.0}, {1.0, 0.5}, 0.25}};
      sc.vision = {0.25, VisionShape::Disc};
      // The particle push composes speed with the unit descent direction, so
      // the walking speed follows the cost model (1 - rho), not the quadratic
      // transport flux.
      set_flux_law(sc, FluxLaw::Lwr);
      set_t_max(sc, 1.5);
    }
    return sc;
  }
  throw ConfigError("unknown preset: " + name +
                    " (try corridor1d, corridor2d_macro, corridor2d_micro)");
}

std::vector<std::string> apply_paper_scale(Scenario& sc) {
  std::vector<std::string> changes;
  if (sc.domain.dim == 1) {
    if (sc.nx != 10000) {
      changes.push_back("grid: " + std::to_string(sc.nx) + " -> 10000 cells");
      sc.nx = 10000;
    }
    if (sc.macro.dt_cap != 5e-5) {
      changes.push_back("dt cap: -> 5e-5");
      sc.macro.dt_cap = 5e-5;
    }
  } else {
    if (sc.nx != 1000 || sc.ny != 500) {
      changes.push_back("grid: " + std::to_string(sc.nx) + "x" +
                        std::to_string(sc.ny) + " -> 1000x500 cells");
      sc.nx = 1000;
      sc.ny = 500;
    }
  }
  if (!sc.paper_scale) {
    sc.paper_scale = true;
    changes.push_back("paper_scale: on");
  }
  return changes;
}

// ---------------------------------------------------------------------------
// JSON in

Scenario parse_scenario(const std::string& json_text,
                        const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  Loader L{source};
  L.keys(j, "$",
         {"preset", "name", "model", "paper_scale", "seed", "outdir", "domain",
          "grid", "initial", "vision", "cost", "wall_cost", "flux", "kernel",
          "projection", "consensus", "time", "micro", "waiting", "solver",
          "snapshots"});

  Scenario sc;
  bool from_preset = false;
  if (auto it = j.find("preset"); it != j.end()) {
    sc = preset(L.str(*it, "$.preset"));
    from_preset = true;
  }
  if (auto it = j.find("name"); it != j.end()) sc.name = L.str(*it, "$.name");
  if (auto it = j.find("model"); it != j.end())
    sc.model = L.pick<ModelKind>(*it, "$.model",
                                 {{"macro", ModelKind::Macro},
                                  {"micro", ModelKind::Micro}});
  if (auto it = j.find("paper_scale"); it != j.end()) {
    // On top of a preset the flag rescales immediately so later keys still
    // override; standalone files are expected to carry explicit numbers.
    bool on = L.boolean(*it, "$.paper_scale");
    if (on && from_preset)
      apply_paper_scale(sc);
    else
      sc.paper_scale = on;
  }
  if (auto it = j.find("seed"); it != j.end()) {
    long long s = L.integer(*it, "$.seed");
    if (s < 0) bad(source, "$.seed", "must be nonnegative");
    sc.micro.seed = static_cast<std::uint64_t>(s);
  }
  if (auto it = j.find("outdir"); it != j.end())
    sc.outdir = L.str(*it, "$.outdir");

  if (auto it = j.find("domain"); it != j.end()) {
    const json& d = *it;
    L.keys(d, "$.domain",
           {"dim", "lo", "hi", "exits", "obstacles", "wall_width",
            "walls_enabled"});
    if (auto f = d.find("dim"); f != d.end()) {
      long long dim = L.integer(*f, "$.domain.dim");
      if (dim != 1 && dim != 2) bad(source, "$.domain.dim", "must be 1 or 2");
      sc.domain.dim = static_cast<int>(dim);
    }
    if (auto f = d.find("lo"); f != d.end())
      sc.domain.lo = L.vec2(*f, "$.domain.lo");
    if (auto f = d.find("hi"); f != d.end())
      sc.domain.hi = L.vec2(*f, "$.domain.hi");
    if (auto f = d.find("wall_width"); f != d.end())
      sc.domain.wall_width = L.num(*f, "$.domain.wall_width");
    if (auto f = d.find("walls_enabled"); f != d.end())
      sc.domain.walls_enabled = L.boolean(*f, "$.domain.walls_enabled");
    if (auto f = d.find("exits"); f != d.end()) {
      if (!f->is_array()) bad(source, "$.domain.exits", "expected an array");
      sc.domain.exits.clear();
      for (std::size_t i = 0; i < f->size(); ++i) {
        const std::string path = "$.domain.exits[" + std::to_string(i) + "]";
        const json& e = (*f)[i];
        L.keys(e, path, {"a", "b"});
        if (!e.contains("a") || !e.contains("b"))
          bad(source, path, "an exit needs both endpoints a and b");
        sc.domain.exits.push_back(
            {L.vec2(e["a"], path + ".a"), L.vec2(e["b"], path + ".b"), {0, 0}});
      }
    }
    if (auto f = d.find("obstacles"); f != d.end()) {
      if (!f->is_array())
        bad(source, "$.domain.obstacles", "expected an array");
      sc.domain.obstacles.clear();
      for (std::size_t i = 0; i < f->size(); ++i) {
        const std::string path =
            "$.domain.obstacles[" + std::to_string(i) + "]";
        const json& o = (*f)[i];
        L.keys(o, path, {"lo", "hi"});
        if (!o.contains("lo") || !o.contains("hi"))
          bad(source, path, "an obstacle needs both corners lo and hi");
        sc.domain.obstacles.push_back(
            {L.vec2(o["lo"], path + ".lo"), L.vec2(o["hi"], path + ".hi")});
      }
    }
  }

  if (auto it = j.find("grid"); it != j.end()) {
    L.keys(*it, "$.grid", {"nx", "ny"});
    if (auto f = it->find("nx"); f != it->end())
      sc.nx = static_cast<int>(L.integer(*f, "$.grid.nx"));
    if (auto f = it->find("ny"); f != it->end())
      sc.ny = static_cast<int>(L.integer(*f, "$.grid.ny"));
  }

  if (auto it = j.find("initial"); it != j.end()) {
    if (!it->is_array())
      bad(source, "$.initial", "expected an array of blocks");
    sc.blocks.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "$.initial[" + std::to_string(i) + "]";
      const json& b = (*it)[i];
      L.keys(b, path, {"lo", "hi", "value"});
      if (!b.contains("lo") || !b.contains("hi") || !b.contains("value"))
        bad(source, path, "a block needs lo, hi and value");
      sc.blocks.push_back({L.vec2(b["lo"], path + ".lo"),
                           L.vec2(b["hi"], path + ".hi"),
                           L.num(b["value"], path + ".value")});
    }
  }

  if (auto it = j.find("vision"); it != j.end()) {
    L.keys(*it, "$.vision", {"L", "shape"});
    if (auto f = it->find("L"); f != it->end())
      sc.vision.L = L.num_or_inf(*f, "$.vision.L");
    if (auto f = it->find("shape"); f != it->end())
      sc.vision.shape = L.pick<VisionShape>(*f, "$.vision.shape",
                                            {{"disc", VisionShape::Disc},
                                             {"box", VisionShape::Box}});
  }

  if (auto it = j.find("cost"); it != j.end()) {
    L.keys(*it, "$.cost",
           {"law", "rho_max", "rho_hidden", "c_max", "delta_rho"});
    if (auto f = it->find("law"); f != it->end())
      sc.cost.law = L.pick<SpeedLaw>(
          *f, "$.cost.law",
          {{"linear", SpeedLaw::Linear}, {"lwr", SpeedLaw::Lwr}});
    if (auto f = it->find("rho_max"); f != it->end())
      set_rho_max(sc, L.num(*f, "$.cost.rho_max"));
    if (auto f = it->find("rho_hidden"); f != it->end())
      sc.cost.rho_H = L.num(*f, "$.cost.rho_hidden");
    if (auto f = it->find("c_max"); f != it->end())
      sc.cost.c_max = L.num(*f, "$.cost.c_max");
    if (auto f = it->find("delta_rho"); f != it->end())
      sc.cost.delta_rho = L.num(*f, "$.cost.delta_rho");
  }

  if (auto it = j.find("wall_cost"); it != j.end()) {
    L.keys(*it, "$.wall_cost", {"enabled", "eps", "cap_rho"});
    if (auto f = it->find("enabled"); f != it->end())
      sc.walls_priced = L.boolean(*f, "$.wall_cost.enabled");
    if (auto f = it->find("eps"); f != it->end())
      sc.wall.eps = L.num(*f, "$.wall_cost.eps");
    if (auto f = it->find("cap_rho"); f != it->end())
      sc.wall.cap_rho = L.num(*f, "$.wall_cost.cap_rho");
  }

  if (auto it = j.find("flux"); it != j.end()) {
    L.keys(*it, "$.flux", {"law"});
    if (auto f = it->find("law"); f != it->end())
      set_flux_law(sc, L.pick<FluxLaw>(*f, "$.flux.law",
                                       {{"quadratic", FluxLaw::AsWritten},
                                        {"linear", FluxLaw::Lwr}}));
  }

  if (auto it = j.find("kernel"); it != j.end()) {
    L.keys(*it, "$.kernel", {"kind", "radius"});
    KernelKind kind = sc.model == ModelKind::Micro ? sc.micro.kernel_kind
                                                   : sc.macro.kernel_kind;
    double radius = sc.model == ModelKind::Micro ? sc.micro.kernel_radius
                                                 : sc.macro.kernel_radius;
    if (auto f = it->find("kind"); f != it->end())
      kind = L.pick<KernelKind>(*f, "$.kernel.kind",
                                {{"indicator", KernelKind::Indicator},
                                 {"bump", KernelKind::Bump},
                                 {"gaussian", KernelKind::Gaussian}});
    if (auto f = it->find("radius"); f != it->end())
      radius = L.num(*f, "$.kernel.radius");
    set_kernel(sc, kind, radius);
  }

  if (auto it = j.find("projection"); it != j.end()) {
    L.keys(*it, "$.projection", {"ell", "k"});
    ProjectionParams p =
        sc.model == ModelKind::Micro ? sc.micro.proj : sc.macro.proj;
    if (auto f = it->find("ell"); f != it->end())
      p.ell = L.num(*f, "$.projection.ell");
    if (auto f = it->find("k"); f != it->end())
      p.k_P = L.num(*f, "$.projection.k");
    set_projection(sc, p);
  }

  if (auto it = j.find("consensus"); it != j.end()) {
    L.keys(*it, "$.consensus", {"delta", "u_single"});
    double delta = sc.model == ModelKind::Micro ? sc.micro.consensus_delta
                                                : sc.macro.consensus_delta;
    double u1 =
        sc.model == ModelKind::Micro ? sc.micro.u_single : sc.macro.u_single;
    if (auto f = it->find("delta"); f != it->end())
      delta = L.num(*f, "$.consensus.delta");
    if (auto f = it->find("u_single"); f != it->end())
      u1 = L.num(*f, "$.consensus.u_single");
    set_consensus(sc, delta, u1);
  }

  if (auto it = j.find("time"); it != j.end()) {
    L.keys(*it, "$.time",
           {"dt_cap", "t_max", "cfl_safety", "stop_mass_fraction",
            "refresh_every"});
    if (auto f = it->find("dt_cap"); f != it->end())
      sc.macro.dt_cap = L.num(*f, "$.time.dt_cap");
    if (auto f = it->find("t_max"); f != it->end())
      set_t_max(sc, L.num(*f, "$.time.t_max"));
    if (auto f = it->find("cfl_safety"); f != it->end())
      sc.macro.cfl_safety = L.num(*f, "$.time.cfl_safety");
    if (auto f = it->find("stop_mass_fraction"); f != it->end())
      sc.macro.stop_mass_fraction = L.num(*f, "$.time.stop_mass_fraction");
    if (auto f = it->find("refresh_every"); f != it->end())
      set_refresh(sc,
                  static_cast<int>(L.integer(*f, "$.time.refresh_every")));
  }

  if (auto it = j.find("micro"); it != j.end()) {
    L.keys(*it, "$.micro", {"n", "dt", "sigma", "truncation",
                            "literal_velocity"});
    if (auto f = it->find("n"); f != it->end())
      sc.micro.n_particles = static_cast<int>(L.integer(*f, "$.micro.n"));
    if (auto f = it->find("dt"); f != it->end())
      sc.micro.dt = L.num(*f, "$.micro.dt");
    if (auto f = it->find("sigma"); f != it->end())
      sc.micro.kde.sigma = L.num(*f, "$.micro.sigma");
    if (auto f = it->find("truncation"); f != it->end())
      sc.micro.kde.truncation = L.num(*f, "$.micro.truncation");
    if (auto f = it->find("literal_velocity"); f != it->end())
      sc.micro.literal_velocity = L.boolean(*f, "$.micro.literal_velocity");
  }

  if (auto it = j.find("waiting"); it != j.end()) {
    L.keys(*it, "$.waiting", {"density", "commit", "steps"});
    if (auto f = it->find("density"); f != it->end())
      sc.macro.waiting_density = L.num(*f, "$.waiting.density");
    if (auto f = it->find("commit"); f != it->end())
      sc.macro.waiting_commit = L.num(*f, "$.waiting.commit");
    if (auto f = it->find("steps"); f != it->end())
      sc.macro.waiting_steps =
          static_cast<int>(L.integer(*f, "$.waiting.steps"));
  }

  if (auto it = j.find("solver"); it != j.end()) {
    L.keys(*it, "$.solver",
           {"method", "tol", "max_sweeps", "stride", "reduction"});
    if (auto f = it->find("method"); f != it->end())
      sc.solver.method = L.pick<SolverMethod>(
          *f, "$.solver.method",
          {{"fsm", SolverMethod::FSM}, {"fmm", SolverMethod::FMM}});
    if (auto f = it->find("tol"); f != it->end())
      sc.solver.tol = L.num(*f, "$.solver.tol");
    if (auto f = it->find("max_sweeps"); f != it->end())
      sc.solver.max_sweeps =
          static_cast<int>(L.integer(*f, "$.solver.max_sweeps"));
    if (auto f = it->find("stride"); f != it->end())
      sc.solver.stride = static_cast<int>(L.integer(*f, "$.solver.stride"));
    if (auto f = it->find("reduction"); f != it->end())
      sc.solver.reduction =
          L.pick<ReductionMode>(*f, "$.solver.reduction",
                                {{"none", ReductionMode::None},
                                 {"mh", ReductionMode::MH},
                                 {"vsharp", ReductionMode::Vsharp}});
  }

  if (auto it = j.find("snapshots"); it != j.end()) {
    if (!it->is_array()) bad(source, "$.snapshots", "expected an array");
    std::vector<double> times;
    for (std::size_t i = 0; i < it->size(); ++i)
      times.push_back(
          L.num((*it)[i], "$.snapshots[" + std::to_string(i) + "]"));
    set_snapshots(sc, std::move(times));
  }

  if (sc.domain.dim == 1) sc.ny = 1;
  validate_scenario(sc, source);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario file: " + path);
  std::ostringstream text;
  text << f.rdbuf();
  return parse_scenario(text.str(), path);
}

// ---------------------------------------------------------------------------
// JSON out

std::string dump_scenario(const Scenario& sc) {
  const bool mic = sc.model == ModelKind::Micro;
  ojson j;
  j["name"] = sc.name;
  j["model"] = mic ? "micro" : "macro";
  j["paper_scale"] = sc.paper_scale;
  j["seed"] = sc.micro.seed;
  j["outdir"] = sc.outdir;

  ojson dom;
  dom["dim"] = sc.domain.dim;
  dom["lo"] = ojson::array({sc.domain.lo.x, sc.domain.lo.y});
  dom["hi"] = ojson::array({sc.domain.hi.x, sc.domain.hi.y});
  dom["wall_width"] = sc.domain.wall_width;
  dom["walls_enabled"] = sc.domain.walls_enabled;
  dom["exits"] = ojson::array();
  for (const ExitSpec& e : sc.domain.exits) {
    ojson row;
    row["a"] = ojson::array({e.a.x, e.a.y});
    row["b"] = ojson::array({e.b.x, e.b.y});
    dom["exits"].push_back(std::move(row));
  }
  dom["obstacles"] = ojson::array();
  for (const Box& o : sc.domain.obstacles) {
    ojson row;
    row["lo"] = ojson::array({o.lo.x, o.lo.y});
    row["hi"] = ojson::array({o.hi.x, o.hi.y});
    dom["obstacles"].push_back(std::move(row));
  }
  j["domain"] = std::move(dom);

  j["grid"] = {{"nx", sc.nx}, {"ny", sc.ny}};

  j["initial"] = ojson::array();
  for (const DensityBlock& b : sc.blocks) {
    ojson row;
    row["lo"] = ojson::array({b.lo.x, b.lo.y});
    row["hi"] = ojson::array({b.hi.x, b.hi.y});
    row["value"] = b.value;
    j["initial"].push_back(std::move(row));
  }

  ojson vis;
  if (std::isinf(sc.vision.L))
    vis["L"] = "inf";
  else
    vis["L"] = sc.vision.L;
  vis["shape"] = sc.vision.shape == VisionShape::Disc ? "disc" : "box";
  j["vision"] = std::move(vis);

  j["cost"] = {{"law", sc.cost.law == SpeedLaw::Linear ? "linear" : "lwr"},
               {"rho_max", sc.cost.rho_max},
               {"rho_hidden", sc.cost.rho_H},
               {"c_max", sc.cost.c_max},
               {"delta_rho", sc.cost.delta_rho}};
  j["wall_cost"] = {{"enabled", sc.walls_priced},
                    {"eps", sc.wall.eps},
                    {"cap_rho", sc.wall.cap_rho}};
  const FluxLaw law = mic ? sc.micro.law : sc.macro.law;
  j["flux"] = {{"law", law == FluxLaw::AsWritten ? "quadratic" : "linear"}};
  const KernelKind kind = mic ? sc.micro.kernel_kind : sc.macro.kernel_kind;
  const char* kind_name = kind == KernelKind::Indicator ? "indicator"
                          : kind == KernelKind::Bump    ? "bump"
                                                        : "gaussian";
  j["kernel"] = {{"kind", kind_name},
                 {"radius",
                  mic ? sc.micro.kernel_radius : sc.macro.kernel_radius}};
  const ProjectionParams& proj = mic ? sc.micro.proj : sc.macro.proj;
  j["projection"] = {{"ell", proj.ell}, {"k", proj.k_P}};
  j["consensus"] = {
      {"delta", mic ? sc.micro.consensus_delta : sc.macro.consensus_delta},
      {"u_single", mic ? sc.micro.u_single : sc.macro.u_single}};
  j["time"] = {{"dt_cap", sc.macro.dt_cap},
               {"t_max", mic ? sc.micro.t_max : sc.macro.t_max},
               {"cfl_safety", sc.macro.cfl_safety},
               {"stop_mass_fraction", sc.macro.stop_mass_fraction},
               {"refresh_every",
                mic ? sc.micro.refresh_every : sc.macro.refresh_every}};
  j["micro"] = {{"n", sc.micro.n_particles},
                {"dt", sc.micro.dt},
                {"sigma", sc.micro.kde.sigma},
                {"truncation", sc.micro.kde.truncation},
                {"literal_velocity", sc.micro.literal_velocity}};
  j["waiting"] = {{"density", sc.macro.waiting_density},
                  {"commit", sc.macro.waiting_commit},
                  {"steps", sc.macro.waiting_steps}};
  j["solver"] = {
      {"method", sc.solver.method == SolverMethod::FSM ? "fsm" : "fmm"},
      {"tol", sc.solver.tol},
      {"max_sweeps", sc.solver.max_sweeps},
      {"stride", sc.solver.stride},
      {"reduction", sc.solver.reduction == ReductionMode::None   ? "none"
                    : sc.solver.reduction == ReductionMode::MH   ? "mh"
                                                                 : "vsharp"}};
  j["snapshots"] =
      mic ? sc.micro.snapshot_times : sc.macro.snapshot_times;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// evacuation time

double evacuation_time(const std::vector<std::pair<double, double>>& mass_at_t,
                       double threshold) {
  if (mass_at_t.empty())
    throw ConfigError("evacuation time needs at least one sample");
  if (!(threshold > 0) || threshold > 1)
    throw ConfigError("evacuation threshold must lie in (0, 1]");
  const double m0 = mass_at_t.front().second;
  if (m0 < 0) throw ConfigError("mass history starts negative");
  const double target = (1.0 - threshold) * m0;
  if (m0 <= target) return mass_at_t.front().first;
  double prev_t = mass_at_t.front().first;
  double prev_m = m0;
  const double rise_tol = 1e-9 * std::max(1.0, m0);
  for (std::size_t i = 1; i < mass_at_t.size(); ++i) {
    const auto [t, m] = mass_at_t[i];
    if (t < prev_t - 1e-12)
      throw ConfigError("mass history times must be nondecreasing");
    if (m > prev_m + rise_tol)
      throw ConfigError("mass history must be nonincreasing");
    if (m <= target) {
      if (prev_m - m <= 0) return t;
      const double a = (prev_m - target) / (prev_m - m);
      return prev_t + a * (t - prev_t);
    }
    prev_t = t;
    prev_m = std::min(prev_m, m);
  }
  return kNotReached;
}

// ---------------------------------------------------------------------------
// running

ScenarioRun run_scenario(const Scenario& sc) {
  validate_scenario(sc, "scenario \"" + sc.name + "\"");
  if (sc.paper_scale)
    std::fprintf(stderr,
                 "note: scenario %s runs at publication resolution; expect a "
                 "much longer wait than the desk default\n",
                 sc.name.c_str());
  ScenarioRun run;
  run.grid = std::make_shared<const Grid>(
      build_grid(sc.domain, sc.nx, sc.domain.dim == 2 ? sc.ny : 1));
  const Grid& g = *run.grid;
  std::optional<ScalarField> W;
  if (sc.walls_priced && g.dim == 2 && sc.domain.walls_enabled) {
    ScalarField chi(g, Centering::Vertex);
    chi.v = layer_profile(g);
    W = wall_cost(chi, sc.cost, sc.wall);
  }
  RunReport& rep = run.report;
  rep.scenario = sc.name;
  rep.model = sc.model;
  rep.dim = g.dim;
  const int n_exits = static_cast<int>(sc.domain.exits.size());
  const auto t0 = std::chrono::steady_clock::now();
  if (sc.model == ModelKind::Macro) {
    ScalarField rho0 = block_density_cells(g, sc.blocks);
    MacroResult r = run_macro(g, sc.cost, W ? &*W : nullptr, sc.vision,
                              sc.solver, sc.macro, rho0);
    rep.initial_mass = r.initial_mass;
    rep.final_mass = r.history.empty() ? r.initial_mass : r.history.back().mass;
    rep.steps = r.state.step;
    rep.t_end = r.state.t;
    rep.evacuated = r.reason == StopReason::Evacuated;
    rep.engine = r.engine;
    rep.zero_gradient_hits = r.zero_gradient_hits;
    rep.waiting_peak_streak = r.waiting_peak_streak;
    rep.exit_shares.assign(n_exits, 0.0);
    if (r.initial_mass > 0)
      for (int k = 0; k < n_exits; ++k)
        rep.exit_shares[k] = r.state.outflux[k] / r.initial_mass;
    std::vector<std::pair<double, double>> mass{{0.0, r.initial_mass}};
    for (const MassRow& row : r.history) mass.emplace_back(row.t, row.mass);
    rep.evac_time = r.initial_mass > 0 ? evacuation_time(mass) : 0.0;
    run.macro = std::move(r);
  } else {
    MicroResult r = run_micro(g, sc.cost, W ? &*W : nullptr, sc.vision,
                              sc.solver, sc.micro, sc.blocks);
    rep.initial_mass = r.ensemble.total_mass;
    const double exited =
        r.history.empty() ? 0.0 : r.history.back().exit_fraction;
    rep.final_mass = rep.initial_mass * (1.0 - exited);
    rep.steps = static_cast<long>(r.history.size());
    rep.t_end = r.history.empty() ? 0.0 : r.history.back().t;
    rep.evacuated = r.reason == StopReason::Evacuated;
    rep.engine = r.engine;
    rep.zero_gradient_hits = r.zero_gradient_hits;
    rep.turnarounds = r.turnaround_count;
    rep.exit_shares = r.history.empty() ? std::vector<double>(n_exits, 0.0)
                                        : r.history.back().by_exit;
    std::vector<std::pair<double, double>> alive{{0.0, 1.0}};
    for (const MicroRow& row : r.history)
      alive.emplace_back(row.t, 1.0 - row.exit_fraction);
    rep.evac_time = evacuation_time(alive);
    run.micro = std::move(r);
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (!sc.outdir.empty()) write_artifacts(sc, run);
  return run;
}

// ---------------------------------------------------------------------------
// vision sweep

SweepResult vision_sweep(const Scenario& base, const std::vector<double>& Ls,
                         int threads) {
  if (Ls.empty()) throw ConfigError("vision sweep needs at least one L value");
  SweepResult out;
  out.rows.resize(Ls.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= Ls.size()) return;
      SweepRow& row = out.rows[i];
      row.L = Ls[i];
      Scenario sc = base;
      sc.vision.L = Ls[i];
      sc.name = base.name + "_L" + fmt_length(Ls[i]);
      sc.outdir = base.outdir.empty()
                      ? std::string()
                      : base.outdir + "/L_" + fmt_length(Ls[i]);
      try {
        ScenarioRun r = run_scenario(sc);
        row.ok = true;
        row.evac_time = r.report.evac_time;
        row.evacuated = r.report.evacuated;
        row.wall_seconds = r.report.wall_seconds;
      } catch (const std::exception& ex) {
        row.ok = false;
        row.error = ex.what();
      }
    }
  };
  int n = threads > 0
              ? threads
              : static_cast<int>(std::thread::hardware_concurrency());
  n = std::clamp(n, 1, static_cast<int>(Ls.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  const double diam = base.domain.diameter();
  auto effectively_global = [&](double L) {
    return std::isinf(L) || 0.5 * L >= diam;
  };
  int best_finite = -1;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    const SweepRow& row = out.rows[i];
    if (!row.ok) continue;
    if (effectively_global(row.L)) {
      if (out.global_row < 0) out.global_row = static_cast<int>(i);
    } else if (row.evac_time < kNotReached &&
               (best_finite < 0 ||
                row.evac_time < out.rows[best_finite].evac_time)) {
      best_finite = static_cast<int>(i);
    }
    if (row.evac_time < kNotReached &&
        (out.best_row < 0 || row.evac_time < out.rows[out.best_row].evac_time))
      out.best_row = static_cast<int>(i);
  }
  out.finite_beats_global =
      out.global_row >= 0 && best_finite >= 0 &&
      out.rows[best_finite].evac_time <
          out.rows[out.global_row].evac_time - 1e-12;

  std::ostringstream rep;
  char line[160];
  rep << "vision sweep: " << base.name << ", " << Ls.size() << " radii\n";
  rep << "      L  status      t_evac(99%)   seconds\n";
  for (const SweepRow& row : out.rows) {
    if (!row.ok) {
      std::snprintf(line, sizeof line, "%7s  failed: %s\n",
                    fmt_length(row.L).c_str(), row.error.c_str());
    } else if (row.evac_time == kNotReached) {
      std::snprintf(line, sizeof line, "%7s  %-10s  %-11s  %8.2f\n",
                    fmt_length(row.L).c_str(), reason_word(row.evacuated).c_str(),
                    "not reached", row.wall_seconds);
    } else {
      std::snprintf(line, sizeof line, "%7s  %-10s  %-11.6f  %8.2f\n",
                    fmt_length(row.L).c_str(), reason_word(row.evacuated).c_str(),
                    row.evac_time, row.wall_seconds);
    }
    rep << line;
  }
  if (out.global_row < 0) {
    rep << "verdict: no usable global-vision reference in this sweep\n";
  } else if (best_finite < 0) {
    rep << "verdict: no finite radius reached the evacuation threshold\n";
  } else {
    const SweepRow& gl = out.rows[out.global_row];
    const SweepRow& fi = out.rows[best_finite];
    std::snprintf(line, sizeof line,
                  "global reference: L=%s  t_evac=%.6f\n",
                  fmt_length(gl.L).c_str(), gl.evac_time);
    rep << line;
    std::snprintf(line, sizeof line,
                  "fastest finite:   L=%s  t_evac=%.6f\n",
                  fmt_length(fi.L).c_str(), fi.evac_time);
    rep << line;
    rep << (out.finite_beats_global
                ? "verdict: a finite vision radius beats global vision here\n"
                : "verdict: global vision is at least as fast as every finite "
                  "radius tried\n");
  }
  out.report = rep.str();
  return out;
}

}  // namespace pedflow
