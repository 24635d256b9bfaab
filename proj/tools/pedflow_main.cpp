#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pedflow/direction.hpp"
#include "pedflow/eikonal.hpp"
#include "pedflow/experiments.hpp"
#include "pedflow/macro.hpp"

namespace {

using namespace pedflow;

std::string preset_list() {
  std::string s;
  for (const auto& n : preset_names()) {
    if (!s.empty()) s += ", ";
    s += n;
  }
  return s;
}

/** A scenario argument is either a JSON file on disk or a preset name. */
Scenario load_named(const std::string& ref) {
  if (std::filesystem::exists(ref)) return load_scenario(ref);
  auto names = preset_names();
  if (std::find(names.begin(), names.end(), ref) != names.end())
    return preset(ref);
  throw ConfigError("'" + ref +
                    "' is neither a scenario file nor a preset (presets: " +
                    preset_list() + ")");
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t comma = csv.find(',', pos);
    std::string tok = csv.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    auto b = tok.find_first_not_of(" \t");
    auto e = tok.find_last_not_of(" \t");
    tok = b == std::string::npos ? "" : tok.substr(b, e - b + 1);
    if (tok.empty()) throw ConfigError("--values: empty entry in '" + csv + "'");
    if (tok == "inf" || tok == "Inf" || tok == "infinity") {
      out.push_back(kInf);
    } else {
      std::size_t used = 0;
      double d = std::stod(tok, &used);
      if (used != tok.size())
        throw ConfigError("--values: cannot parse '" + tok + "' as a number");
      out.push_back(d);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_sweep_csv(const std::string& path, const SweepResult& res) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "L,evac_time,evacuated,wall_seconds,error\n";
  for (const SweepRow& row : res.rows) {
    if (std::isinf(row.L))
      out << "inf";
    else
      out << row.L;
    out << ",";
    if (row.ok && row.evac_time != kNotReached) out << row.evac_time;
    out << "," << (row.evacuated ? 1 : 0) << "," << row.wall_seconds << ",";
    std::string err = row.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << "\n";
  }
}

// ---------------------------------------------------------------------------
// verify: self-contained oracle checks, independent of the library internals.

struct Checker {
  int failed = 0;

  void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %-24s %s\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.c_str());
    if (!ok) ++failed;
  }
};

/** Textbook two-step flux, written out directly from its definition. */
double force_oracle(FluxLaw law, double rho_max, double ul, double ur,
                    double theta, double dt, double h) {
  auto F = [&](double u) {
    double s = u / rho_max;
    double speed = law == FluxLaw::AsWritten ? s * (1.0 - s) : 1.0 - s;
    return theta * u * speed;
  };
  double lf = 0.5 * (F(ul) + F(ur)) - 0.5 * (h / dt) * (ur - ul);
  double mid = 0.5 * (ul + ur) - 0.5 * (dt / h) * (F(ur) - F(ul));
  return 0.5 * (lf + F(mid));
}

void check_force(Checker& ck) {
  std::mt19937_64 rng(20260816);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    FluxLaw law = n % 2 == 0 ? FluxLaw::AsWritten : FluxLaw::Lwr;
    double rho_max = n % 3 == 0 ? 2.5 : 1.0;
    double ul = unit(rng) * rho_max, ur = unit(rng) * rho_max;
    double theta = unit(rng) * 2.0 - 1.0;
    if (std::abs(theta) < 1e-3) theta = 0.5;
    double wave = std::abs(theta) * flux_wave_bound(law, rho_max);
    double lam = (0.05 + 0.9 * unit(rng)) / wave;
    double h = 0.01, dt = lam * h;
    double got = force_flux(law, rho_max, ul, ur, theta, dt, h);
    double want = force_oracle(law, rho_max, ul, ur, theta, dt, h);
    worst = std::max(worst, std::abs(got - want));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |flux - oracle| = %.3g over 100 tuples",
                worst);
  ck.report("force-flux", worst <= 1e-14, buf);
}

void check_eikonal(Checker& ck) {
  // Constant cost, full left-edge exit: the exact travel time is x.
  Domain dom;
  dom.dim = 2;
  dom.lo = {0.0, 0.0};
  dom.hi = {1.0, 1.0};
  dom.exits = {{{0.0, 0.0}, {0.0, 1.0}}};
  dom.walls_enabled = false;
  Grid g = build_grid(dom, 64, 64);
  EikonalProblem p;
  p.g = &g;
  p.cost = ScalarField(g, Centering::Vertex, 1.0);
  p.boundary = g.exit_vertices[0];
  auto sol = fsm_solve(p);
  double err = 0.0;
  for (int j = 0; j < g.vny; ++j)
    for (int i = 0; i < g.vnx; ++i)
      err = std::max(err,
                     std::abs(sol.phi.v[std::size_t(g.vidx(i, j))] -
                              g.vpos(i, j).x));
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |phi - x| = %.3g on constant cost", err);
  ck.report("eikonal-exact", err <= 1e-6, buf);

  // Random positive cost fields: both solvers and the graph overestimate.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> cdist(0.2, 3.0);
  double gap = 0.0, undershoot = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Grid rg = build_grid(dom, 32, 32);
    EikonalProblem rp;
    rp.g = &rg;
    rp.cost = ScalarField(rg, Centering::Vertex);
    for (auto& c : rp.cost.v) c = cdist(rng);
    rp.boundary = rg.exit_vertices[0];
    auto fsm = fsm_solve(rp);
    auto fmm = fmm_solve(rp);
    auto dij = dijkstra_oracle(rp);
    for (std::size_t v = 0; v < fsm.phi.v.size(); ++v) {
      gap = std::max(gap, std::abs(fsm.phi.v[v] - fmm.phi.v[v]));
      undershoot = std::max(undershoot, fsm.phi.v[v] - dij.phi.v[v]);
    }
  }
  std::snprintf(buf, sizeof buf,
                "fsm vs fmm %.3g, fsm above graph bound by %.3g", gap,
                undershoot);
  ck.report("eikonal-solvers", gap <= 1e-6 && undershoot <= 1e-9, buf);
}

void check_projection(Checker& ck) {
  ProjectionParams p;  // ell = 0.05, k_P = 25
  bool ok = true;
  std::string detail = "all branch values match";
  auto expect = [&](Vec2 v, Vec2 want, double tol, const char* what) {
    Vec2 got = smoothed_projection(v, p);
    if (std::abs(got.x - want.x) > tol || std::abs(got.y - want.y) > tol) {
      ok = false;
      detail = std::string("mismatch: ") + what;
    }
  };
  expect({0.3, -0.4}, {0.6, -0.8}, 1e-12, "unit direction above ell");
  expect({0.0, 0.0}, {0.0, 0.0}, 0.0, "zero stays zero");
  expect({p.ell, 0.0}, {1.0, 0.0}, 1e-9, "norm 1 at the threshold");
  double n = 0.02;
  double s = std::sin(M_PI * std::atan(p.k_P * n) /
                      (2.0 * std::atan(p.k_P * p.ell)));
  expect({n, 0.0}, {s, 0.0}, 1e-12, "decay branch formula");
  ck.report("projection", ok, detail);
}

void check_evacuation(Checker& ck) {
  std::vector<std::pair<double, double>> hist{{0.0, 1.0}, {1.0, 0.5},
                                              {2.0, 0.005}};
  double t = evacuation_time(hist, 0.99);
  double want = 1.0 + (0.5 - 0.01) / (0.5 - 0.005);
  char buf[96];
  std::snprintf(buf, sizeof buf, "t(99%%) = %.9f, expected %.9f", t, want);
  ck.report("evacuation-time", std::abs(t - want) <= 1e-9, buf);
}

void check_conservation(Checker& ck) {
  Scenario sc = preset("corridor2d_macro");
  sc.nx = 60;
  sc.ny = 30;
  sc.macro.t_max = 0.25;
  auto run = run_scenario(sc);
  double drained = 0.0;
  for (double s : run.report.exit_shares) drained += s;
  double remaining = run.report.final_mass / run.report.initial_mass;
  double defect = std::abs(1.0 - remaining - drained);
  char buf[96];
  std::snprintf(buf, sizeof buf, "relative mass defect %.3g over %ld steps",
                defect, run.report.steps);
  ck.report("mass-conservation", defect <= 1e-10, buf);
}

int run_verify() {
  Checker ck;
  check_force(ck);
  check_eikonal(ck);
  check_projection(ck);
  check_evacuation(ck);
  check_conservation(ck);
  if (ck.failed > 0) {
    std::printf("%d check(s) failed\n", ck.failed);
    return 1;
  }
  std::printf("all checks passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian crowd simulator: local-vision exit choice on "
               "macroscopic and particle models"};
  app.require_subcommand(1);

  std::string scenario_ref, solver, reduction, outdir, csv_path;
  std::string param = "L", values;
  int stride = 0, threads = 0;
  long long seed = -1;
  bool paper = false;

  auto* run_cmd = app.add_subcommand("run", "Run one scenario to completion");
  run_cmd->add_option("scenario", scenario_ref,
                      "Scenario JSON file or preset name")
      ->required();
  run_cmd->add_option("--solver", solver, "Eikonal solver: fsm or fmm")
      ->check(CLI::IsMember({"fsm", "fmm"}));
  run_cmd
      ->add_option("--reduction", reduction,
                   "Solve-region reduction: none, mh or vsharp")
      ->check(CLI::IsMember({"none", "mh", "vsharp"}));
  run_cmd->add_option("--stride", stride, "Observer lattice spacing (vertices)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--outdir", outdir, "Directory for CSV/VTK artifacts");
  run_cmd->add_option("--seed", seed, "Particle sampling seed (micro model)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_flag("--paper-scale", paper,
                    "Publication resolution (orders of magnitude slower)");

  auto* sweep_cmd =
      app.add_subcommand("sweep", "Rerun a scenario over vision diameters");
  sweep_cmd->add_option("scenario", scenario_ref,
                        "Scenario JSON file or preset name")
      ->required();
  sweep_cmd->add_option("--param", param, "Swept parameter (only L)");
  sweep_cmd->add_option("--values", values,
                        "Comma-separated diameters, e.g. 0,0.5,1.5,inf")
      ->required();
  sweep_cmd->add_option("--threads", threads, "Concurrent runs (0 = auto)")
      ->check(CLI::NonNegativeNumber);
  sweep_cmd->add_option("--outdir", outdir,
                        "Directory for per-run artifacts and sweep.csv");
  sweep_cmd->add_option("--csv", csv_path, "Write the result table here");

  std::string preset_name;
  auto* dump_cmd =
      app.add_subcommand("dump-preset", "Print a preset as scenario JSON");
  dump_cmd->add_option("name", preset_name, "One of: " + preset_list())
      ->required();

  auto* verify_cmd = app.add_subcommand(
      "verify", "Run the built-in oracle checks and report pass/fail");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      Scenario sc = load_named(scenario_ref);
      if (paper) {
        for (const auto& line : apply_paper_scale(sc))
          std::cerr << "paper-scale: " << line << "\n";
      }
      if (run_cmd->count("--solver"))
        sc.solver.method = solver == "fmm" ? SolverMethod::FMM
                                           : SolverMethod::FSM;
      if (run_cmd->count("--reduction"))
        sc.solver.reduction = reduction == "none" ? ReductionMode::None
                              : reduction == "mh" ? ReductionMode::MH
                                                  : ReductionMode::Vsharp;
      if (run_cmd->count("--stride")) sc.solver.stride = stride;
      if (run_cmd->count("--seed")) sc.micro.seed = std::uint64_t(seed);
      if (run_cmd->count("--outdir")) sc.outdir = outdir;
      auto run = run_scenario(sc);
      std::cout << run_summary(run);
      if (!sc.outdir.empty())
        std::cout << "artifacts: " << sc.outdir << "\n";
      return 0;
    }

    if (sweep_cmd->parsed()) {
      if (param != "L")
        throw ConfigError("only the vision diameter L is sweepable");
      Scenario base = load_named(scenario_ref);
      if (sweep_cmd->count("--outdir")) base.outdir = outdir;
      auto res = vision_sweep(base, parse_values(values), threads);
      std::cout << res.report;
      std::string table = csv_path;
      if (table.empty() && !base.outdir.empty()) {
        std::filesystem::create_directories(base.outdir);
        table = (std::filesystem::path(base.outdir) / "sweep.csv").string();
      }
      if (!table.empty()) {
        write_sweep_csv(table, res);
        std::cout << "table: " << table << "\n";
      }
      for (const SweepRow& row : res.rows)
        if (!row.ok) return 1;
      return 0;
    }

    if (dump_cmd->parsed()) {
      std::cout << dump_scenario(preset(preset_name));
      return 0;
    }

    if (verify_cmd->parsed()) return run_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
