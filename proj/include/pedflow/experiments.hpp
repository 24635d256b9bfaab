#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pedflow/cost.hpp"
#include "pedflow/macro.hpp"
#include "pedflow/micro.hpp"

namespace pedflow {

enum class ModelKind { Macro, Micro };

/**
 * Complete description of one run: geometry, resolution, initial crowd,
 * physics constants and numerics. Serializable to and from JSON; presets
 * fill every field, file keys override.
 */
struct Scenario {
  std::string name = "custom";
  ModelKind model = ModelKind::Macro;
  Domain domain;
  int nx = 0, ny = 1;
  std::vector<DensityBlock> blocks;  // initial crowd (sampled for micro)
  VisionSpec vision;
  CostModel cost;
  bool walls_priced = false;  // add the wall-layer cost term W
  WallCostParams wall;
  MacroParams macro;
  MicroParams micro;
  EngineOptions solver;
  bool paper_scale = false;  // full publication resolution (slow)
  std::string outdir;        // empty: keep results in memory only
};

/** Built-in profiles: corridor1d, corridor2d_macro, corridor2d_micro. */
Scenario preset(const std::string& name);
std::vector<std::string> preset_names();

/** Switches a scenario to publication resolution; returns what changed. */
std::vector<std::string> apply_paper_scale(Scenario& sc);

/**
 * Strict JSON loading: a `preset` key seeds defaults, every other key
 * overrides one scenario field, unknown keys are rejected with their path.
 */
Scenario parse_scenario(const std::string& json_text,
                        const std::string& source = "<inline>");
Scenario load_scenario(const std::string& path);
std::string dump_scenario(const Scenario& sc);

/** The two-block corridor initial crowd (dense left, light right). */
std::vector<DensityBlock> corridor_blocks_1d();
/** The two-crowd room datum: light block lower left, dense block right. */
std::vector<DensityBlock> room_blocks_2d();

/** Sentinel for "the threshold was never attained". */
constexpr double kNotReached = kInf;

/**
 * First time the remaining mass fraction drops to 1-threshold, linearly
 * interpolated between samples of (time, mass). Throws ConfigError on an
 * empty or increasing history; returns kNotReached when never attained.
 */
double evacuation_time(const std::vector<std::pair<double, double>>& mass_at_t,
                       double threshold = 0.99);

struct RunReport {
  std::string scenario;
  ModelKind model = ModelKind::Macro;
  int dim = 1;
  double evac_time = kNotReached;  // time to 99% evacuation
  bool evacuated = false;          // stop reason was full evacuation
  double t_end = 0.0;
  long steps = 0;
  double initial_mass = 0.0;
  double final_mass = 0.0;
  std::vector<double> exit_shares;  // per exit, fraction of initial mass
  EngineStats engine;
  long zero_gradient_hits = 0;
  long waiting_peak_streak = 0;  // macro only
  int turnarounds = 0;           // micro only
  double wall_seconds = 0.0;
};

struct ScenarioRun {
  RunReport report;
  // Shared so the fields inside macro/micro keep a stable grid address when
  // the run object moves.
  std::shared_ptr<const Grid> grid;
  std::optional<MacroResult> macro;
  std::optional<MicroResult> micro;
};

/** Runs one scenario; writes CSV/VTK artifacts when outdir is set. */
ScenarioRun run_scenario(const Scenario& sc);

/** The plain-text report also written to summary.txt. */
std::string run_summary(const ScenarioRun& run);

struct SweepRow {
  double L = 0.0;
  bool ok = false;
  std::string error;
  double evac_time = kNotReached;
  bool evacuated = false;
  double wall_seconds = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;          // one per requested L, same order
  int best_row = -1;                   // fastest evacuated row
  int global_row = -1;                 // a row with effectively global vision
  bool finite_beats_global = false;
  std::string report;                  // human-readable table + verdict
};

/**
 * Independent runs of the base scenario for each vision diameter. A failing
 * run marks only its row. Runs execute concurrently (each owns its state);
 * results are deterministic regardless of thread count.
 */
SweepResult vision_sweep(const Scenario& base, const std::vector<double>& Ls,
                         int threads = 0);

}  // namespace pedflow
