#pragma once

#include <optional>
#include <vector>

#include "pedflow/core.hpp"

namespace pedflow {

/** Axis-aligned rectangle, used for obstacles and density blocks. */
struct Box {
  Vec2 lo, hi;
  bool contains(Vec2 p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
  }
};

/**
 * One exit: a boundary segment with outward normal. In 1D the segment
 * degenerates to a point (a == b). Indices are 0-based internally; file
 * outputs label exits 1-based.
 */
struct ExitSpec {
  Vec2 a, b;
  Vec2 normal{0, 0};  // filled from the boundary edge when left zero
};

/**
 * Continuous problem geometry. The boundary splits into exits and walls
 * (everything not covered by an exit segment). Obstacles are interior
 * axis-aligned holes; their boundary counts as wall.
 */
struct Domain {
  int dim = 2;
  Vec2 lo{0.0, 0.0};
  Vec2 hi{1.0, 1.0};
  std::vector<ExitSpec> exits;
  std::vector<Box> obstacles;
  double wall_width = 0.025;  // w of the wall layer profile
  bool walls_enabled = true;  // when false, chi_w == 0 (1D corridor runs)

  double diameter() const {
    return dim == 2 ? (hi - lo).norm() : (hi.x - lo.x);
  }
};

enum class VisionShape { Disc, Box };

/**
 * Vision cone: radial set of diameter L around the observer.
 * L == +inf encodes global vision; L == 0 means only the observer's own
 * grid point is visible (the eikonal/no-information limit).
 */
struct VisionSpec {
  double L = kInf;
  VisionShape shape = VisionShape::Disc;

  bool global() const { return L == kInf; }
  bool own_point_only() const { return L == 0.0; }
};

/** Cell side order used throughout: 0=W, 1=E, 2=S, 3=N. */
enum Side : int { kWest = 0, kEast = 1, kSouth = 2, kNorth = 3 };

enum class FaceKind { Interior, Wall, Exit };

/** One boundary face of a cell (used for flux bookkeeping and absorption). */
struct BoundaryFace {
  int ci = 0, cj = 0;  // owning cell
  int side = 0;
  int exit = -1;  // exit index for FaceKind::Exit
  Vec2 mid;
  Vec2 normal;    // outward
  double length;  // face measure (1 in 1D)
};

/**
 * Uniform Cartesian discretization of a Domain. Vertices carry the eikonal
 * unknowns, cells carry densities. Read-only after construction.
 */
struct Grid {
  Domain dom;
  int dim = 2;
  int nx = 0, ny = 0;      // cells per axis (ny == 1 when dim == 1)
  int vnx = 0, vny = 0;    // vertices per axis (vny == 1 when dim == 1)
  double hx = 0, hy = 0;   // spacing (hy unused when dim == 1)

  std::vector<std::uint8_t> cell_active;  // false inside obstacles
  std::vector<std::uint8_t> vert_active;  // false if no adjacent active cell
  // Exit membership per vertex: -1 none, else smallest covering exit index.
  std::vector<int> vert_exit;
  std::vector<std::vector<BoundaryFace>> exit_faces;  // per exit
  std::vector<std::vector<int>> exit_vertices;        // per exit, sorted

  int ccount() const { return nx * ny; }
  int vcount() const { return vnx * vny; }
  int cidx(int i, int j) const { return j * nx + i; }
  int vidx(int i, int j) const { return j * vnx + i; }

  Vec2 vpos(int i, int j) const {
    return {dom.lo.x + i * hx, dim == 2 ? dom.lo.y + j * hy : 0.0};
  }
  Vec2 ccenter(int i, int j) const {
    return {dom.lo.x + (i + 0.5) * hx,
            dim == 2 ? dom.lo.y + (j + 0.5) * hy : 0.0};
  }
  double cell_volume() const { return dim == 2 ? hx * hy : hx; }
  double min_h() const { return dim == 2 ? std::min(hx, hy) : hx; }
  double diameter() const { return dom.diameter(); }

  /** Nearest vertex (clamped to the grid). */
  void nearest_vertex(Vec2 p, int& i, int& j) const;
  /** Cell containing p (clamped to the grid). */
  void cell_of(Vec2 p, int& i, int& j) const;

  /** Face classification for cell (i,j), given side. */
  FaceKind face_kind(int i, int j, int side, int* exit_out = nullptr) const;
};

/**
 * Builds the grid: tiles the rectangle, deactivates obstacle-covered cells,
 * classifies boundary faces and vertices against the exit segments.
 * Throws ConfigError for malformed domains (no exits, off-boundary or
 * overlapping exit segments, exits with no matching faces, resolution < 3).
 */
Grid build_grid(const Domain& dom, int cells_x, int cells_y = 1);

/**
 * Vision mask over vertices: true iff the vertex is active and within the
 * vision set of diameter L around x (disc: Euclidean; box: max-norm),
 * intersected with the domain. The vertex nearest to x is always true.
 */
std::vector<std::uint8_t> vision_mask(const Grid& g, Vec2 x,
                                      const VisionSpec& vision);

/**
 * Wall layer profile chi_w on vertices, in [0,1]: 1 on walls, linear decay
 * to 0 at perpendicular distance w, 0 past w and on exit edges. Near each
 * exit/wall junction the profile is ramped down inside a triangle with legs
 * of length w (value 1 at the wall-side vertex, 0 at the two exit-side
 * vertices). Obstacles contribute distance ramps from their boundary.
 * Throws ConfigError if w exceeds half the smallest domain extent.
 */
std::vector<double> layer_profile(const Grid& g);

/** First crossing of the segment p0->p1 with the outer boundary, if any. */
struct BoundaryHit {
  double t;      // fraction along p0->p1
  Vec2 point;
  bool is_exit;
  int exit = -1;
  Vec2 normal;   // outward at the hit
};
std::optional<BoundaryHit> boundary_crossing(const Domain& dom, Vec2 p0,
                                             Vec2 p1);

}  // namespace pedflow
