#include "pedflow/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pedflow {
namespace {

// Outer edges: 0 = left (x=lo.x), 1 = right (x=hi.x), 2 = bottom, 3 = top.
Vec2 edge_inward_normal(int e) {
  switch (e) {
    case 0: return {1, 0};
    case 1: return {-1, 0};
    case 2: return {0, 1};
    default: return {0, -1};
  }
}

double geom_eps(const Domain& d) { return 1e-9 * std::max(1.0, d.diameter()); }

/** Edge holding an axis-aligned boundary segment, or -1. */
int edge_of_segment(const Domain& d, Vec2 a, Vec2 b) {
  const double eps = geom_eps(d);
  if (d.dim == 1) {
    if (std::abs(a.x - b.x) > eps) return -1;
    if (std::abs(a.x - d.lo.x) <= eps) return 0;
    if (std::abs(a.x - d.hi.x) <= eps) return 1;
    return -1;
  }
  auto on = [&](double v, double t) { return std::abs(v - t) <= eps; };
  auto in_y = [&](Vec2 p) {
    return p.y >= d.lo.y - eps && p.y <= d.hi.y + eps;
  };
  auto in_x = [&](Vec2 p) {
    return p.x >= d.lo.x - eps && p.x <= d.hi.x + eps;
  };
  if (on(a.x, d.lo.x) && on(b.x, d.lo.x) && in_y(a) && in_y(b)) return 0;
  if (on(a.x, d.hi.x) && on(b.x, d.hi.x) && in_y(a) && in_y(b)) return 1;
  if (on(a.y, d.lo.y) && on(b.y, d.lo.y) && in_x(a) && in_x(b)) return 2;
  if (on(a.y, d.hi.y) && on(b.y, d.hi.y) && in_x(a) && in_x(b)) return 3;
  return -1;
}

/** Varying coordinate of a point on edge e (y on left/right, x on bottom/top). */
double edge_coord(int e, Vec2 p) { return e < 2 ? p.y : p.x; }

struct ExitOnEdge {
  int k;
  int edge;
  double a, b;  // sorted varying-coordinate range
};

std::vector<ExitOnEdge> exits_on_edges(const Domain& d) {
  std::vector<ExitOnEdge> out;
  for (std::size_t k = 0; k < d.exits.size(); ++k) {
    const ExitSpec& ex = d.exits[k];
    int e = edge_of_segment(d, ex.a, ex.b);
    if (e < 0)
      throw ConfigError("exit " + std::to_string(k + 1) +
                        " is not an axis-aligned boundary segment");
    double u = edge_coord(e, ex.a), v = edge_coord(e, ex.b);
    out.push_back({int(k), e, std::min(u, v), std::max(u, v)});
  }
  return out;
}

bool point_in_exit(const Domain& d, const ExitOnEdge& ee, int edge, Vec2 p) {
  if (edge != ee.edge) return false;
  const double eps = geom_eps(d);
  double u = edge_coord(edge, p);
  return u >= ee.a - eps && u <= ee.b + eps;
}

/** Euclidean distance from p to the axis-aligned box. */
double box_distance(const Box& b, Vec2 p) {
  double dx = std::max({b.lo.x - p.x, 0.0, p.x - b.hi.x});
  double dy = std::max({b.lo.y - p.y, 0.0, p.y - b.hi.y});
  return std::hypot(dx, dy);
}

struct RampTriangle {
  Vec2 A, B, C;  // chi = 1 at A, 0 at B and C
  double det;
  bool contains(Vec2 p, double* lamA) const {
    double l1 = ((B.y - C.y) * (p.x - C.x) + (C.x - B.x) * (p.y - C.y)) / det;
    double l2 = ((C.y - A.y) * (p.x - C.x) + (A.x - C.x) * (p.y - C.y)) / det;
    double l3 = 1.0 - l1 - l2;
    if (l1 < -1e-12 || l2 < -1e-12 || l3 < -1e-12) return false;
    *lamA = l1;
    return true;
  }
};

RampTriangle make_triangle(Vec2 E, Vec2 t_hat, Vec2 n_hat, double w) {
  RampTriangle t;
  t.A = E + w * t_hat;
  t.B = E;
  t.C = E + w * n_hat;
  t.det = (t.B.y - t.C.y) * (t.A.x - t.C.x) +
          (t.C.x - t.B.x) * (t.A.y - t.C.y);
  return t;
}

}  // namespace

void Grid::nearest_vertex(Vec2 p, int& i, int& j) const {
  i = int(std::lround((p.x - dom.lo.x) / hx));
  i = std::clamp(i, 0, vnx - 1);
  if (dim == 2) {
    j = int(std::lround((p.y - dom.lo.y) / hy));
    j = std::clamp(j, 0, vny - 1);
  } else {
    j = 0;
  }
}

void Grid::cell_of(Vec2 p, int& i, int& j) const {
  i = int(std::floor((p.x - dom.lo.x) / hx));
  i = std::clamp(i, 0, nx - 1);
  if (dim == 2) {
    j = int(std::floor((p.y - dom.lo.y) / hy));
    j = std::clamp(j, 0, ny - 1);
  } else {
    j = 0;
  }
}

FaceKind Grid::face_kind(int i, int j, int side, int* exit_out) const {
  int ni = i + (side == kEast) - (side == kWest);
  int nj = j + (side == kNorth) - (side == kSouth);
  bool outer = ni < 0 || ni >= nx || (dim == 2 && (nj < 0 || nj >= ny)) ||
               (dim == 1 && side >= kSouth);
  if (!outer) {
    if (cell_active[cidx(ni, nj)]) return FaceKind::Interior;
    return FaceKind::Wall;  // obstacle face
  }
  if (dim == 1 && side >= kSouth) return FaceKind::Wall;

  Vec2 c = ccenter(i, j);
  Vec2 mid = c;
  int edge;
  if (side == kWest) {
    mid.x = dom.lo.x;
    edge = 0;
  } else if (side == kEast) {
    mid.x = dom.hi.x;
    edge = 1;
  } else if (side == kSouth) {
    mid.y = dom.lo.y;
    edge = 2;
  } else {
    mid.y = dom.hi.y;
    edge = 3;
  }
  auto ees = exits_on_edges(dom);
  for (const auto& ee : ees) {
    if (point_in_exit(dom, ee, edge, mid)) {
      if (exit_out) *exit_out = ee.k;
      return FaceKind::Exit;
    }
  }
  return FaceKind::Wall;
}

Grid build_grid(const Domain& dom, int cells_x, int cells_y) {
  if (dom.exits.empty()) throw ConfigError("domain has no exits");
  if (dom.dim != 1 && dom.dim != 2)
    throw ConfigError("domain dimension must be 1 or 2");
  if (cells_x < 3 || (dom.dim == 2 && cells_y < 3))
    throw ConfigError("grid resolution must be at least 3 cells per axis");
  if (dom.hi.x <= dom.lo.x || (dom.dim == 2 && dom.hi.y <= dom.lo.y))
    throw ConfigError("domain rectangle is empty");

  Grid g;
  g.dom = dom;
  g.dim = dom.dim;
  g.nx = cells_x;
  g.ny = dom.dim == 2 ? cells_y : 1;
  g.vnx = g.nx + 1;
  g.vny = dom.dim == 2 ? g.ny + 1 : 1;
  g.hx = (dom.hi.x - dom.lo.x) / g.nx;
  g.hy = dom.dim == 2 ? (dom.hi.y - dom.lo.y) / g.ny : 0.0;

  const double eps = geom_eps(dom);
  auto ees = exits_on_edges(dom);

  // Exits must not overlap (shared endpoints are allowed).
  for (std::size_t p = 0; p < ees.size(); ++p)
    for (std::size_t q = p + 1; q < ees.size(); ++q)
      if (ees[p].edge == ees[q].edge &&
          std::min(ees[p].b, ees[q].b) - std::max(ees[p].a, ees[q].a) > eps)
        throw ConfigError("exit segments overlap");

  // Fill/validate outward normals.
  for (std::size_t k = 0; k < dom.exits.size(); ++k) {
    Vec2 want = -1.0 * edge_inward_normal(ees[k].edge);
    Vec2 have = g.dom.exits[k].normal;
    if (have.norm() == 0.0) {
      g.dom.exits[k].normal = want;
    } else if ((have - want).norm() > 1e-6) {
      throw ConfigError("exit " + std::to_string(k + 1) +
                        " normal does not match its boundary edge");
    }
  }

  // Obstacles: clip check, cell deactivation.
  g.cell_active.assign(std::size_t(g.ccount()), 1);
  for (const Box& ob : dom.obstacles) {
    if (dom.dim == 1)
      throw ConfigError("obstacles are not supported in 1D domains");
    if (ob.lo.x < dom.lo.x - eps || ob.hi.x > dom.hi.x + eps ||
        ob.lo.y < dom.lo.y - eps || ob.hi.y > dom.hi.y + eps ||
        ob.hi.x <= ob.lo.x || ob.hi.y <= ob.lo.y)
      throw ConfigError("obstacle box must lie inside the domain");
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (ob.contains(g.ccenter(i, j))) g.cell_active[g.cidx(i, j)] = 0;
  }

  // Vertex activity: any adjacent active cell.
  g.vert_active.assign(std::size_t(g.vcount()), 0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (!g.cell_active[g.cidx(i, j)]) continue;
      g.vert_active[g.vidx(i, j)] = 1;
      g.vert_active[g.vidx(i + 1, j)] = 1;
      if (g.dim == 2) {
        g.vert_active[g.vidx(i, j + 1)] = 1;
        g.vert_active[g.vidx(i + 1, j + 1)] = 1;
      }
    }

  // Vertex exit classification (vert_exit keeps the lowest covering index).
  g.vert_exit.assign(std::size_t(g.vcount()), -1);
  g.exit_vertices.assign(dom.exits.size(), {});
  for (int j = 0; j < g.vny; ++j)
    for (int i = 0; i < g.vnx; ++i) {
      Vec2 p = g.vpos(i, j);
      int edge = -1, edge2 = -1;
      if (std::abs(p.x - dom.lo.x) <= eps) edge = 0;
      else if (std::abs(p.x - dom.hi.x) <= eps) edge = 1;
      if (g.dim == 2 && std::abs(p.y - dom.lo.y) <= eps)
        (edge < 0 ? edge : edge2) = 2;
      else if (g.dim == 2 && std::abs(p.y - dom.hi.y) <= eps)
        (edge < 0 ? edge : edge2) = 3;
      if (edge < 0) continue;
      for (const auto& ee : ees)
        if (point_in_exit(dom, ee, edge, p) ||
            (edge2 >= 0 && point_in_exit(dom, ee, edge2, p))) {
          if (g.vert_exit[g.vidx(i, j)] < 0)
            g.vert_exit[g.vidx(i, j)] = ee.k;
          g.exit_vertices[std::size_t(ee.k)].push_back(g.vidx(i, j));
        }
    }

  // Exit faces along the outer boundary.
  g.exit_faces.assign(dom.exits.size(), {});
  auto push_face = [&](int i, int j, int side) {
    int k = -1;
    if (g.face_kind(i, j, side, &k) != FaceKind::Exit) return;
    if (!g.cell_active[g.cidx(i, j)])
      throw ConfigError("exit " + std::to_string(k + 1) +
                        " is blocked by an obstacle");
    BoundaryFace f;
    f.ci = i;
    f.cj = j;
    f.side = side;
    f.exit = k;
    Vec2 c = g.ccenter(i, j);
    f.mid = c;
    if (side == kWest) f.mid.x = dom.lo.x;
    if (side == kEast) f.mid.x = dom.hi.x;
    if (side == kSouth) f.mid.y = dom.lo.y;
    if (side == kNorth) f.mid.y = dom.hi.y;
    f.normal = side == kWest    ? Vec2{-1, 0}
               : side == kEast  ? Vec2{1, 0}
               : side == kSouth ? Vec2{0, -1}
                                : Vec2{0, 1};
    f.length = g.dim == 2 ? (side <= kEast ? g.hy : g.hx) : 1.0;
    g.exit_faces[std::size_t(k)].push_back(f);
  };
  for (int j = 0; j < g.ny; ++j) {
    push_face(0, j, kWest);
    push_face(g.nx - 1, j, kEast);
  }
  if (g.dim == 2)
    for (int i = 0; i < g.nx; ++i) {
      push_face(i, 0, kSouth);
      push_face(i, g.ny - 1, kNorth);
    }

  for (std::size_t k = 0; k < dom.exits.size(); ++k)
    if (g.exit_faces[k].empty())
      throw ConfigError("exit " + std::to_string(k + 1) +
                        " does not align with any boundary face");
  return g;
}

std::vector<std::uint8_t> vision_mask(const Grid& g, Vec2 x,
                                      const VisionSpec& vision) {
  std::vector<std::uint8_t> mask(std::size_t(g.vcount()), 0);
  if (vision.global()) {
    for (int v = 0; v < g.vcount(); ++v) mask[v] = g.vert_active[v];
  } else if (!vision.own_point_only()) {
    const double r = vision.L / 2.0;
    const double r2 = sq(r) * (1.0 + 1e-12);
    // Restrict the scan to the bounding box of the vision set.
    int i0, j0, i1, j1;
    g.nearest_vertex({x.x - r, x.y - r}, i0, j0);
    g.nearest_vertex({x.x + r, x.y + r}, i1, j1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        Vec2 p = g.vpos(i, j);
        bool in = vision.shape == VisionShape::Disc
                      ? (p - x).norm2() <= r2
                      : std::max(std::abs(p.x - x.x), std::abs(p.y - x.y)) <=
                            r * (1 + 1e-12);
        if (in && g.vert_active[g.vidx(i, j)]) mask[g.vidx(i, j)] = 1;
      }
  }
  int oi, oj;
  g.nearest_vertex(x, oi, oj);
  mask[g.vidx(oi, oj)] = 1;
  return mask;
}

std::vector<double> layer_profile(const Grid& g) {
  const Domain& d = g.dom;
  const double w = d.wall_width;
  if (w <= 0) throw ConfigError("wall layer width must be positive");
  double thickness =
      d.dim == 2 ? std::min(d.hi.x - d.lo.x, d.hi.y - d.lo.y) : d.hi.x - d.lo.x;
  if (w > thickness / 2)
    throw ConfigError("wall layer width exceeds half the domain thickness");

  std::vector<double> chi(std::size_t(g.vcount()), 0.0);
  const double eps = geom_eps(d);
  auto ees = exits_on_edges(d);

  if (d.dim == 1) {
    // Walls are the endpoints not covered by an exit.
    for (double wall_x : {d.lo.x, d.hi.x}) {
      bool is_exit = false;
      for (const auto& ee : ees) {
        int edge = std::abs(wall_x - d.lo.x) <= eps ? 0 : 1;
        if (ee.edge == edge) is_exit = true;
      }
      if (is_exit) continue;
      for (int i = 0; i < g.vnx; ++i) {
        double dist = std::abs(g.vpos(i, 0).x - wall_x);
        chi[i] = std::max(chi[i], std::max(0.0, 1.0 - dist / w));
      }
    }
    return chi;
  }

  // Wall subsegments per outer edge: edge extent minus exit ranges.
  struct WallSeg {
    int edge;
    double a, b;
  };
  std::vector<WallSeg> walls;
  for (int e = 0; e < 4; ++e) {
    double lo = e < 2 ? d.lo.y : d.lo.x;
    double hi = e < 2 ? d.hi.y : d.hi.x;
    std::vector<std::pair<double, double>> cuts;
    for (const auto& ee : ees)
      if (ee.edge == e) cuts.push_back({ee.a, ee.b});
    std::sort(cuts.begin(), cuts.end());
    double cur = lo;
    for (auto [a, b] : cuts) {
      if (a > cur + eps) walls.push_back({e, cur, a});
      cur = std::max(cur, b);
    }
    if (hi > cur + eps) walls.push_back({e, cur, hi});
  }

  // Exit/wall junction ramp triangles.
  std::vector<RampTriangle> tris;
  for (const auto& ee : ees) {
    for (int end = 0; end < 2; ++end) {
      double u = end == 0 ? ee.a : ee.b;
      Vec2 E = ee.edge < 2 ? Vec2{ee.edge == 0 ? d.lo.x : d.hi.x, u}
                           : Vec2{u, ee.edge == 2 ? d.lo.y : d.hi.y};
      double edge_lo = ee.edge < 2 ? d.lo.y : d.lo.x;
      double edge_hi = ee.edge < 2 ? d.hi.y : d.hi.x;
      bool at_lo_corner = std::abs(u - edge_lo) <= eps;
      bool at_hi_corner = std::abs(u - edge_hi) <= eps;
      int wall_edge;
      Vec2 t_hat;
      if (!at_lo_corner && !at_hi_corner) {
        // Wall continues along the same edge, away from the exit.
        wall_edge = ee.edge;
        Vec2 along = ee.edge < 2 ? Vec2{0, 1} : Vec2{1, 0};
        t_hat = end == 0 ? -along : along;
      } else {
        // Exit reaches a corner; the adjacent wall is the perpendicular edge.
        if (ee.edge < 2)
          wall_edge = at_lo_corner ? 2 : 3;
        else
          wall_edge = at_lo_corner ? 0 : 1;
        // Away from the shared corner, along the perpendicular edge.
        t_hat = ee.edge < 2
                    ? Vec2{(std::abs(E.x - d.lo.x) <= eps) ? 1.0 : -1.0, 0}
                    : Vec2{0, (std::abs(E.y - d.lo.y) <= eps) ? 1.0 : -1.0};
      }
      // Skip the triangle when the adjacent boundary point is another exit.
      Vec2 probe = E + (10 * eps) * t_hat;
      bool covered = false;
      for (const auto& other : ees)
        if (point_in_exit(d, other, wall_edge, probe)) covered = true;
      if (covered) continue;
      tris.push_back(make_triangle(E, t_hat, edge_inward_normal(wall_edge), w));
    }
  }

  for (int j = 0; j < g.vny; ++j)
    for (int i = 0; i < g.vnx; ++i) {
      int v = g.vidx(i, j);
      if (!g.vert_active[v]) continue;
      Vec2 p = g.vpos(i, j);
      double c = 0.0;
      for (const auto& ws : walls) {
        // Perpendicular ramp with the foot of the perpendicular on the
        // segment; end caps are handled by the junction triangles.
        double foot = ws.edge < 2 ? p.y : p.x;
        if (foot < ws.a - eps || foot > ws.b + eps) continue;
        double dist = ws.edge == 0   ? p.x - d.lo.x
                      : ws.edge == 1 ? d.hi.x - p.x
                      : ws.edge == 2 ? p.y - d.lo.y
                                     : d.hi.y - p.y;
        c = std::max(c, std::max(0.0, 1.0 - dist / w));
      }
      for (const Box& ob : d.obstacles)
        c = std::max(c, std::max(0.0, 1.0 - box_distance(ob, p) / w));
      for (const auto& t : tris) {
        double lamA;
        if (t.contains(p, &lamA)) c = std::min(c, std::max(0.0, lamA));
      }
      chi[v] = std::min(1.0, c);
    }
  return chi;
}

std::optional<BoundaryHit> boundary_crossing(const Domain& dom, Vec2 p0,
                                             Vec2 p1) {
  const double eps = geom_eps(dom);
  double best_t = kInf;
  int best_edge = -1;
  auto consider = [&](double plane, double a0, double a1, int edge) {
    double da = a1 - a0;
    if (da == 0.0) return;
    double t = (plane - a0) / da;
    if (t < -1e-15 || t > 1.0) return;
    // Only count crossings that leave the domain.
    if ((edge == 0 || edge == 2) ? da >= 0 : da <= 0) return;
    if (t < best_t) {
      best_t = t;
      best_edge = edge;
    }
  };
  consider(dom.lo.x, p0.x, p1.x, 0);
  consider(dom.hi.x, p0.x, p1.x, 1);
  if (dom.dim == 2) {
    consider(dom.lo.y, p0.y, p1.y, 2);
    consider(dom.hi.y, p0.y, p1.y, 3);
  }
  if (best_edge < 0) return std::nullopt;

  BoundaryHit hit;
  hit.t = std::max(0.0, best_t);
  hit.point = p0 + hit.t * (p1 - p0);
  hit.normal = -1.0 * edge_inward_normal(best_edge);
  hit.is_exit = false;
  hit.exit = -1;
  auto ees = exits_on_edges(dom);
  for (const auto& ee : ees)
    if (point_in_exit(dom, ee, best_edge, hit.point)) {
      hit.is_exit = true;
      hit.exit = ee.k;
      break;
    }
  (void)eps;
  return hit;
}

}  // namespace pedflow
