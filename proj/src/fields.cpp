#include "pedflow/fields.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pedflow {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double support_radius(KernelKind kind, double parameter) {
  switch (kind) {
    case KernelKind::Indicator: return parameter;
    case KernelKind::Bump: return parameter;
    case KernelKind::Gaussian: return 4.0 * parameter;
  }
  return parameter;
}

}  // namespace

double kernel_value(KernelKind kind, double parameter, int dim, Vec2 r) {
  double d2 = dim == 2 ? r.norm2() : sq(r.x);
  double p2 = sq(parameter);
  switch (kind) {
    case KernelKind::Indicator:
      return d2 <= p2 * (1 + 1e-12) ? 1.0 : 0.0;
    case KernelKind::Bump:
      return d2 < p2 ? std::exp(-p2 / (p2 - d2)) : 0.0;
    case KernelKind::Gaussian: {
      if (d2 > sq(4.0 * parameter)) return 0.0;
      double norm = dim == 2 ? 1.0 / (kTwoPi * p2)
                             : 1.0 / std::sqrt(kTwoPi * p2);
      return norm * std::exp(-d2 / (2.0 * p2));
    }
  }
  return 0.0;
}

Kernel make_kernel(KernelKind kind, double parameter, const Grid& g) {
  if (parameter <= 0) throw ConfigError("kernel parameter must be positive");
  Kernel k;
  k.kind = kind;
  k.parameter = parameter;
  k.dim = g.dim;
  k.hx = g.hx;
  k.hy = g.hy;
  double support = support_radius(kind, parameter);
  double min_h = g.dim == 2 ? std::min(g.hx, g.hy) : g.hx;
  if (support < min_h) {
    std::fprintf(stderr,
                 "warning: kernel support %.3g under grid spacing %.3g; "
                 "using a one-point stencil\n",
                 support, min_h);
    k.degenerate = true;
    k.rx = k.ry = 0;
    k.w = {std::max(kernel_value(kind, parameter, k.dim, {0, 0}), 1e-300)};
    return k;
  }
  k.rx = int(std::floor(support / g.hx * (1 + 1e-12)));
  k.ry = g.dim == 2 ? int(std::floor(support / g.hy * (1 + 1e-12))) : 0;
  k.w.assign(std::size_t(2 * k.rx + 1) * (2 * k.ry + 1), 0.0);
  for (int dj = -k.ry; dj <= k.ry; ++dj)
    for (int di = -k.rx; di <= k.rx; ++di)
      k.w[std::size_t(dj + k.ry) * k.wnx() + (di + k.rx)] =
          kernel_value(kind, parameter, k.dim, {di * g.hx, dj * g.hy});
  return k;
}

VectorField gradient(const ScalarField& f) {
  const Grid& g = *f.g;
  if (f.centering != Centering::Vertex)
    throw ConfigError("gradient expects a vertex-indexed field");
  VectorField out(g, Centering::Vertex);
  auto active = [&](int i, int j) {
    return i >= 0 && i < g.vnx && j >= 0 && j < g.vny &&
           g.vert_active[g.vidx(i, j)];
  };
  for (int j = 0; j < g.vny; ++j)
    for (int i = 0; i < g.vnx; ++i) {
      if (!g.vert_active[g.vidx(i, j)]) continue;
      Vec2 gr{0, 0};
      bool xm = active(i - 1, j), xp = active(i + 1, j);
      if (xm && xp)
        gr.x = (f.at(i + 1, j) - f.at(i - 1, j)) / (2 * g.hx);
      else if (xp)
        gr.x = (f.at(i + 1, j) - f.at(i, j)) / g.hx;
      else if (xm)
        gr.x = (f.at(i, j) - f.at(i - 1, j)) / g.hx;
      if (g.dim == 2) {
        bool ym = active(i, j - 1), yp = active(i, j + 1);
        if (ym && yp)
          gr.y = (f.at(i, j + 1) - f.at(i, j - 1)) / (2 * g.hy);
        else if (yp)
          gr.y = (f.at(i, j + 1) - f.at(i, j)) / g.hy;
        else if (ym)
          gr.y = (f.at(i, j) - f.at(i, j - 1)) / g.hy;
      }
      out.at(i, j) = gr;
    }
  return out;
}

ScalarField to_vertices(const ScalarField& cells) {
  const Grid& g = *cells.g;
  if (cells.centering != Centering::Cell)
    throw ConfigError("to_vertices expects a cell-indexed field");
  ScalarField out(g, Centering::Vertex);
  const int cj0 = g.dim == 2 ? -1 : 0;
  for (int j = 0; j < g.vny; ++j)
    for (int i = 0; i < g.vnx; ++i) {
      double sum = 0;
      int n = 0;
      for (int dj = cj0; dj <= 0; ++dj) {
        int cj = g.dim == 2 ? j + dj : 0;
        if (g.dim == 2 && (cj < 0 || cj >= g.ny)) continue;
        for (int ci = i - 1; ci <= i; ++ci) {
          if (ci < 0 || ci >= g.nx) continue;
          if (!g.cell_active[g.cidx(ci, cj)]) continue;
          sum += cells.at(ci, cj);
          ++n;
        }
      }
      if (n > 0) out.at(i, j) = sum / n;
    }
  return out;
}

ScalarField to_cells(const ScalarField& verts) {
  const Grid& g = *verts.g;
  if (verts.centering != Centering::Vertex)
    throw ConfigError("to_cells expects a vertex-indexed field");
  ScalarField out(g, Centering::Cell);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (g.dim == 2)
        out.at(i, j) = 0.25 * (verts.at(i, j) + verts.at(i + 1, j) +
                               verts.at(i, j + 1) + verts.at(i + 1, j + 1));
      else
        out.at(i, j) = 0.5 * (verts.at(i, 0) + verts.at(i + 1, 0));
    }
  return out;
}

VectorField to_cells(const VectorField& verts) {
  const Grid& g = *verts.g;
  if (verts.centering != Centering::Vertex)
    throw ConfigError("to_cells expects a vertex-indexed field");
  VectorField out(g, Centering::Cell);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (g.dim == 2)
        out.at(i, j) = 0.25 * (verts.at(i, j) + verts.at(i + 1, j) +
                               verts.at(i, j + 1) + verts.at(i + 1, j + 1));
      else
        out.at(i, j) = 0.5 * (verts.at(i, 0) + verts.at(i + 1, 0));
    }
  return out;
}

namespace {

template <class Field>
Field convolve_impl(const Field& f, const Kernel& k) {
  const Grid& g = *f.g;
  Field out(g, f.centering);
  const int nx = f.nx(), ny = f.ny();
  const bool vertex = f.centering == Centering::Vertex;
  const double hd = g.dim == 2 ? g.hx * g.hy : g.hx;
  auto usable = [&](int i, int j) {
    return vertex ? bool(g.vert_active[g.vidx(i, j)])
                  : bool(g.cell_active[g.cidx(i, j)]);
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!usable(i, j)) continue;
      auto acc = out.at(i, j);
      for (int dj = -k.ry; dj <= k.ry; ++dj) {
        int sj = j + dj;
        if (sj < 0 || sj >= ny) continue;
        for (int di = -k.rx; di <= k.rx; ++di) {
          int si = i + di;
          if (si < 0 || si >= nx) continue;
          if (!usable(si, sj)) continue;
          double wgt = k.weight(di, dj);
          if (wgt == 0.0) continue;
          acc += wgt * f.at(si, sj);
        }
      }
      out.at(i, j) = hd * acc;
    }
  return out;
}

}  // namespace

ScalarField convolve(const ScalarField& f, const Kernel& k) {
  return convolve_impl(f, k);
}

VectorField convolve(const VectorField& f, const Kernel& k) {
  return convolve_impl(f, k);
}

void scatter_convolve_pair(const ScalarField& rho, const VectorField& u,
                           const Kernel& k, VectorField& num, ScalarField& den,
                           double drop_tol) {
  const Grid& g = *rho.g;
  const int nx = rho.nx(), ny = rho.ny();
  const bool vertex = rho.centering == Centering::Vertex;
  const double hd = g.dim == 2 ? g.hx * g.hy : g.hx;
  num = VectorField(g, rho.centering);
  den = ScalarField(g, rho.centering);
  auto usable = [&](int i, int j) {
    return vertex ? bool(g.vert_active[g.vidx(i, j)])
                  : bool(g.cell_active[g.cidx(i, j)]);
  };
  for (int sj = 0; sj < ny; ++sj)
    for (int si = 0; si < nx; ++si) {
      double r = rho.at(si, sj);
      if (r <= drop_tol) continue;
      if (!usable(si, sj)) continue;
      Vec2 ru = r * u.at(si, sj);
      int j0 = std::max(0, sj - k.ry), j1 = std::min(ny - 1, sj + k.ry);
      int i0 = std::max(0, si - k.rx), i1 = std::min(nx - 1, si + k.rx);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          double wgt = k.weight(si - i, sj - j);
          if (wgt == 0.0) continue;
          num.at(i, j) += wgt * ru;
          den.at(i, j) += wgt * r;
        }
    }
  for (auto& x : num.v) x = hd * x;
  for (auto& x : den.v) x *= hd;
}

namespace {

struct BilinearLocator {
  int i0, j0, i1, j1;
  double fx, fy;
};

BilinearLocator locate(const Grid& g, Vec2 p, bool vertex) {
  BilinearLocator L;
  double ox = vertex ? g.dom.lo.x : g.dom.lo.x + 0.5 * g.hx;
  double nxm = vertex ? g.vnx - 1 : g.nx - 1;
  double tx = std::clamp((p.x - ox) / g.hx, 0.0, double(nxm));
  L.i0 = std::min(int(tx), int(nxm) - (nxm > 0 ? 1 : 0));
  L.i0 = std::max(0, L.i0);
  L.i1 = std::min(L.i0 + 1, int(nxm));
  L.fx = std::clamp(tx - L.i0, 0.0, 1.0);
  if (g.dim == 2) {
    double oy = vertex ? g.dom.lo.y : g.dom.lo.y + 0.5 * g.hy;
    double nym = vertex ? g.vny - 1 : g.ny - 1;
    double ty = std::clamp((p.y - oy) / g.hy, 0.0, double(nym));
    L.j0 = std::min(int(ty), int(nym) - (nym > 0 ? 1 : 0));
    L.j0 = std::max(0, L.j0);
    L.j1 = std::min(L.j0 + 1, int(nym));
    L.fy = std::clamp(ty - L.j0, 0.0, 1.0);
  } else {
    L.j0 = L.j1 = 0;
    L.fy = 0;
  }
  return L;
}

template <class Field>
auto sample_impl(const Field& f, Vec2 p) {
  const Grid& g = *f.g;
  auto L = locate(g, p, f.centering == Centering::Vertex);
  auto v00 = f.at(L.i0, L.j0);
  auto v10 = f.at(L.i1, L.j0);
  auto v01 = f.at(L.i0, L.j1);
  auto v11 = f.at(L.i1, L.j1);
  return (1 - L.fy) * ((1 - L.fx) * v00 + L.fx * v10) +
         L.fy * ((1 - L.fx) * v01 + L.fx * v11);
}

}  // namespace

double sample_vertex_field(const ScalarField& f, Vec2 p) {
  return sample_impl(f, p);
}
Vec2 sample_vertex_field(const VectorField& f, Vec2 p) {
  return sample_impl(f, p);
}
double sample_cell_field(const ScalarField& f, Vec2 p) {
  return sample_impl(f, p);
}
Vec2 sample_cell_field(const VectorField& f, Vec2 p) {
  return sample_impl(f, p);
}

namespace {

bool block_contains(const DensityBlock& b, int dim, Vec2 p) {
  if (p.x < b.lo.x || p.x > b.hi.x) return false;
  return dim == 1 || (p.y >= b.lo.y && p.y <= b.hi.y);
}

double block_measure(const DensityBlock& b, int dim) {
  double m = b.hi.x - b.lo.x;
  if (dim == 2) m *= b.hi.y - b.lo.y;
  return m;
}

}  // namespace

ScalarField block_density_cells(const Grid& g,
                                const std::vector<DensityBlock>& blocks) {
  ScalarField rho(g, Centering::Cell, 0.0);
  for (int j = 0; j < (g.dim == 2 ? g.ny : 1); ++j)
    for (int i = 0; i < g.nx; ++i) {
      Vec2 p = g.ccenter(i, j);
      double v = 0.0;
      for (const DensityBlock& b : blocks)
        if (block_contains(b, g.dim, p)) v += b.value;
      rho.v[std::size_t(g.cidx(i, j))] = v;
    }
  return rho;
}

double block_mass(int dim, const std::vector<DensityBlock>& blocks) {
  double m = 0.0;
  for (const DensityBlock& b : blocks) m += b.value * block_measure(b, dim);
  return m;
}

std::vector<Vec2> sample_block_positions(const std::vector<DensityBlock>& blocks,
                                         int n, int dim, Rng& rng) {
  std::vector<double> cum;
  double total = 0.0;
  for (const DensityBlock& b : blocks) {
    total += b.value * block_measure(b, dim);
    cum.push_back(total);
  }
  if (total <= 0.0)
    throw ConfigError("cannot sample particles from a massless density");
  std::vector<Vec2> pts;
  pts.reserve(std::size_t(n));
  for (int k = 0; k < n; ++k) {
    double u = rng.uniform() * total;
    std::size_t bi = 0;
    while (bi + 1 < cum.size() && u > cum[bi]) ++bi;
    const DensityBlock& b = blocks[bi];
    Vec2 p{rng.uniform(b.lo.x, b.hi.x),
           dim == 2 ? rng.uniform(b.lo.y, b.hi.y) : 0.0};
    pts.push_back(p);
  }
  return pts;
}

}  // namespace pedflow
