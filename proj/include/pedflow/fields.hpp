#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pedflow/core.hpp"
#include "pedflow/geometry.hpp"

namespace pedflow {

enum class Centering { Vertex, Cell };

/** Scalar values attached to grid vertices or cell centers. */
struct ScalarField {
  const Grid* g = nullptr;
  Centering centering = Centering::Vertex;
  std::vector<double> v;

  ScalarField() = default;
  ScalarField(const Grid& grid, Centering c, double init = 0.0)
      : g(&grid),
        centering(c),
        v(std::size_t(c == Centering::Vertex ? grid.vcount() : grid.ccount()),
          init) {}

  int nx() const { return centering == Centering::Vertex ? g->vnx : g->nx; }
  int ny() const { return centering == Centering::Vertex ? g->vny : g->ny; }
  double& at(int i, int j) { return v[std::size_t(j) * nx() + i]; }
  double at(int i, int j) const { return v[std::size_t(j) * nx() + i]; }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
  std::size_t size() const { return v.size(); }
};

/** Vectors attached to grid vertices or cell centers. */
struct VectorField {
  const Grid* g = nullptr;
  Centering centering = Centering::Vertex;
  std::vector<Vec2> v;

  VectorField() = default;
  VectorField(const Grid& grid, Centering c, Vec2 init = {0, 0})
      : g(&grid),
        centering(c),
        v(std::size_t(c == Centering::Vertex ? grid.vcount() : grid.ccount()),
          init) {}

  int nx() const { return centering == Centering::Vertex ? g->vnx : g->nx; }
  int ny() const { return centering == Centering::Vertex ? g->vny : g->ny; }
  Vec2& at(int i, int j) { return v[std::size_t(j) * nx() + i]; }
  Vec2 at(int i, int j) const { return v[std::size_t(j) * nx() + i]; }
  Vec2& operator[](std::size_t i) { return v[i]; }
  Vec2 operator[](std::size_t i) const { return v[i]; }
  std::size_t size() const { return v.size(); }
};

enum class KernelKind { Indicator, Bump, Gaussian };

/**
 * Discrete interaction kernel stencil sampled on the grid spacing.
 * Weights are plain kernel values; convolution multiplies by h^d.
 */
struct Kernel {
  KernelKind kind = KernelKind::Indicator;
  double parameter = 0.0;  // indicator half-width, bump radius, Gaussian sigma
  int dim = 2;
  int rx = 0, ry = 0;  // stencil radius in cells per axis
  double hx = 0.0, hy = 0.0;
  bool degenerate = false;  // parameter under grid spacing; one-point stencil
  std::vector<double> w;    // (2rx+1) x (2ry+1), row-major over dj then di

  int wnx() const { return 2 * rx + 1; }
  double weight(int di, int dj) const {
    return w[std::size_t(dj + ry) * wnx() + (di + rx)];
  }
};

/** Kernel value at displacement r (continuous form, before sampling). */
double kernel_value(KernelKind kind, double parameter, int dim, Vec2 r);

Kernel make_kernel(KernelKind kind, double parameter, const Grid& g);

/**
 * Finite-difference gradient of a vertex field: central differences where
 * both axis neighbors are usable, one-sided at boundaries and next to
 * inactive vertices, zero where no neighbor is usable.
 */
VectorField gradient(const ScalarField& f);

/** Vertex field from cell field: mean of adjacent active cells. */
ScalarField to_vertices(const ScalarField& cells);

/** Cell field as the mean of its four corner vertices. */
ScalarField to_cells(const ScalarField& verts);
VectorField to_cells(const VectorField& verts);

/**
 * Discrete convolution sum_j K(x_i - x_j) f(x_j) h^d over same-centered
 * points, truncated at the domain boundary without renormalization.
 */
ScalarField convolve(const ScalarField& f, const Kernel& k);
VectorField convolve(const VectorField& f, const Kernel& k);

/**
 * One-pass accumulation of the consensus quotient ingredients
 * num = (rho*u) conv K and den = rho conv K, scattering from the sparse set
 * of sources with rho above a drop tolerance. Matches convolve() up to
 * floating-point summation order.
 */
void scatter_convolve_pair(const ScalarField& rho, const VectorField& u,
                           const Kernel& k, VectorField& num, ScalarField& den,
                           double drop_tol = 1e-14);

/** Bilinear sample of a vertex field at point p (clamped to the grid). */
double sample_vertex_field(const ScalarField& f, Vec2 p);
Vec2 sample_vertex_field(const VectorField& f, Vec2 p);

/** Bilinear sample of a cell field at point p (cell centers as nodes). */
double sample_cell_field(const ScalarField& f, Vec2 p);
Vec2 sample_cell_field(const VectorField& f, Vec2 p);

/** Axis-aligned constant-density block (a segment in 1D, hi.y == lo.y). */
struct DensityBlock {
  Vec2 lo, hi;
  double value = 0.0;
};

/** Cell field summing the blocks covering each cell center. */
ScalarField block_density_cells(const Grid& g,
                                const std::vector<DensityBlock>& blocks);

/** Analytic mass: value times length (1D) or area (2D), summed. */
double block_mass(int dim, const std::vector<DensityBlock>& blocks);

/**
 * n points drawn from the normalized block density: the block is picked by
 * cumulative mass (inverse CDF), the point uniformly inside it.
 */
std::vector<Vec2> sample_block_positions(const std::vector<DensityBlock>& blocks,
                                         int n, int dim, Rng& rng);

}  // namespace pedflow
