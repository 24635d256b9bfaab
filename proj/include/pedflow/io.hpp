#pragma once

#include <string>
#include <vector>

#include "pedflow/macro.hpp"
#include "pedflow/micro.hpp"

namespace pedflow {

/** x,rho[,vx] rows for a 1D cell field. */
void write_profile_csv(const std::string& path, const Grid& g,
                       const ScalarField& rho_cell,
                       const VectorField* vel_cell = nullptr);

/** t,dt,mass,outflux_k...,waiting rows. */
void write_mass_history_csv(const std::string& path,
                            const std::vector<MassRow>& history);

/** t,exited,share_k...,alive rows. */
void write_exit_curves_csv(const std::string& path,
                           const std::vector<MicroRow>& history);

/** id,x,y,alive,exit,exit_time,turned rows. */
void write_particles_csv(const std::string& path, const ParticleEnsemble& e);

/**
 * Legacy-text structured-points file with the cell density and, when given,
 * the cell velocity. 2D grids only.
 */
void write_vtk_cells(const std::string& path, const Grid& g,
                     const ScalarField& rho_cell,
                     const VectorField* vel_cell = nullptr);

}  // namespace pedflow
