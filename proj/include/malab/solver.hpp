#pragma once

#include <memory>

#include "malab/grid.hpp"

namespace malab {

struct SolverConfig {
    bool refined_min = true; // trig-interpolated minimum over pair products
    double tol = 1e-8;       // residual target, scaled by max(1, sup f^n)
    int max_newton = 200;
    int gs_sweeps = 40; // relaxation sweeps taken when a Newton step stalls
    int max_stalls = 6;
    int defect_rounds = 1; // floor-compensation rounds for the refined minimum
};

struct SolveReport {
    int newton_iters = 0;
    int gs_sweeps = 0;
    int defect_rounds = 0;
    double residual = 0;
    double rhs_min = 0, rhs_max = 0;
    double min_second_difference = 0; // over all unknowns and directions
    bool refined_active = true;       // false if the run fell back to the plain minimum
};

// Dirichlet problem det(D^2 v)^(1/n) = f on the grid's polygon, n = 2.
// f must be strictly positive; boundary supplies v on the clipped arms.
ScalarField solve_dirichlet(std::shared_ptr<const Grid> grid, const Sampler& f,
                            const Sampler& boundary, const SolverConfig& cfg = {},
                            SolveReport* report = nullptr);

// Unit right-hand side, zero boundary values.
ScalarField solve_unit(std::shared_ptr<const Grid> grid, const SolverConfig& cfg = {},
                       SolveReport* report = nullptr);

} // namespace malab
