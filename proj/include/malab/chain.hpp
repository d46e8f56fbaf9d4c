#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "malab/bounds.hpp"
#include "malab/constants.hpp"
#include "malab/geometry.hpp"
#include "malab/grid.hpp"

namespace malab {

// One recorded inequality, lhs <= rhs.
struct StepCheck {
    std::string name;
    double lhs = 0, rhs = 0;
    bool pass = true;
};

struct ChainConfig {
    double h_c = calib::h_c;  // height ratio between consecutive sections
    double C_mc = 0.01;       // oscillation budget; the budget cap is n^-2/5
    int K_max = 8;
    int min_cells_across = 64;  // fresh-solve resolution across the thin side
    int max_cells_across = 512;
    double C4 = 1.0;  // delta <= C4 h admissibility slope

    // Frozen calibration outputs; see tools/calibrate.
    double C5hat = calib::C5_hat;
    double c2hat = calib::c2_hat;
    double C2hat = calib::C2_hat;
    double kappa = calib::kappa_hat;
    double nd2_dh = calib::nd2_dh;
    double nd2_sh = calib::nd2_sh;
    double g_floor = calib::g_floor;

    // Discretization allowances, fitted on constant-rhs chains and frozen.
    double vw_tol = 0.03;
    double grad_floor = 0.02;
    double nd2_floor = 0.01;
    double incl_tol = 0.05;        // ball inclusion dilation, accepted steps
    double incl_tol_first = 0.10;  // same for the base section
    double budget_slack = 2e-3;    // grid-edge allowance on the delta budget
    double omega_slack = 1.25;     // multiplier on the measured-envelope bound

    // Growth exponent per level. A safer, much coarser choice is 2e * C5hat
    // per unit height ratio; raise C5hat here to emulate it.
    double growth_coef() const { return 1.12 * C5hat / h_c; }

    // Modulus measurement around the base point.
    int per_decade = 8;
    std::uint64_t far_pairs = 60000;
    std::uint64_t seed = 0x6d616c6162ull;
};

struct StepDiagnostics {
    Vec2 center = Vec2::Zero();
    double height_full = 0;  // value gap between center and boundary
    double vw_gap = 0;       // scaled distance to the unit-rhs solution
    double grad_norm = 0;    // transformed gradient at the center
    double r_in = 0, r_out = 0;  // ball radii of the mapped next section
    double defect = 0;           // max |r^2/2 - 1| over the two radii
    double det_gap = 0;          // determinant drift removed from the map
    double hess_gap = 0;         // |D^2 w_sharp - I| at the mapped center
    std::vector<StepCheck> checks;
    bool ok() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

// One level of the section iteration. P is the accumulated transform taking
// the level-k section near the unit ball, T the refinement step computed on
// it; both are recorded in the frame of the normalized base section.
struct ChainStep {
    int k = 0;
    double height = 0;       // section height in the normalized frame
    double height_orig = 0;  // the same section's height for the input field
    AffineMap P, T;
    Mat2 hessian_center = Mat2::Identity();  // det-projected D^2 w_k at the base point
    double delta = 0;                        // rhs oscillation over the section
    double M = 1;                            // accumulated growth factor
    double ecc = 1;                          // eccentricity of P
    double r_in = 0, r_out = 0;  // ball radii of the mapped section about 0
    double defect = 0;           // max |r^2/2 - 1| over the two radii
    double det_gap = 0;
    double vw_gap = 0;
    double grad_center = 0;
    double diameter = 0;  // of the untransformed section
    ConvexPolytope section;
    std::shared_ptr<const ScalarField> w;  // fresh solve on the section
    std::vector<StepCheck> checks;
};

struct SectionChain {
    Vec2 x = Vec2::Zero();  // base point
    double b = 1;           // rhs value there
    double f_max = 1;       // rhs range over the scan ball
    double rho = 0;
    double q_in = 0;
    AffineMap tau;  // base normalization, anchored at x
    Vec2 grad_v = Vec2::Zero();
    double value_v = 0;
    Modulus omega;  // measured rhs modulus near x
    std::string termination;
    std::vector<ChainStep> steps;
    ChainConfig cfg;

    bool all_checks_pass() const {
        for (const auto& st : steps)
            for (const auto& c : st.checks)
                if (!c.pass) return false;
        return true;
    }
};

// Single refinement step on a quasi-normalized section: solve with unit rhs,
// take the square root of the center Hessian, rescale by h^{-1/2}. The input
// field must be zero on its boundary with B_1 <= domain <= B_2 around its
// minimum; delta is the known rhs oscillation. Throws step_rejection when a
// precondition fails; soft inequalities are recorded in the diagnostics.
std::pair<AffineMap, StepDiagnostics> perturbation_step(const ScalarField& u, double h,
                                                        double delta,
                                                        const ChainConfig& cfg = {});

// Full section iteration at a base point at least rho inside the domain of v.
// f is the rhs of det(D^2 v)^(1/2) = f, needed to measure oscillations; it
// must be >= 1 near x. Each level re-extracts the section of v and re-solves
// on a fresh grid. Stops at K_max, at the grid resolution floor, or at the
// first failed hard inequality.
SectionChain run_chain(const ScalarField& v, const Vec2& x, const Sampler& f, double rho,
                       const ChainConfig& cfg = {});

// Pulled-back center Hessians b D^2 w_k(x) against the finite-difference
// Hessian of v; returns the last one and the error trace. Throws
// divergence_error when the trace rises past the noise allowance.
std::pair<Mat2, std::vector<double>> hessian_limit(const SectionChain& chain,
                                                   const ScalarField& v, const Vec2& x);

// Level-k solution mapped back to the original coordinates, plus the tilt
// that was removed from v; b * result approximates v up to a constant.
ScalarField backward_transform(const SectionChain& chain, int k, const ScalarField& v);

// sup - inf of v - b w_v over the section, the constancy defect above.
double backward_gap(const SectionChain& chain, int k, const ScalarField& v);

void save_chain(const SectionChain& chain, const std::string& path);

} // namespace malab
