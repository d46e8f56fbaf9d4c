#pragma once

#include <cstdint>
#include <vector>

#include "malab/common.hpp"
#include "malab/geometry.hpp"
#include "malab/grid.hpp"

namespace malab {

// Logarithmically spaced scales from qmin to qmax, endpoints included.
std::vector<double> log_grid(double qmin, double qmax, int per_decade);

// Monotone oscillation envelope: w(q) bounds |f(p) - f(p')| over |p - p'| <= q.
// Nondecreasing in q, piecewise linear between samples, constant beyond either
// end of the sampled range. Tagged forms carry their defining parameters so the
// integral transforms below can use closed-form antiderivatives.
struct Modulus {
    enum class Form { custom, constant, holder, logarithmic };

    Form form = Form::custom;
    std::vector<double> q, w;
    double coef = 0;  // level, H, or s
    double power = 0; // unused, alpha, or a
    std::size_t pairs_used = 0;
    bool lower_estimate = false; // measured from finitely many pairs

    double eval(double qq) const;
    double limit_at_zero() const;
    double qmin() const { return q.front(); }
    double qmax() const { return q.back(); }

    static Modulus enveloped(std::vector<double> q, std::vector<double> w);
    static Modulus constant_form(double level, double qmin, double qmax, int per_decade = 8);
    static Modulus holder_form(double H, double alpha, double qmin, double qmax,
                               int per_decade = 8);
    // w(q) = s |ln q|^-a, only meaningful for qmax < 1
    static Modulus log_form(double s, double a, double qmin, double qmax, int per_decade = 8);
};

// Largest field oscillation per separation scale. Scales must increase
// strictly. Exhausts all node pairs within six cells, then adds seeded random
// long-range pairs, so the result is a certified lower envelope of the truth.
Modulus estimate_modulus(const ScalarField& f, const std::vector<double>& scales,
                         std::uint64_t far_pairs = 100000, std::uint64_t seed = 0x6d616c6162ull);
Modulus estimate_modulus(const Sampler& f, const ConvexPolytope& region, int cells_across,
                         const std::vector<double>& scales, std::uint64_t far_pairs = 100000,
                         std::uint64_t seed = 0x6d616c6162ull);

struct DiniResult {
    double value = 0;
    bool divergent = false;
    double tail_cut = 0; // sampled envelopes integrate down to this scale only
};

// integral_a^b w(q) q^-moment dq for moment 1 or 2. Closed forms for tagged
// envelopes; exact segment sums for sampled ones. With a = 0 a sampled
// envelope is truncated at its smallest scale and flagged divergent when the
// two smallest sampled decades carry comparable mass.
DiniResult dini_integral(const Modulus& m, double a, double b, int moment);

// Adaptive quadrature fallback for the same integrand, for cross-checks.
double integrate_modulus_quad(const Modulus& m, double a, double b, int moment,
                              double rel_tol = 1e-9);

// Largest admissible initial scale: the biggest q <= rho whose oscillation
// stays within the perturbation budget C_mc.
double choose_q_in(const Modulus& m, double rho, double C_mc);

// Calibrated constants feeding the quantitative estimates. defaults() mirrors
// the frozen calibration outputs.
struct BoundConstants {
    double c2hat = 0;  // Hessian eigenvalue window of unit solutions
    double C2hat = 0;
    double C5hat = 0;  // center Hessian response per unit of delta / h
    double kappa = 0;  // center gradient response per sqrt(delta)
    double h_c = 0.2;  // fixed height ratio of consecutive sections
    double C_mc = 0.01;
    double beta1 = 3.0;
    double Cbar = 4.0;
    double Qin_base = 1.0; // outer constant model: Qin_base * q_in^-Qin_power
    double Qin_power = 2.0;

    double beta() const;  // 1.12 C5hat / (h_c |ln((6/5) sqrt(h_c))|)
    double beta2() const; // beta() * max(1, beta1)
    double Qin(double q_in) const;
    double corollary_exponent() const; // max(Qin_power, 1)

    static BoundConstants defaults();
};

struct EPair {
    double E_dbar = 1;
    double E0 = 1;
    bool E0_finite = true;
};

// exp(beta * integral w(q) dq / q) over [Cbar dbar, q_in] and over (0, q_in].
EPair eval_E(const Modulus& m, double dbar, double q_in, const BoundConstants& c);

struct BoundReport {
    double dbar = 0, rho = 0, f_max = 1, q_in = 0;
    double E_dbar = 0, E0 = 0;
    bool E0_finite = false;
    DiniResult dini1_zero; // first moment over (0, q_in]
    DiniResult dini1_dbar; // first moment over (0, Q E dbar]
    DiniResult dini2;      // second moment over [Cbar dbar, q_in]
    bool dini_finite = false;
    bool small_branch = false; // fine estimates apply at this separation
    double grad_small = 0, grad_large = 0; // per unit separation
    double hess_sup = 0;
    double hess_diff_small = 0, hess_diff_large = 0;
    BoundConstants consts;
};

// Interior estimates at separation dbar for data with the given oscillation
// envelope on a domain of inradius margin rho.
BoundReport eval_theorem_bounds(const Modulus& m, double dbar, const BoundConstants& c,
                                double f_max, double rho);

struct HolderBounds {
    double q_in = 0;
    double E0_cap = 1;
    double bound_D2 = 0;
    double bound_D2_holder = 0;
};

// Closed-form consequences for w(q) = H q^alpha, alpha in (0, 1).
HolderBounds holder_corollary(double H, double alpha, const BoundConstants& c, double f_max,
                              double rho);

struct GammaRange {
    double lo = 0, hi = 1;
    bool lo_closed = false; // left endpoint itself attainable
};

// Admissible exponents gamma with v in C^{1, 1-gamma}: requires the
// oscillation level at zero separation to stay below min(C_mc, 1/beta2).
GammaRange gamma_range(const Modulus& m, const BoundConstants& c);

struct LogWeightReport {
    double sigma0 = 0;    // beta * limsup of w(q) |ln q|
    double sigma = 0;     // admissible weight exponent actually certified
    double ratio_max = 0; // sup of E_dbar / |ln(Cbar dbar)|^sigma over sampled dbar
    bool bounded = false;
};

// Gradient continuity refinement for data with w(q) |ln q| bounded near 0.
LogWeightReport log_gradient_weight(const Modulus& m, const BoundConstants& c, double q_in,
                                    double margin = 0.1);

struct LogPartsReport {
    double direct = 0;          // integral of |ln q|^-a q^-2 over [Cbar dbar, q_in]
    double via_parts = 0;       // boundary term plus a times the next moment
    double rel_gap = 0;
    double remainder_ratio = 0; // the next moment must stay below half
    bool ok = false;
};

// Integration by parts control of the second moment for w(q) = |ln q|^-a.
LogPartsReport log_hessian_parts(double a, double dbar, double q_in, const BoundConstants& c);

} // namespace malab
