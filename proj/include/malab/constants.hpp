#pragma once

// Frozen calibration outputs. Regenerate with tools/calibrate and paste the
// block it prints; nothing else in the library defines these numbers.
namespace malab::calib {

inline constexpr double c2_hat = 0.1775;      // lower Hessian eigenvalue, unit problems
inline constexpr double C2_hat = 3.8702;      // upper Hessian eigenvalue, same window
inline constexpr double C5_hat = 0.2581;      // center Hessian response per delta / h
inline constexpr double kappa_hat = 25.9796;  // center gradient response per sqrt(delta)
inline constexpr double nd2_dh = 1.0000;      // squared-radius defect per delta / h
inline constexpr double nd2_sh = 0.0612;      // squared-radius defect per sqrt(h)
inline constexpr double g_floor = 0.0733;     // discretization floor of the Hessian gap
inline constexpr double theta_hat = 0.74264;  // diameter shrink per height halving
inline constexpr double h_c = 0.2;            // section height ratio
inline constexpr double C_mc = 0.0500;        // admissible oscillation budget
inline constexpr double beta1_hat = 3.0;      // secondary exponent in the weight bounds

} // namespace malab::calib
