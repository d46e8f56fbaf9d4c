#pragma once

#include <string>
#include <utility>

#include "malab/grid.hpp"

namespace malab {

// Sublevel set S(v,h,x) = { z : v(z) < v(x) + Dv(x).(z-x) + h } of a sampled
// convex function, stored as the convex hull of its marching-squares contour.
struct Section {
    Vec2 center = Vec2::Zero();
    double height = 0;
    double value = 0;            // v at the center
    Vec2 gradient = Vec2::Zero(); // Dv at the center
    ConvexPolytope boundary;
    double hull_gap = 0; // largest dent of the raw contour inside the hull

    // Filled by normalize_section.
    AffineMap normalizer;
    double r1 = 0, r2 = 0; // B_r1(0) <= T S <= B_r2(0) about the mapped center
};

// Measured quantities behind the quasi-normalization estimates, each with the
// interval it must fall in. slack widens the intervals multiplicatively to
// absorb the O(h_grid) contour error of discrete sections.
struct NormalizeDiagnostics {
    double r1 = 0, r2 = 0;
    double diam = 0; // of the original section

    double scaled_height = 0; // det^(2/n) T * h
    double scaled_height_low = 0, scaled_height_high = 0;

    double tinv_norm = 0; // ||T^-1||, bounded by diam / (2 r1) from above
    double tinv_low = 0, tinv_high = 0;

    double unit_ratio = 0; // sqrt(8h) ||Tbreve^-1|| / diam, Tbreve of unit det
    double unit_ratio_low = 0, unit_ratio_high = 0;

    bool det_ok = false, tinv_ok = false, ratio_ok = false;
    bool ok() const { return det_ok && tinv_ok && ratio_ok; }
};

// Marching squares on the tilted field, then a convex hull; the dent depth of
// the raw contour is reported in hull_gap. The supporting plane uses the
// field's blended centered differences at the center.
// Throws containment_error when the sublevel set touches the grid's invalid
// region and precondition_error for h <= 0.
Section extract_section(const ScalarField& v, const Vec2& x, double h);

// Largest h with S(v,h,x) inside the closed ball B_rho(x), by 30 bisection
// steps on [h_grid^2, oscillation of v]. Monotone in rho.
// Throws proximity_error when x is within 4 h_grid of the domain boundary.
double first_section_height(const ScalarField& v, const Vec2& x, double rho);

// Normalizer from the minimum-volume enclosing ellipse of the boundary: the
// symmetric positive definite map sending that ellipse to the unit ball,
// anchored at its center. Fills s.normalizer, s.r1, s.r2.
std::pair<AffineMap, NormalizeDiagnostics> normalize_section(Section& s, double f_max = 1,
                                                             double slack = 1.05);

// Writes the boundary in the polytope text format at path and a JSON sidecar
// (center, height, plane, transform, radii, hull gap) at path + ".json".
void save_section(const Section& s, const std::string& path);

} // namespace malab
