#include "malab/section.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <vector>

#include "malab/common.hpp"

namespace malab {

Section extract_section(const ScalarField& v, const Vec2& x, double h) {
    if (!v.grid) throw precondition_error("the field has no grid");
    if (!(h > 0)) throw precondition_error("the section height must be positive");
    const Grid& g = *v.grid;

    Section s;
    s.center = x;
    s.height = h;
    s.value = v.interp(x.x(), x.y());
    if (!std::isfinite(s.value))
        throw precondition_error("the section center lies outside the valid region");
    s.gradient = v.gradient_at(x);

    // Values against the supporting plane, negative strictly inside the
    // section. An inside node with a clipped arm means the sublevel set is
    // not compactly inside the domain.
    const int nx = g.nx, ny = g.ny;
    std::vector<double> w(static_cast<std::size_t>(nx) * ny,
                          std::numeric_limits<double>::quiet_NaN());
    bool any_inside = false;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            int id = g.node_id(i, j);
            if (g.kind[id] == NodeKind::exterior) continue;
            Vec2 z(g.xat(i), g.yat(j));
            w[id] = v.values[id] - s.value - s.gradient.dot(z - x) - h;
            if (w[id] < 0) {
                if (g.kind[id] != NodeKind::interior)
                    throw containment_error("the section touches the domain boundary");
                any_inside = true;
            }
        }
    if (!any_inside) throw resolution_error("the section is smaller than the grid resolution");

    // Marching squares: one crossing point per sign-changing cell edge.
    std::vector<Vec> raw;
    auto cross = [&](int ia, int ja, int ib, int jb) {
        double wa = w[g.node_id(ia, ja)], wb = w[g.node_id(ib, jb)];
        if ((wa < 0) == (wb < 0)) return;
        double t = wa / (wa - wb);
        t = std::min(1.0, std::max(0.0, t));
        raw.push_back(vec2(g.xat(ia) + t * (g.xat(ib) - g.xat(ia)),
                           g.yat(ja) + t * (g.yat(jb) - g.yat(ja))));
    };
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            bool in00 = w[g.node_id(i, j)] < 0, in10 = w[g.node_id(i + 1, j)] < 0;
            bool in01 = w[g.node_id(i, j + 1)] < 0, in11 = w[g.node_id(i + 1, j + 1)] < 0;
            if (!(in00 || in10 || in01 || in11)) continue;
            if (!g.node_valid(i, j) || !g.node_valid(i + 1, j) || !g.node_valid(i, j + 1) ||
                !g.node_valid(i + 1, j + 1))
                throw containment_error("the section touches the domain boundary");
            cross(i, j, i + 1, j);
            cross(i + 1, j, i + 1, j + 1);
            cross(i + 1, j + 1, i, j + 1);
            cross(i, j + 1, i, j);
        }
    if (raw.size() < 3) throw resolution_error("the section is smaller than the grid resolution");

    std::vector<Vec> hull = convex_hull_2d(raw);
    if (hull.size() < 3) throw degeneracy_error("the section contour is degenerate");
    s.boundary = ConvexPolytope(hull);

    double gap = 0;
    for (const Vec& p : raw) gap = std::max(gap, s.boundary.boundary_distance(p));
    s.hull_gap = std::max(gap, 0.0);

    if (s.boundary.boundary_distance(vec2(x.x(), x.y())) <= 0)
        throw degeneracy_error("the section center is not strictly inside the contour");
    return s;
}

double first_section_height(const ScalarField& v, const Vec2& x, double rho) {
    if (!v.grid) throw precondition_error("the field has no grid");
    if (!(rho > 0)) throw precondition_error("the radius must be positive");
    const Grid& g = *v.grid;
    const Vec p = vec2(x.x(), x.y());
    if (g.domain.boundary_distance(p) < 4 * g.h)
        throw proximity_error("the query point is too close to the domain boundary");

    auto fits = [&](double h) {
        try {
            Section s = extract_section(v, x, h);
            return s.boundary.circumradius_about(p) <= rho;
        } catch (const containment_error&) {
            return false;
        } catch (const resolution_error&) {
            return false;
        }
    };

    double lo = g.h * g.h;
    double hi = v.oscillation();
    if (!(hi > lo)) throw degeneracy_error("the field has no oscillation to section");
    if (fits(hi)) return hi;
    if (!fits(lo)) throw resolution_error("the requested radius is below the grid resolution");
    for (int it = 0; it < 30; ++it) {
        double mid = 0.5 * (lo + hi);
        (fits(mid) ? lo : hi) = mid;
    }
    return lo;
}

std::pair<AffineMap, NormalizeDiagnostics> normalize_section(Section& s, double f_max,
                                                             double slack) {
    if (s.boundary.size() < 3) throw degeneracy_error("the section boundary is degenerate");
    Ellipsoid E = min_enclosing_ellipsoid(s.boundary);

    Eigen::SelfAdjointEigenSolver<Mat> es(E.M);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0)
        throw degeneracy_error("the enclosing ellipse of the section is degenerate");
    AffineMap T = AffineMap::anchored(es.operatorSqrt(), E.c);

    ConvexPolytope img = s.boundary.transformed(T);
    const Vec origin = Vec::Zero(2);
    NormalizeDiagnostics d;
    d.r1 = img.inradius_about(origin);
    d.r2 = img.circumradius_about(origin);
    if (d.r1 <= 0) throw degeneracy_error("the mapped section does not contain the center");
    d.diam = s.boundary.diameter();

    TransformStats st = transform_stats(T.A);
    d.scaled_height = T.det_root() * T.det_root() * s.height;
    d.scaled_height_low = 0.5 * d.r1 * d.r1;
    d.scaled_height_high = 0.5 * d.r2 * d.r2 * f_max;
    d.tinv_norm = st.norm_inv;
    d.tinv_low = d.diam / (2 * d.r2);
    d.tinv_high = d.diam / (2 * d.r1);
    d.unit_ratio = std::sqrt(8 * s.height) * st.unit_norm_inv / d.diam;
    d.unit_ratio_low = d.r1 / d.r2;
    d.unit_ratio_high = d.r2 / d.r1 * std::sqrt(f_max);

    d.det_ok = d.scaled_height >= d.scaled_height_low / slack &&
               d.scaled_height <= d.scaled_height_high * slack;
    d.tinv_ok = d.tinv_norm >= d.tinv_low / slack && d.tinv_norm <= d.tinv_high * slack;
    d.ratio_ok = d.unit_ratio >= d.unit_ratio_low / slack &&
                 d.unit_ratio <= d.unit_ratio_high * slack;

    s.normalizer = T;
    s.r1 = d.r1;
    s.r2 = d.r2;
    return {T, d};
}

void save_section(const Section& s, const std::string& path) {
    s.boundary.save(path);

    nlohmann::ordered_json j;
    j["center"] = {s.center.x(), s.center.y()};
    j["height"] = s.height;
    j["plane"] = {{"value", s.value}, {"gradient", {s.gradient.x(), s.gradient.y()}}};
    j["hull_gap"] = s.hull_gap;
    if (s.normalizer.A.size() > 0) {
        j["normalizer"] = {
            {"matrix",
             {{s.normalizer.A(0, 0), s.normalizer.A(0, 1)},
              {s.normalizer.A(1, 0), s.normalizer.A(1, 1)}}},
            {"offset", {s.normalizer.t[0], s.normalizer.t[1]}},
        };
        j["radii"] = {{"r1", s.r1}, {"r2", s.r2}};
    }
    std::ofstream os(path + ".json");
    if (!os) throw error("cannot write " + path + ".json");
    os << j.dump(2) << "\n";
}

} // namespace malab
