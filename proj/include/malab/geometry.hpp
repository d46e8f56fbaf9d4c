#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "malab/common.hpp"

namespace malab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Affine map x -> A x + t with the determinant of A cached.
struct AffineMap {
    Mat A;
    Vec t;
    double det = 1.0;

    AffineMap() = default;
    AffineMap(Mat A_, Vec t_);

    // Map anchored at a point: x -> A (x - anchor).
    static AffineMap anchored(const Mat& A, const Vec& anchor);
    static AffineMap identity(int dim);

    int dim() const { return static_cast<int>(A.rows()); }
    Vec apply(const Vec& x) const { return A * x + t; }
    AffineMap inverse() const;
    // Composition (this after other): x -> this(other(x)).
    AffineMap compose(const AffineMap& other) const;

    // |det|^(1/n); the scale factor of the unit-determinant splitting A = s * Abreve.
    double det_root() const;
};

// Convex polytope stored by its extreme points. In 2-D the vertices are kept
// in counterclockwise order; duplicates within 1e-12 (relative) are merged.
struct ConvexPolytope {
    int n = 0;
    std::vector<Vec> vertices;

    ConvexPolytope() = default;
    explicit ConvexPolytope(std::vector<Vec> pts);

    int dim() const { return n; }
    std::size_t size() const { return vertices.size(); }
    Vec centroid() const;
    double diameter() const;
    // Support function value max_v <d, v>.
    double support(const Vec& d) const;
    bool contains(const Vec& p, double tol = 1e-9) const;
    ConvexPolytope transformed(const AffineMap& T) const;

    // 2-D only helpers.
    double area() const;
    // Largest r with B_r(c) inside the polygon (0 if c outside).
    double inradius_about(const Vec& c) const;
    double circumradius_about(const Vec& c) const;
    // Signed distance to the boundary (positive inside).
    double boundary_distance(const Vec& p) const;

    static ConvexPolytope load(const std::string& path);
    void save(const std::string& path) const;
};

// Ellipsoid {x : (x-c)^T M (x-c) <= 1}, M symmetric positive definite.
struct Ellipsoid {
    Vec c;
    Mat M;

    int dim() const { return static_cast<int>(c.size()); }
    bool contains(const Vec& p, double tol = 1e-9) const;
    double support(const Vec& d) const;
    double volume() const;
    // Dilation about the center by factor s.
    Ellipsoid dilated(double s) const;
    // Semi-axis lengths, descending.
    Vec semi_axes() const;
};

// Operator norms and the unit-determinant splitting of the linear part.
struct TransformStats {
    double det = 0;             // det A (may be negative)
    double norm = 0;            // ||A||_2
    double norm_inv = 0;        // ||A^-1||_2
    double unit_norm = 0;       // ||Abreve||_2,  Abreve = A / |det|^(1/n)
    double unit_norm_inv = 0;   // ||Abreve^-1||_2
    double eccentricity = 0;    // unit_norm * unit_norm_inv
};

TransformStats transform_stats(const Mat& A);

// Minimum-volume enclosing ellipsoid (relative volume tolerance tol).
// Throws degeneracy_error when the points are affinely dependent.
Ellipsoid min_enclosing_ellipsoid(const std::vector<Vec>& pts, double tol = 1e-5,
                                  int max_iter = 200000);
Ellipsoid min_enclosing_ellipsoid(const ConvexPolytope& poly, double tol = 1e-5);

// Symmetric positive definite normalizer T with B_1 <= T(poly) <= B_n,
// anchored at the enclosing ellipsoid's center.
AffineMap normalize_domain(const ConvexPolytope& poly, double tol = 1e-5);

// Distance from p to the convex hull of pts (0 when inside); Frank-Wolfe
// iteration with away steps on the simplex formulation.
double hull_distance(const std::vector<Vec>& pts, const Vec& p, double tol = 1e-10);

// 2-D convex hull, counterclockwise, collinear points dropped.
std::vector<Vec> convex_hull_2d(std::vector<Vec> pts);

double polygon_area(const std::vector<Vec>& ccw);

// Hausdorff distance between two 2-D polygons (boundary to boundary).
double hausdorff_2d(const ConvexPolytope& a, const ConvexPolytope& b);

inline Vec vec2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

} // namespace malab
