#include "malab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace malab {

// ============================================================
// AffineMap
// ============================================================

AffineMap::AffineMap(Mat A_, Vec t_) : A(std::move(A_)), t(std::move(t_)) {
    if (A.rows() != A.cols() || A.rows() != t.size())
        throw precondition_error("AffineMap: shape mismatch");
    det = A.determinant();
    if (!(std::abs(det) > 0) || !std::isfinite(det))
        throw degeneracy_error("AffineMap: singular linear part");
}

AffineMap AffineMap::anchored(const Mat& A, const Vec& anchor) {
    return AffineMap(A, -A * anchor);
}

AffineMap AffineMap::identity(int dim) {
    return AffineMap(Mat::Identity(dim, dim), Vec::Zero(dim));
}

AffineMap AffineMap::inverse() const {
    Mat Ai = A.inverse();
    return AffineMap(Ai, -Ai * t);
}

AffineMap AffineMap::compose(const AffineMap& other) const {
    return AffineMap(A * other.A, A * other.t + t);
}

double AffineMap::det_root() const {
    return std::pow(std::abs(det), 1.0 / dim());
}

// ============================================================
// 2-D hull (monotone chain, strict turns) and hull membership
// ============================================================

static double cross2(const Vec& o, const Vec& a, const Vec& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::vector<Vec> convex_hull_2d(std::vector<Vec> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec& a, const Vec& b) {
        return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec& a, const Vec& b) { return a[0] == b[0] && a[1] == b[1]; }),
              pts.end());
    const std::size_t m = pts.size();
    if (m < 3) return pts;

    double scale = 0;
    for (const auto& p : pts) scale = std::max(scale, p.lpNorm<Eigen::Infinity>());
    const double eps = 1e-14 * std::max(1.0, scale * scale);

    std::vector<Vec> hull(2 * m);
    std::size_t k = 0;
    for (std::size_t i = 0; i < m; ++i) {
        while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= eps) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = m - 1, lo = k + 1; i-- > 0;) {
        while (k >= lo && cross2(hull[k - 2], hull[k - 1], pts[i]) <= eps) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

double hull_distance(const std::vector<Vec>& pts, const Vec& p, double tol) {
    const std::size_t m = pts.size();
    if (m == 0) throw precondition_error("hull_distance: empty point set");
    double scale = 1.0;
    for (const auto& q : pts) scale = std::max(scale, (q - p).norm());
    const double eps = 0.25 * tol * tol * std::max(1.0, scale * scale);

    // Start from the nearest vertex.
    std::size_t best = 0;
    double bestd = (pts[0] - p).squaredNorm();
    for (std::size_t i = 1; i < m; ++i) {
        double d = (pts[i] - p).squaredNorm();
        if (d < bestd) { bestd = d; best = i; }
    }
    Vec lambda = Vec::Zero(static_cast<Eigen::Index>(m));
    lambda[static_cast<Eigen::Index>(best)] = 1.0;
    Vec x = pts[best];

    double gap = 0;
    for (int iter = 0; iter < 20000; ++iter) {
        Vec g = x - p;
        std::size_t ifw = 0, iaw = 0;
        double fw = std::numeric_limits<double>::infinity();
        double aw = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            double s = g.dot(pts[i]);
            if (s < fw) { fw = s; ifw = i; }
            if (lambda[static_cast<Eigen::Index>(i)] > 0 && s > aw) { aw = s; iaw = i; }
        }
        gap = g.dot(x) - fw;
        if (gap <= eps) break;

        const bool use_fw = (g.dot(x) - fw) >= (aw - g.dot(x));
        if (use_fw) {
            Vec d = pts[ifw] - x;
            double denom = d.squaredNorm();
            if (denom <= 0) break;
            double gamma = std::clamp(-g.dot(d) / denom, 0.0, 1.0);
            lambda *= (1.0 - gamma);
            lambda[static_cast<Eigen::Index>(ifw)] += gamma;
            x += gamma * d;
        } else {
            Vec d = x - pts[iaw];
            double denom = d.squaredNorm();
            double la = lambda[static_cast<Eigen::Index>(iaw)];
            if (denom <= 0 || la >= 1.0) break;
            double gmax = la / (1.0 - la);
            double gamma = std::clamp(-g.dot(d) / denom, 0.0, gmax);
            lambda *= (1.0 + gamma);
            lambda[static_cast<Eigen::Index>(iaw)] -= gamma;
            x += gamma * d;
        }
    }
    double d2 = (x - p).squaredNorm() - 2.0 * gap;
    return d2 > 0 ? std::sqrt(d2) : 0.0;
}

// ============================================================
// ConvexPolytope
// ============================================================

ConvexPolytope::ConvexPolytope(std::vector<Vec> pts) {
    if (pts.empty()) throw precondition_error("ConvexPolytope: no vertices");
    n = static_cast<int>(pts[0].size());
    if (n < 2) throw precondition_error("ConvexPolytope: dimension must be >= 2");
    if (n > 16) throw precondition_error("ConvexPolytope: dimension above 16 unsupported");
    for (const auto& p : pts)
        if (static_cast<int>(p.size()) != n)
            throw precondition_error("ConvexPolytope: mixed dimensions");

    double scale = 0;
    for (const auto& p : pts) scale = std::max(scale, p.lpNorm<Eigen::Infinity>());
    const double merge = 1e-12 * std::max(1.0, scale);

    // Merge duplicates.
    std::vector<Vec> uniq;
    for (const auto& p : pts) {
        bool dup = false;
        for (const auto& q : uniq)
            if ((p - q).lpNorm<Eigen::Infinity>() <= merge) { dup = true; break; }
        if (!dup) uniq.push_back(p);
    }

    if (n == 2) {
        vertices = convex_hull_2d(std::move(uniq));
    } else {
        // Keep extreme points only: v is extreme iff it is outside conv(others).
        for (std::size_t i = 0; i < uniq.size(); ++i) {
            std::vector<Vec> others;
            others.reserve(uniq.size() - 1);
            for (std::size_t j = 0; j < uniq.size(); ++j)
                if (j != i) others.push_back(uniq[j]);
            if (others.empty() || hull_distance(others, uniq[i]) > 1e-9 * std::max(1.0, scale))
                vertices.push_back(uniq[i]);
        }
    }
    if (vertices.empty()) vertices = std::move(uniq);
}

Vec ConvexPolytope::centroid() const {
    Vec c = Vec::Zero(n);
    for (const auto& v : vertices) c += v;
    return c / static_cast<double>(vertices.size());
}

double ConvexPolytope::diameter() const {
    double d = 0;
    for (std::size_t i = 0; i < vertices.size(); ++i)
        for (std::size_t j = i + 1; j < vertices.size(); ++j)
            d = std::max(d, (vertices[i] - vertices[j]).norm());
    return d;
}

double ConvexPolytope::support(const Vec& d) const {
    double s = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices) s = std::max(s, d.dot(v));
    return s;
}

bool ConvexPolytope::contains(const Vec& p, double tol) const {
    if (n == 2 && vertices.size() >= 3) {
        const std::size_t m = vertices.size();
        double scale = std::max(1.0, diameter());
        for (std::size_t i = 0; i < m; ++i) {
            if (cross2(vertices[i], vertices[(i + 1) % m], p) < -tol * scale) return false;
        }
        return true;
    }
    return hull_distance(vertices, p) <= tol * std::max(1.0, diameter());
}

ConvexPolytope ConvexPolytope::transformed(const AffineMap& T) const {
    std::vector<Vec> out;
    out.reserve(vertices.size());
    for (const auto& v : vertices) out.push_back(T.apply(v));
    return ConvexPolytope(std::move(out));
}

double polygon_area(const std::vector<Vec>& ccw) {
    double a = 0;
    const std::size_t m = ccw.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Vec& p = ccw[i];
        const Vec& q = ccw[(i + 1) % m];
        a += p[0] * q[1] - q[0] * p[1];
    }
    return 0.5 * a;
}

double ConvexPolytope::area() const {
    if (n != 2) throw precondition_error("area: 2-D only");
    return polygon_area(vertices);
}

static double point_segment_distance(const Vec& p, const Vec& a, const Vec& b) {
    Vec ab = b - a;
    double denom = ab.squaredNorm();
    double t = denom > 0 ? std::clamp((p - a).dot(ab) / denom, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

double ConvexPolytope::inradius_about(const Vec& c) const {
    if (n != 2) throw precondition_error("inradius_about: 2-D only");
    if (vertices.size() < 3 || !contains(c)) return 0;
    double r = std::numeric_limits<double>::infinity();
    const std::size_t m = vertices.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Vec& a = vertices[i];
        const Vec& b = vertices[(i + 1) % m];
        Vec e = b - a;
        double len = e.norm();
        if (len <= 0) continue;
        // Distance from c to the edge's supporting line; the polygon is the
        // intersection of these halfplanes, so the minimum is the inradius.
        double d = std::abs(e[0] * (c[1] - a[1]) - e[1] * (c[0] - a[0])) / len;
        r = std::min(r, d);
    }
    return r;
}

double ConvexPolytope::circumradius_about(const Vec& c) const {
    double r = 0;
    for (const auto& v : vertices) r = std::max(r, (v - c).norm());
    return r;
}

double ConvexPolytope::boundary_distance(const Vec& p) const {
    if (n != 2) throw precondition_error("boundary_distance: 2-D only");
    double d = std::numeric_limits<double>::infinity();
    const std::size_t m = vertices.size();
    for (std::size_t i = 0; i < m; ++i)
        d = std::min(d, point_segment_distance(p, vertices[i], vertices[(i + 1) % m]));
    return contains(p) ? d : -d;
}

ConvexPolytope ConvexPolytope::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open polytope file: " + path);
    std::vector<Vec> pts;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        std::vector<double> row;
        double x;
        while (ss >> x) row.push_back(x);
        if (!ss.eof()) throw parse_error("bad vertex line in " + path + ": " + line);
        if (row.empty()) continue;
        Vec v(static_cast<Eigen::Index>(row.size()));
        for (std::size_t i = 0; i < row.size(); ++i) v[static_cast<Eigen::Index>(i)] = row[i];
        pts.push_back(std::move(v));
    }
    if (pts.empty()) throw parse_error("no vertices in " + path);
    return ConvexPolytope(std::move(pts));
}

void ConvexPolytope::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw error("cannot write polytope file: " + path);
    out << "# convex polytope, one vertex per line\n";
    out.precision(17);
    for (const auto& v : vertices) {
        for (int i = 0; i < n; ++i) out << (i ? " " : "") << v[i];
        out << "\n";
    }
}

// ============================================================
// Ellipsoid
// ============================================================

bool Ellipsoid::contains(const Vec& p, double tol) const {
    Vec d = p - c;
    return d.dot(M * d) <= 1.0 + tol;
}

double Ellipsoid::support(const Vec& d) const {
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success) throw degeneracy_error("Ellipsoid: shape not SPD");
    Vec y = llt.solve(d);
    return d.dot(c) + std::sqrt(d.dot(y));
}

double Ellipsoid::volume() const {
    const int n = dim();
    double ball = std::pow(std::acos(-1.0), 0.5 * n) / std::tgamma(0.5 * n + 1.0);
    return ball / std::sqrt(M.determinant());
}

Ellipsoid Ellipsoid::dilated(double s) const {
    return Ellipsoid{c, M / (s * s)};
}

Vec Ellipsoid::semi_axes() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    Vec ev = es.eigenvalues();
    Vec axes(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) axes[i] = 1.0 / std::sqrt(ev[ev.size() - 1 - i]);
    return axes;
}

// ============================================================
// Minimum-volume enclosing ellipsoid (Khachiyan ascent with away steps)
// ============================================================

Ellipsoid min_enclosing_ellipsoid(const std::vector<Vec>& pts, double tol, int max_iter) {
    const std::size_t m = pts.size();
    if (m == 0) throw precondition_error("mvee: empty point set");
    const int n = static_cast<int>(pts[0].size());
    if (m < static_cast<std::size_t>(n + 1)) throw degeneracy_error("mvee: too few points");
    const int d = n + 1;

    Mat Q(d, static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
        Q.block(0, static_cast<Eigen::Index>(i), n, 1) = pts[i];
        Q(n, static_cast<Eigen::Index>(i)) = 1.0;
    }

    Vec u = Vec::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    Vec w(static_cast<Eigen::Index>(m));

    bool converged = false;
    for (int iter = 0; iter < max_iter; ++iter) {
        Mat X = Q * u.asDiagonal() * Q.transpose();
        Eigen::LDLT<Mat> ldlt(X);
        if (ldlt.info() != Eigen::Success || ldlt.isNegative())
            throw degeneracy_error("mvee: degenerate configuration");
        Mat Y = ldlt.solve(Q);
        for (std::size_t i = 0; i < m; ++i)
            w[static_cast<Eigen::Index>(i)] =
                Q.col(static_cast<Eigen::Index>(i)).dot(Y.col(static_cast<Eigen::Index>(i)));

        Eigen::Index jmax = 0, jmin = -1;
        double wmax = -1, wmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            if (w[i] > wmax) { wmax = w[i]; jmax = i; }
            if (u[i] > 0 && w[i] < wmin) { wmin = w[i]; jmin = i; }
        }
        const double ep = wmax / d - 1.0;
        const double em = jmin >= 0 ? 1.0 - wmin / d : 0.0;
        if (std::max(ep, em) <= tol) { converged = true; break; }

        if (ep >= em) {
            double step = (wmax - d) / (d * (wmax - 1.0));
            u *= (1.0 - step);
            u[jmax] += step;
        } else {
            double gmax = u[jmin] / (1.0 - u[jmin]);
            double g = (wmin > 1.0 + 1e-14) ? (d - wmin) / (d * (wmin - 1.0)) : gmax;
            g = std::min(g, gmax);
            u *= (1.0 + g);
            u[jmin] -= g;
            if (u[jmin] < 0) u[jmin] = 0;
        }
    }
    if (!converged) throw numeric_error("mvee: no convergence");

    Mat P(n, static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) P.col(static_cast<Eigen::Index>(i)) = pts[i];
    Vec c = P * u;
    Mat Sigma = P * u.asDiagonal() * P.transpose() - c * c.transpose();

    Eigen::SelfAdjointEigenSolver<Mat> es(Sigma);
    if (es.eigenvalues().minCoeff() <= 1e-16 * std::max(1.0, es.eigenvalues().maxCoeff()))
        throw degeneracy_error("mvee: degenerate (near lower-dimensional) point set");

    Mat M0 = es.operatorInverseSqrt();
    M0 = M0 * M0 / static_cast<double>(n);
    // Rescale so every point is inside exactly.
    double s = 0;
    for (const auto& p : pts) {
        Vec dd = p - c;
        s = std::max(s, dd.dot(M0 * dd));
    }
    return Ellipsoid{c, M0 / s};
}

Ellipsoid min_enclosing_ellipsoid(const ConvexPolytope& poly, double tol) {
    return min_enclosing_ellipsoid(poly.vertices, tol);
}

AffineMap normalize_domain(const ConvexPolytope& poly, double tol) {
    Ellipsoid E = min_enclosing_ellipsoid(poly, tol);
    Eigen::SelfAdjointEigenSolver<Mat> es(E.M);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    // Shape eigenvalue ratio is the squared aspect ratio; reject slivers.
    if (!(lmin > 0) || lmax / lmin > 1e12)
        throw degeneracy_error("normalize_domain: degenerate domain");
    Mat A = static_cast<double>(poly.dim()) * es.operatorSqrt();
    return AffineMap::anchored(A, E.c);
}

// ============================================================
// transform_stats
// ============================================================

TransformStats transform_stats(const Mat& A) {
    if (A.rows() != A.cols()) throw precondition_error("transform_stats: square matrix required");
    TransformStats st;
    st.det = A.determinant();
    if (!(std::abs(st.det) > 0)) throw degeneracy_error("transform_stats: singular matrix");
    Eigen::JacobiSVD<Mat> svd(A);
    const Vec& sv = svd.singularValues();
    st.norm = sv[0];
    st.norm_inv = 1.0 / sv[sv.size() - 1];
    const double root = std::pow(std::abs(st.det), 1.0 / static_cast<double>(A.rows()));
    st.unit_norm = st.norm / root;
    st.unit_norm_inv = root / sv[sv.size() - 1];
    st.eccentricity = st.unit_norm * st.unit_norm_inv;
    return st;
}

// ============================================================
// Hausdorff distance between polygon boundaries
// ============================================================

static double directed_hausdorff(const ConvexPolytope& a, const ConvexPolytope& b, int sub) {
    const std::size_t m = a.vertices.size();
    double worst = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const Vec& p = a.vertices[i];
        const Vec& q = a.vertices[(i + 1) % m];
        for (int s = 0; s < sub; ++s) {
            Vec x = p + (q - p) * (static_cast<double>(s) / sub);
            double best = std::numeric_limits<double>::infinity();
            const std::size_t mb = b.vertices.size();
            for (std::size_t j = 0; j < mb; ++j)
                best = std::min(best,
                                point_segment_distance(x, b.vertices[j], b.vertices[(j + 1) % mb]));
            worst = std::max(worst, best);
        }
    }
    return worst;
}

double hausdorff_2d(const ConvexPolytope& a, const ConvexPolytope& b) {
    if (a.dim() != 2 || b.dim() != 2) throw precondition_error("hausdorff_2d: 2-D only");
    return std::max(directed_hausdorff(a, b, 16), directed_hausdorff(b, a, 16));
}

} // namespace malab
