#include "malab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>

#include "malab/common.hpp"

namespace malab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EdgeFrame {
    std::vector<Vec2> a;  // edge start
    std::vector<Vec2> nrm; // outward unit normal (CCW polygon)
};

EdgeFrame edge_frame(const ConvexPolytope& poly) {
    EdgeFrame f;
    const auto& v = poly.vertices;
    const std::size_t m = v.size();
    f.a.reserve(m);
    f.nrm.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        Vec2 a(v[i](0), v[i](1));
        Vec2 b(v[(i + 1) % m](0), v[(i + 1) % m](1));
        Vec2 e = b - a;
        double len = e.norm();
        if (len <= 0) continue;
        f.a.push_back(a);
        f.nrm.push_back(Vec2(e(1), -e(0)) / len);
    }
    return f;
}

// Distance to the boundary, positive inside a convex CCW polygon.
double clearance(const EdgeFrame& f, const Vec2& p) {
    double c = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.a.size(); ++i)
        c = std::min(c, f.nrm[i].dot(f.a[i] - p));
    return c;
}

// First exit of the ray p + t*d from a convex polygon, p strictly inside.
double exit_param(const EdgeFrame& f, const Vec2& p, const Vec2& d) {
    double t = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.a.size(); ++i) {
        double dn = f.nrm[i].dot(d);
        if (dn <= 0) continue;
        t = std::min(t, f.nrm[i].dot(f.a[i] - p) / dn);
    }
    return t;
}

} // namespace

const std::array<PairDir, 8>& Grid::direction_pairs() {
    static const std::array<PairDir, 8> pairs = {{
        {{1, 0}, {0, 1}},
        {{1, 1}, {-1, 1}},
        {{2, 1}, {-1, 2}},
        {{1, 2}, {-2, 1}},
        {{3, 1}, {-1, 3}},
        {{1, 3}, {-3, 1}},
        {{3, 2}, {-2, 3}},
        {{2, 3}, {-3, 2}},
    }};
    return pairs;
}

Eigen::Vector2i Grid::dir(int d) const {
    const PairDir& p = direction_pairs()[d / 2];
    return (d % 2 == 0) ? p.a : p.b;
}

std::shared_ptr<const Grid> Grid::make_layout(const ConvexPolytope& domain, double ox, double oy,
                                              double h, int nx, int ny, int pair_count) {
    if (domain.n != 2)
        throw precondition_error("grids require a planar domain");
    if (pair_count < 1 || pair_count > 8)
        throw precondition_error("stencil pair count must lie in 1..8");
    if (h <= 0 || nx < 2 || ny < 2)
        throw precondition_error("degenerate grid layout");

    auto g = std::make_shared<Grid>();
    g->domain = domain;
    g->ox = ox;
    g->oy = oy;
    g->h = h;
    g->nx = nx;
    g->ny = ny;
    g->pair_count = pair_count;

    const EdgeFrame frame = edge_frame(domain);
    // Nodes closer to the boundary than this margin are dropped; keeps the
    // clipped-arm fractions, hence the difference weights, bounded.
    const double margin = 1e-4 * h;

    const std::size_t nn = static_cast<std::size_t>(nx) * ny;
    g->kind.assign(nn, NodeKind::exterior);
    g->unknown.assign(nn, -1);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            Vec2 p(g->xat(i), g->yat(j));
            if (clearance(frame, p) >= margin) {
                int id = g->node_id(i, j);
                g->kind[id] = NodeKind::interior; // demoted to cut below
                g->unknown[id] = static_cast<std::int32_t>(g->unodes.size());
                g->unodes.push_back(id);
            }
        }
    if (g->unodes.empty())
        throw resolution_error("grid resolves no nodes inside the domain");

    const int nd = g->ndirs();
    g->arms.assign(g->unodes.size() * nd * 2, Arm{});
    for (std::size_t u = 0; u < g->unodes.size(); ++u) {
        int id = g->unodes[u];
        int i = id % nx, j = id / nx;
        Vec2 p(g->xat(i), g->yat(j));
        bool clipped = false;
        for (int d = 0; d < nd; ++d) {
            Eigen::Vector2i off = g->dir(d);
            for (int side = 0; side < 2; ++side) {
                int s = side == 0 ? 1 : -1;
                int qi = i + s * off(0), qj = j + s * off(1);
                Arm& a = g->arms[(u * nd + d) * 2 + side];
                if (g->node_valid(qi, qj)) {
                    a.nb = g->unknown[g->node_id(qi, qj)];
                    a.theta = 1;
                } else {
                    Vec2 step(s * off(0) * h, s * off(1) * h);
                    double t = exit_param(frame, p, step);
                    a.nb = -1;
                    a.theta = std::min(t, 1.0);
                    Vec2 b = p + a.theta * step;
                    a.bx = b(0);
                    a.by = b(1);
                    clipped = true;
                }
            }
        }
        if (clipped) g->kind[id] = NodeKind::cut;
    }

    // The unknowns must form one axis-connected component.
    std::vector<char> seen(g->unodes.size(), 0);
    std::deque<int> bfs{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!bfs.empty()) {
        int id = g->unodes[static_cast<std::size_t>(bfs.front())];
        bfs.pop_front();
        int i = id % nx, j = id / nx;
        const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            int qi = i + di[k], qj = j + dj[k];
            if (!g->node_valid(qi, qj)) continue;
            int v = g->unknown[g->node_id(qi, qj)];
            if (!seen[v]) {
                seen[v] = 1;
                ++reached;
                bfs.push_back(v);
            }
        }
    }
    g->connected = reached == g->unodes.size();
    return g;
}

std::shared_ptr<const Grid> Grid::make(const ConvexPolytope& domain, int cells_across,
                                       int pair_count) {
    if (domain.n != 2)
        throw precondition_error("grids require a planar domain");
    if (cells_across < 4)
        throw precondition_error("need at least 4 cells across the domain");
    double lox = std::numeric_limits<double>::infinity(), hix = -lox;
    double loy = lox, hiy = -lox;
    for (const auto& v : domain.vertices) {
        lox = std::min(lox, v(0));
        hix = std::max(hix, v(0));
        loy = std::min(loy, v(1));
        hiy = std::max(hiy, v(1));
    }
    double extent = std::max(hix - lox, hiy - loy);
    if (!(extent > 0))
        throw degeneracy_error("domain has no extent");
    double h = extent / cells_across;
    int nx = static_cast<int>(std::ceil((hix - lox) / h)) + 3;
    int ny = static_cast<int>(std::ceil((hiy - loy) / h)) + 3;
    return make_layout(domain, lox - h, loy - h, h, nx, ny, pair_count);
}

ScalarField::ScalarField(std::shared_ptr<const Grid> g) : grid(std::move(g)) {
    values.assign(static_cast<std::size_t>(grid->nx) * grid->ny, kNaN);
}

ScalarField::ScalarField(std::shared_ptr<const Grid> g, const Sampler& f) : ScalarField(std::move(g)) {
    for (int j = 0; j < grid->ny; ++j)
        for (int i = 0; i < grid->nx; ++i)
            if (grid->node_valid(i, j)) at(i, j) = f(grid->xat(i), grid->yat(j));
}

double ScalarField::interp(double x, double y) const {
    const Grid& g = *grid;
    double fx = (x - g.ox) / g.h, fy = (y - g.oy) / g.h;
    int i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, g.nx - 2);
    int j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, g.ny - 2);
    double ax = fx - i0, ay = fy - j0;
    if (ax < -1e-12 || ax > 1 + 1e-12 || ay < -1e-12 || ay > 1 + 1e-12) return kNaN;
    ax = std::clamp(ax, 0.0, 1.0);
    ay = std::clamp(ay, 0.0, 1.0);
    double v00 = at(i0, j0), v10 = at(i0 + 1, j0);
    double v01 = at(i0, j0 + 1), v11 = at(i0 + 1, j0 + 1);
    return (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
}

namespace {

// Nodal centered differences with a two-cell step; exact on quadratics.
struct NodalDeriv {
    Vec2 grad;
    Mat2 hess;
};

NodalDeriv nodal_fd(const ScalarField& f, int i, int j) {
    const Grid& g = *f.grid;
    auto need = [&](int a, int b) -> double {
        if (!g.node_valid(a, b))
            throw proximity_error("derivative stencil leaves the valid region");
        return f.at(a, b);
    };
    double h = g.h;
    double c = need(i, j);
    double xp = need(i + 2, j), xm = need(i - 2, j);
    double yp = need(i, j + 2), ym = need(i, j - 2);
    double pp = need(i + 2, j + 2), pm = need(i + 2, j - 2);
    double mp = need(i - 2, j + 2), mm = need(i - 2, j - 2);
    NodalDeriv d;
    d.grad = Vec2((xp - xm) / (4 * h), (yp - ym) / (4 * h));
    d.hess(0, 0) = (xp - 2 * c + xm) / (4 * h * h);
    d.hess(1, 1) = (yp - 2 * c + ym) / (4 * h * h);
    d.hess(0, 1) = d.hess(1, 0) = (pp - pm - mp + mm) / (16 * h * h);
    return d;
}

struct CellBase {
    int i0, j0;
    double ax, ay;
};

CellBase locate(const Grid& g, const Vec2& p) {
    double fx = (p(0) - g.ox) / g.h, fy = (p(1) - g.oy) / g.h;
    if (fx < -1e-9 || fy < -1e-9 || fx > g.nx - 1 + 1e-9 || fy > g.ny - 1 + 1e-9)
        throw proximity_error("point lies outside the grid");
    CellBase c;
    c.i0 = std::clamp(static_cast<int>(std::floor(fx)), 0, g.nx - 2);
    c.j0 = std::clamp(static_cast<int>(std::floor(fy)), 0, g.ny - 2);
    c.ax = std::clamp(fx - c.i0, 0.0, 1.0);
    c.ay = std::clamp(fy - c.j0, 0.0, 1.0);
    return c;
}

} // namespace

Vec2 ScalarField::gradient_at(const Vec2& p) const {
    CellBase c = locate(*grid, p);
    Vec2 out = Vec2::Zero();
    for (int sj = 0; sj < 2; ++sj)
        for (int si = 0; si < 2; ++si) {
            double w = (si ? c.ax : 1 - c.ax) * (sj ? c.ay : 1 - c.ay);
            if (w == 0) continue;
            out += w * nodal_fd(*this, c.i0 + si, c.j0 + sj).grad;
        }
    return out;
}

Mat2 ScalarField::hessian_at(const Vec2& p) const {
    CellBase c = locate(*grid, p);
    Mat2 out = Mat2::Zero();
    for (int sj = 0; sj < 2; ++sj)
        for (int si = 0; si < 2; ++si) {
            double w = (si ? c.ax : 1 - c.ax) * (sj ? c.ay : 1 - c.ay);
            if (w == 0) continue;
            out += w * nodal_fd(*this, c.i0 + si, c.j0 + sj).hess;
        }
    return out;
}

double ScalarField::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (int id : grid->unodes) m = std::min(m, values[id]);
    return m;
}

double ScalarField::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (int id : grid->unodes) m = std::max(m, values[id]);
    return m;
}

namespace {

constexpr char kMagic[8] = {'M', 'A', 'L', 'A', 'B', 'F', 'L', 'D'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw parse_error("truncated field file");
    return v;
}

} // namespace

void ScalarField::write_binary(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw error("cannot open " + path + " for writing");
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, 1);
    const Grid& g = *grid;
    put<std::int32_t>(os, g.nx);
    put<std::int32_t>(os, g.ny);
    put<std::int32_t>(os, g.pair_count);
    put<std::int32_t>(os, static_cast<std::int32_t>(g.domain.vertices.size()));
    put(os, g.ox);
    put(os, g.oy);
    put(os, g.h);
    for (const auto& v : g.domain.vertices) {
        put(os, v(0));
        put(os, v(1));
    }
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!os) throw error("short write to " + path);
}

ScalarField ScalarField::read_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw error("cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw parse_error(path + " is not a field file");
    auto version = get<std::uint32_t>(is);
    if (version != 1) throw parse_error("unsupported field file version");
    int nx = get<std::int32_t>(is);
    int ny = get<std::int32_t>(is);
    int pair_count = get<std::int32_t>(is);
    int nverts = get<std::int32_t>(is);
    double ox = get<double>(is), oy = get<double>(is), h = get<double>(is);
    if (nverts < 3 || nverts > 1000000) throw parse_error("implausible vertex count");
    std::vector<Vec> verts;
    verts.reserve(nverts);
    for (int k = 0; k < nverts; ++k) {
        double x = get<double>(is), y = get<double>(is);
        verts.push_back(vec2(x, y));
    }
    ScalarField f(Grid::make_layout(ConvexPolytope(std::move(verts)), ox, oy, h, nx, ny, pair_count));
    is.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!is) throw parse_error("truncated field file");
    return f;
}

void ScalarField::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw error("cannot open " + path + " for writing");
    os << "x,y,value\n";
    char line[128];
    const Grid& g = *grid;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!g.node_valid(i, j)) continue;
            std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", g.xat(i), g.yat(j), at(i, j));
            os << line;
        }
    if (!os) throw error("short write to " + path);
}

ScalarField group_action(const AffineMap& T, const ScalarField& v, double target_spacing,
                         std::size_t node_budget) {
    const Grid& sg = *v.grid;
    if (T.A.rows() != 2) throw precondition_error("group action needs a planar map");
    Eigen::JacobiSVD<Mat> svd(T.A);
    double smin = svd.singularValues().minCoeff();
    if (smin <= 0) throw degeneracy_error("group action by a singular map");
    double hs = target_spacing > 0 ? target_spacing : sg.h * smin;

    ConvexPolytope image = sg.domain.transformed(T);
    double lox = std::numeric_limits<double>::infinity(), hix = -lox;
    double loy = lox, hiy = -lox;
    for (const auto& p : image.vertices) {
        lox = std::min(lox, p(0));
        hix = std::max(hix, p(0));
        loy = std::min(loy, p(1));
        hiy = std::max(hiy, p(1));
    }
    int nx = static_cast<int>(std::ceil((hix - lox) / hs)) + 3;
    int ny = static_cast<int>(std::ceil((hiy - loy) / hs)) + 3;
    if (static_cast<std::size_t>(nx) * ny > node_budget)
        throw resolution_error("group action would exceed the node budget; pass a coarser spacing");

    auto tg = Grid::make_layout(image, lox - hs, loy - hs, hs, nx, ny, sg.pair_count);
    ScalarField out(tg);
    AffineMap Tinv = T.inverse();
    double weight = T.det_root() * T.det_root();
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            if (!tg->node_valid(i, j)) continue;
            Vec x = Tinv.apply(vec2(tg->xat(i), tg->yat(j)));
            double val = v.interp(x(0), x(1));
            if (std::isnan(val)) {
                // Image nodes whose preimage falls in the source boundary ring
                // take the nearest valid source sample instead.
                double best = std::numeric_limits<double>::infinity();
                double fx = (x(0) - sg.ox) / sg.h, fy = (x(1) - sg.oy) / sg.h;
                int ci = static_cast<int>(std::round(fx)), cj = static_cast<int>(std::round(fy));
                for (int b = -2; b <= 2; ++b)
                    for (int a = -2; a <= 2; ++a) {
                        if (!sg.node_valid(ci + a, cj + b)) continue;
                        Vec2 q(sg.xat(ci + a), sg.yat(cj + b));
                        double d2 = (q - Vec2(x(0), x(1))).squaredNorm();
                        if (d2 < best) {
                            best = d2;
                            val = v.at(ci + a, cj + b);
                        }
                    }
            }
            out.at(i, j) = weight * val;
        }
    return out;
}

Mat pushforward_hessian(const AffineMap& T, const Mat& H) {
    Mat Ainv = T.A.inverse();
    double w = std::pow(T.det_root(), 2.0);
    return w * Ainv.transpose() * H * Ainv;
}

} // namespace malab
