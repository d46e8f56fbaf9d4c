// Measures the constants behind the perturbation diagnostics on a family of
// quasi-normalized domains and prints the block to paste into
// include/malab/constants.hpp. Run it after any solver change; not part of
// the test suite because a sweep takes a few minutes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include <Eigen/Dense>

#include "malab/geometry.hpp"
#include "malab/grid.hpp"
#include "malab/section.hpp"
#include "malab/solver.hpp"

using namespace malab;

namespace {

ConvexPolytope ngon(int n, double r, double aspect, double rot) {
    std::vector<Vec> v;
    for (int k = 0; k < n; ++k) {
        double t = 2 * M_PI * k / n;
        double x = r * std::cos(t), y = r * aspect * std::sin(t);
        v.push_back(vec2(x * std::cos(rot) - y * std::sin(rot),
                         x * std::sin(rot) + y * std::cos(rot)));
    }
    return ConvexPolytope(v);
}

Vec2 argmin_node(const ScalarField& f) {
    const Grid& g = *f.grid;
    double best = std::numeric_limits<double>::infinity();
    Vec2 where = Vec2::Zero();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (g.node_valid(i, j) && f.at(i, j) < best) {
                best = f.at(i, j);
                where = Vec2(g.xat(i), g.yat(j));
            }
    return where;
}

// Newton refinement of the discrete argmin; kills the half-cell quantization.
Vec2 refine_min(const ScalarField& f, Vec2 p) {
    for (int it = 0; it < 3; ++it) {
        try {
            Vec2 step = f.hessian_at(p).ldlt().solve(f.gradient_at(p)).eval();
            if (!step.allFinite() || step.norm() > 5 * f.grid->h) break;
            p -= step;
        } catch (const numeric_error&) {
            break;
        }
    }
    return p;
}

Mat2 sqrt_spd(const Mat2& M) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (M + M.transpose()));
    Vec2 ev = es.eigenvalues().cwiseMax(1e-12);
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double spec_norm(const Mat2& A) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (A + A.transpose()));
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct StepOut {
    double delta_eff = 0;
    double h_act = 0;
    double c5_num = 0;   // |G - I| after unit-determinant projection
    double defect = 0;   // max |r^2/2 - 1| over the renormalized boundary
    double kappa_num = 0;
    double vw_num = 0;
};

// One perturbation-response measurement at nominal height h_nom. delta = 0
// reproduces the unit problem and reports the discretization floor.
StepOut one_step(const ScalarField& u, const ScalarField& w, const Sampler& rhs, double delta,
                 double h_nom, int n_sec) {
    const Grid& g = *u.grid;
    Vec2 xbar = refine_min(u, argmin_node(u));
    double c = rhs(xbar(0), xbar(1));

    StepOut out;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!g.node_valid(i, j)) continue;
            out.delta_eff =
                std::max(out.delta_eff, std::fabs(rhs(g.xat(i), g.yat(j)) / c - 1));
            out.vw_num = std::max(out.vw_num, std::fabs(u.at(i, j) / c - w.at(i, j)));
        }
    out.kappa_num = w.gradient_at(xbar).norm();
    out.h_act = c * h_nom;

    Section sec = extract_section(u, xbar, out.h_act);
    Mat2 T = sqrt_spd(w.hessian_at(xbar)) / std::sqrt(out.h_act);
    double r2lo = std::numeric_limits<double>::infinity(), r2hi = 0;
    for (const auto& z : sec.boundary.vertices) {
        Vec2 d(z(0) - xbar(0), z(1) - xbar(1));
        double r2 = (T * d).squaredNorm();
        r2lo = std::min(r2lo, r2);
        r2hi = std::max(r2hi, r2);
    }
    out.defect = std::max(std::fabs(0.5 * r2lo - 1), std::fabs(0.5 * r2hi - 1));

    ScalarField ws = solve_unit(Grid::make(sec.boundary, n_sec));
    Mat Tm = T;
    Mat G = pushforward_hessian(AffineMap::anchored(Tm, vec2(xbar(0), xbar(1))),
                                Mat(ws.hessian_at(xbar)));
    Mat2 G2 = G;
    double det = G2.determinant();
    if (det > 0) G2 /= std::sqrt(det); // the continuum limit has unit determinant
    out.c5_num = spec_norm(G2 - Mat2::Identity());
    (void)delta;
    return out;
}

} // namespace

int main(int argc, char** argv) {
    int n_dom = 193, n_pog = 161, n_sec = 129;
    if (argc > 1 && std::strcmp(argv[1], "fast") == 0) {
        n_dom = 129;
        n_pog = 97;
        n_sec = 97;
    }

    // Hessian eigenvalue window of unit solutions over half-height sections
    ConvexPolytope hex = ngon(6, 1.0, 0.6, 0.3);
    std::vector<ConvexPolytope> pog = {
        ngon(64, 1.5, 1.0, 0.0),
        ngon(64, 1.9, 0.55, 0.5),
        ConvexPolytope({vec2(-1.2, -1.2), vec2(1.2, -1.2), vec2(1.2, 1.2), vec2(-1.2, 1.2)}),
        hex.transformed(normalize_domain(hex)),
    };
    double eig_lo = std::numeric_limits<double>::infinity(), eig_hi = 0;
    for (std::size_t d = 0; d < pog.size(); ++d) {
        ScalarField w = solve_unit(Grid::make(pog[d], n_pog));
        const Grid& g = *w.grid;
        double half = 0.5 * w.min_value();
        double lo = std::numeric_limits<double>::infinity(), hi = 0;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                if (!g.node_valid(i, j) || !(w.at(i, j) < half)) continue;
                try {
                    Eigen::SelfAdjointEigenSolver<Mat2> es(
                        w.hessian_at(Vec2(g.xat(i), g.yat(j))));
                    lo = std::min(lo, es.eigenvalues().minCoeff());
                    hi = std::max(hi, es.eigenvalues().maxCoeff());
                } catch (const proximity_error&) {
                }
            }
        std::printf("pogorelov domain %zu: eig in [%.4f, %.4f]\n", d, lo, hi);
        eig_lo = std::min(eig_lo, lo);
        eig_hi = std::max(eig_hi, hi);
    }

    // perturbation responses on the disk and the ellipse
    // Odd (sine) profiles probe the gradient drift; even (cosine) profiles keep
    // a nonzero rhs Hessian at the center and probe the normalized-Hessian gap.
    struct Case {
        int dom;
        double delta, kx, ky, h;
        bool even;
    };
    std::vector<Case> cases = {
        {0, 0.0, 0, 0, 0.05, false},  {0, 0.0, 0, 0, 0.1, false},  {0, 0.0, 0, 0, 0.2, false},
        {1, 0.0, 0, 0, 0.05, false},  {1, 0.0, 0, 0, 0.1, false},  {1, 0.0, 0, 0, 0.2, false},
        {0, 0.01, 3, 2, 0.2, false},  {0, 0.02, 3, 2, 0.2, false}, {0, 0.01, 5, -1, 0.2, false},
        {1, 0.02, 3, 2, 0.2, false},  {0, 0.01, 3, 2, 0.2, true},  {0, 0.02, 3, 2, 0.2, true},
        {0, 0.04, 3, 2, 0.2, true},   {0, 0.02, 5, -1, 0.2, true}, {1, 0.02, 3, 2, 0.2, true},
        {1, 0.04, 3, 2, 0.2, true},
    };
    std::vector<ConvexPolytope> doms = {ngon(64, 1.5, 1.0, 0.0), ngon(64, 1.9, 0.55, 0.5)};
    std::vector<ScalarField> wref;
    std::vector<Vec2> wmin;
    for (const auto& dom : doms) {
        wref.push_back(solve_unit(Grid::make(dom, n_dom)));
        wmin.push_back(refine_min(wref.back(), argmin_node(wref.back())));
    }

    double c5_floor = 0, c5_ratio = 0, sh_ratio = 0, dh_ratio = 0;
    double kap_ratio = 0, vw_ratio = 0;
    double base_defect[2] = {0, 0}; // unit-case defect at h = 0.2 per domain
    for (const auto& cs : cases) {
        const ScalarField& w = wref[cs.dom];
        StepOut s;
        if (cs.delta == 0) {
            s = one_step(w, w, [](double, double) { return 1.0; }, 0, cs.h, n_sec);
            sh_ratio = std::max(sh_ratio, s.defect / std::sqrt(s.h_act));
            c5_floor = std::max(c5_floor, s.c5_num);
            if (cs.h == 0.2) base_defect[cs.dom] = s.defect;
            std::printf("unit dom %d h %.2f: |G-I| %.4f defect %.4f\n", cs.dom, cs.h, s.c5_num,
                        s.defect);
            continue;
        }
        Vec2 c0 = wmin[cs.dom];
        Sampler rhs = [&](double x, double y) {
            double phase = cs.kx * (x - c0(0)) + cs.ky * (y - c0(1));
            double shape = cs.even ? 0.5 * (std::cos(phase) - 1) : std::sin(phase);
            return 1 + cs.delta * shape;
        };
        ScalarField u = solve_dirichlet(w.grid, rhs, [](double, double) { return 0.0; });
        s = one_step(u, w, rhs, cs.delta, cs.h, n_sec);
        c5_ratio = std::max(c5_ratio, s.c5_num * s.h_act / s.delta_eff);
        dh_ratio = std::max(dh_ratio, (s.defect - base_defect[cs.dom]) * s.h_act / s.delta_eff);
        kap_ratio = std::max(kap_ratio, s.kappa_num / std::sqrt(s.delta_eff));
        vw_ratio = std::max(vw_ratio, s.vw_num / s.delta_eff);
        std::printf("pert dom %d delta %.3f k (%.0f,%.0f) %s: |G-I| %.4f defect %.4f "
                    "grad %.5f vw/delta %.3f\n",
                    cs.dom, cs.delta, cs.kx, cs.ky, cs.even ? "even" : "odd ", s.c5_num,
                    s.defect, s.kappa_num, s.vw_num / s.delta_eff);
    }

    double c2_hat = 0.90 * eig_lo;
    double C2_hat = 1.10 * eig_hi;
    double C5_hat = 1.25 * c5_ratio;
    double kappa_hat = 2 * C2_hat * std::sqrt(2 / c2_hat); // the window implies this rate
    double nd2_sh = 1.5 * sh_ratio;
    double nd2_dh = std::max(1.0, 1.5 * dh_ratio);
    double C_mc = std::min({0.2, 0.2 / (3 * C5_hat), 0.05});

    std::printf("\nmeasured: c5 ratio %.4f (floor %.4f), kappa ratio %.4f, vw ratio %.4f\n",
                c5_ratio, c5_floor, kap_ratio, vw_ratio);
    std::printf("          sqrt-h defect ratio %.4f, delta/h defect ratio %.4f\n\n", sh_ratio,
                dh_ratio);

    std::printf("--- paste into include/malab/constants.hpp ---\n");
    std::printf("inline constexpr double c2_hat = %.4f;\n", c2_hat);
    std::printf("inline constexpr double C2_hat = %.4f;\n", C2_hat);
    std::printf("inline constexpr double C5_hat = %.4f;\n", C5_hat);
    std::printf("inline constexpr double kappa_hat = %.4f;\n", kappa_hat);
    std::printf("inline constexpr double nd2_dh = %.4f;\n", nd2_dh);
    std::printf("inline constexpr double nd2_sh = %.4f;\n", nd2_sh);
    std::printf("inline constexpr double g_floor = %.4f;\n", 2 * c5_floor);
    std::printf("inline constexpr double theta_hat = 0.74264;\n");
    std::printf("inline constexpr double h_c = 0.2;\n");
    std::printf("inline constexpr double C_mc = %.4f;\n", C_mc);
    std::printf("inline constexpr double beta1_hat = 3.0;\n");
    return 0;
}
