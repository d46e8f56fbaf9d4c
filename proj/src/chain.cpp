#include "malab/chain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "malab/common.hpp"
#include "malab/section.hpp"
#include "malab/solver.hpp"

namespace malab {

namespace {

constexpr double kInclRescue = 1.0005;

Mat2 sqrt_spd(const Mat2& H) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (H + H.transpose()));
    Vec2 lam = es.eigenvalues();
    bool clamped = false;
    for (int i = 0; i < 2; ++i)
        if (lam(i) < 1e-10) {
            lam(i) = 1e-10;
            clamped = true;
        }
    if (clamped) std::fprintf(stderr, "malab: clamped a nonpositive hessian eigenvalue\n");
    Vec2 rt = lam.cwiseSqrt();
    return es.eigenvectors() * rt.asDiagonal() * es.eigenvectors().transpose();
}

double spec_norm(const Mat2& A) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (A + A.transpose()));
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double op_norm(const Mat2& A) {
    Eigen::JacobiSVD<Mat2> svd(A);
    return svd.singularValues()(0);
}

// The continuum solutions here have unit Monge-Ampere measure, so any
// determinant drift in a measured Hessian is pure discretization; remove it.
Mat2 unit_det(const Mat2& G, double* gap) {
    double det = G.determinant();
    if (det > 0) {
        if (gap) *gap = std::abs(std::sqrt(det) - 1.0);
        return G / std::sqrt(det);
    }
    if (gap) *gap = 1.0;
    return G;
}

AffineMap linear_map(const Mat2& A) { return AffineMap(Mat(A), Vec::Zero(2)); }

// Node argmin plus a few Newton steps; kills the half-cell quantization.
Vec2 refine_min(const ScalarField& f) {
    const Grid& g = *f.grid;
    double best = std::numeric_limits<double>::infinity();
    Vec2 p = Vec2::Zero();
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!g.node_valid(i, j)) continue;
            double val = f.at(i, j);
            if (val < best) {
                best = val;
                p = Vec2(g.xat(i), g.yat(j));
            }
        }
    for (int it = 0; it < 3; ++it) {
        try {
            Vec2 grad = f.gradient_at(p);
            Mat2 H = f.hessian_at(p);
            Vec2 step = H.ldlt().solve(grad);
            if (!step.allFinite() || step.norm() > 5 * g.h) break;
            p -= step;
        } catch (const numeric_error&) {
            break;
        }
    }
    return p;
}

// Distance from c to the polygon boundary, 0 when c is outside.
double inradius_about(const std::vector<Vec>& vs, const Vec2& c) {
    std::size_t n = vs.size();
    if (n < 3) return 0;
    double r = std::numeric_limits<double>::infinity();
    int sign = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 a(vs[i](0) - c(0), vs[i](1) - c(1));
        Vec2 b(vs[(i + 1) % n](0) - c(0), vs[(i + 1) % n](1) - c(1));
        double len = (b - a).norm();
        if (len < 1e-300) continue;
        double cr = (a(0) * b(1) - a(1) * b(0)) / len;
        int s = cr > 0 ? 1 : cr < 0 ? -1 : 0;
        if (s != 0) {
            if (sign == 0) sign = s;
            else if (s != sign) return 0;
        }
        r = std::min(r, std::abs(cr));
    }
    return std::isfinite(r) ? r : 0;
}

double outradius_about(const std::vector<Vec>& vs, const Vec2& c) {
    double r = 0;
    for (const auto& v : vs) r = std::max(r, std::hypot(v(0) - c(0), v(1) - c(1)));
    return r;
}

std::pair<double, double> mapped_radii(const ConvexPolytope& poly, const AffineMap& Q) {
    std::vector<Vec> img;
    img.reserve(poly.vertices.size());
    for (const auto& v : poly.vertices) img.push_back(Q.apply(v));
    return {inradius_about(img, Vec2::Zero()), outradius_about(img, Vec2::Zero())};
}

// Enough cells that the thin side of the section still gets the minimum.
int section_cells(const ConvexPolytope& poly, const ChainConfig& cfg) {
    double lox = 1e300, hix = -1e300, loy = 1e300, hiy = -1e300;
    for (const auto& v : poly.vertices) {
        lox = std::min(lox, v(0));
        hix = std::max(hix, v(0));
        loy = std::min(loy, v(1));
        hiy = std::max(hiy, v(1));
    }
    double lo = std::min(hix - lox, hiy - loy);
    double hi = std::max(hix - lox, hiy - loy);
    if (!(lo > 0)) throw degeneracy_error("degenerate section bounding box");
    int cells = (int)std::ceil(cfg.min_cells_across * hi / lo);
    return std::clamp(cells, cfg.min_cells_across, cfg.max_cells_across);
}

StepCheck mk_check(const std::string& name, double lhs, double rhs) {
    return {name, lhs, rhs, lhs <= rhs};
}

nlohmann::ordered_json jmat(const Mat& A) {
    return nlohmann::ordered_json::array({{A(0, 0), A(0, 1)}, {A(1, 0), A(1, 1)}});
}

} // namespace

std::pair<AffineMap, StepDiagnostics> perturbation_step(const ScalarField& u, double h,
                                                        double delta, const ChainConfig& cfg) {
    if (!(h > 0) || !std::isfinite(h) || !(delta >= 0) || !std::isfinite(delta))
        throw precondition_error("perturbation step needs h > 0 and delta >= 0");

    StepDiagnostics d;
    Vec2 xi = refine_min(u);
    d.center = xi;
    double uxi = u.interp(xi(0), xi(1));
    if (!std::isfinite(uxi) || uxi >= 0)
        throw precondition_error("field must be negative at its interior minimum");
    d.height_full = -uxi;

    const ConvexPolytope& dom = u.grid->domain;
    double ri = inradius_about(dom.vertices, xi);
    double ro = outradius_about(dom.vertices, xi);
    if (std::max(1.0 - ri, ro - 2.0) > cfg.incl_tol_first)
        throw step_rejection(0, "B1 <= S <= B2 about the minimum");
    if (h > cfg.h_c * (1 + 1e-12)) throw step_rejection(0, "h <= h_c");
    if (delta > 0.05 + 1e-12) throw step_rejection(0, "delta <= n^-2/5");
    if (delta > cfg.C4 * h + 1e-12) throw step_rejection(0, "delta <= C4 h");

    ScalarField w = solve_unit(u.grid);
    double vw = 0;
    const Grid& g = *u.grid;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (g.node_valid(i, j)) vw = std::max(vw, std::abs(u.at(i, j) - w.at(i, j)));
    d.vw_gap = vw;
    d.checks.push_back(mk_check("solution sandwich", vw, 2 * delta + cfg.vw_tol));

    d.grad_norm = w.gradient_at(xi).norm();
    d.checks.push_back(
        mk_check("gradient response", d.grad_norm, cfg.kappa * std::sqrt(delta) + cfg.grad_floor));

    Mat2 Hw = w.hessian_at(xi);
    Mat2 Hp = unit_det(Hw, &d.det_gap);
    Mat2 T2 = sqrt_spd(Hp) / std::sqrt(h);
    AffineMap T = AffineMap::anchored(Mat(T2), vec2(xi(0), xi(1)));

    Section sh = extract_section(u, xi, h);
    auto [rin, rout] = mapped_radii(sh.boundary, T);
    d.r_in = rin;
    d.r_out = rout;
    d.defect = std::max(std::abs(0.5 * rin * rin - 1.0), std::abs(0.5 * rout * rout - 1.0));
    d.checks.push_back(mk_check("radius defect", d.defect,
                                cfg.nd2_dh * delta / h + cfg.nd2_sh * std::sqrt(h) + cfg.nd2_floor));

    ScalarField ws = solve_unit(Grid::make(sh.boundary, section_cells(sh.boundary, cfg)));
    Mat2 G = pushforward_hessian(T, Mat(ws.hessian_at(xi)));
    Mat2 Gp = unit_det(G, nullptr);
    d.hess_gap = spec_norm(Gp - Mat2::Identity());
    d.checks.push_back(
        mk_check("hessian gap", d.hess_gap, cfg.C5hat * delta / h + cfg.g_floor));

    return {T, d};
}

SectionChain run_chain(const ScalarField& v, const Vec2& x, const Sampler& f, double rho,
                       const ChainConfig& cfg) {
    if (!(rho > 0) || !std::isfinite(rho)) throw precondition_error("rho must be positive");
    const ConvexPolytope& dom = v.grid->domain;
    if (inradius_about(dom.vertices, x) < rho * (1 - 1e-9))
        throw precondition_error("base point must be at least rho inside the domain");

    SectionChain ch;
    ch.cfg = cfg;
    ch.x = x;
    ch.rho = rho;
    ch.b = f(x(0), x(1));

    double fmin = std::numeric_limits<double>::infinity(), fmax = -fmin;
    const int nscan = 49;
    for (int j = 0; j < nscan; ++j)
        for (int i = 0; i < nscan; ++i) {
            double zx = x(0) + rho * (2.0 * i / (nscan - 1) - 1.0);
            double zy = x(1) + rho * (2.0 * j / (nscan - 1) - 1.0);
            if (std::hypot(zx - x(0), zy - x(1)) > rho) continue;
            double val = f(zx, zy);
            fmin = std::min(fmin, val);
            fmax = std::max(fmax, val);
        }
    if (!(fmin >= 1 - 1e-9))
        throw precondition_error("rhs must be at least 1 near the base point");
    ch.f_max = fmax;
    ch.value_v = v.interp(x(0), x(1));
    ch.grad_v = v.gradient_at(x);

    std::vector<Vec> ballpts;
    for (int i = 0; i < 32; ++i) {
        double t = 2 * M_PI * i / 32;
        ballpts.push_back(vec2(x(0) + 0.995 * rho * std::cos(t), x(1) + 0.995 * rho * std::sin(t)));
    }
    // Scales below the measurement lattice would read as zero oscillation no
    // matter the rhs, so the grid starts a few pitches up.
    const int mcells = 192;
    double pitch = 2 * 0.995 * rho / mcells;
    ch.omega = estimate_modulus(f, ConvexPolytope(ballpts), mcells,
                                log_grid(3 * pitch, rho, cfg.per_decade), cfg.far_pairs, cfg.seed);
    ch.q_in = choose_q_in(ch.omega, rho, cfg.C_mc);

    double H = first_section_height(v, x, ch.q_in);
    Section s0 = extract_section(v, x, H);
    Mat2 A = normalize_section(s0, ch.f_max).first.A;
    {
        // Re-anchor at the base point; rescale once if an inclusion radius
        // falls outside [1, 2], which the normalizer only targets up to the
        // contour error of the discrete section.
        auto [ri, ro] = mapped_radii(s0.boundary, AffineMap::anchored(Mat(A), vec2(x(0), x(1))));
        if (ri < 1.0 && ri > 0)
            A *= kInclRescue / ri;
        else if (ro > 2.0)
            A *= 2.0 / (kInclRescue * ro);
    }
    ch.tau = AffineMap::anchored(Mat(A), vec2(x(0), x(1)));
    double dr2 = ch.tau.det_root() * ch.tau.det_root();
    double h0 = dr2 * H / ch.b;
    if (!(h0 > 0) || !std::isfinite(h0)) throw numeric_error("degenerate first section height");

    Mat2 P = Mat2::Identity();
    ConvexPolytope sec = s0.boundary;
    double h_orig = H;
    double prev_diam = std::numeric_limits<double>::infinity();
    double prev_delta = 0;
    std::vector<double> deltas;
    Mat2 prev_hv = Mat2::Identity();
    bool have_hv = false;

    for (int k = 0;; ++k) {
        if (k >= cfg.K_max) {
            ch.termination = "kmax";
            break;
        }
        double diam = sec.diameter();
        if (diam < 8.0 * v.grid->h) {
            ch.termination = "resolution";
            break;
        }
        if (!(diam < prev_diam)) {
            ch.termination = "rejected: diameter decrease";
            break;
        }
        prev_diam = diam;

        ScalarField wk = solve_unit(Grid::make(sec, section_cells(sec, cfg)));
        const Grid& gk = *wk.grid;

        double delta = 0;
        for (int j = 0; j < gk.ny; ++j)
            for (int i = 0; i < gk.nx; ++i)
                if (gk.node_valid(i, j))
                    delta = std::max(delta, std::abs(f(gk.xat(i), gk.yat(j)) / ch.b - 1.0));
        for (const auto& vert : sec.vertices)
            delta = std::max(delta, std::abs(f(vert(0), vert(1)) / ch.b - 1.0));

        AffineMap Q = AffineMap::anchored(Mat(P * A), vec2(x(0), x(1)));
        Mat2 Qa = Q.A;
        double scale = Q.det_root() * Q.det_root();

        Mat2 Hw = wk.hessian_at(x);
        double det_gap = 0;
        Mat2 Gp = unit_det(pushforward_hessian(Q, Mat(Hw)), &det_gap);
        Mat2 T2 = sqrt_spd(Gp) / std::sqrt(cfg.h_c);

        double vw = 0;
        for (int j = 0; j < gk.ny; ++j)
            for (int i = 0; i < gk.nx; ++i) {
                if (!gk.node_valid(i, j)) continue;
                double tv = v.interp(gk.xat(i), gk.yat(j));
                if (!std::isfinite(tv)) continue;
                tv -= ch.value_v + ch.grad_v(0) * (gk.xat(i) - x(0)) + ch.grad_v(1) * (gk.yat(j) - x(1));
                vw = std::max(vw, std::abs((tv - h_orig) / ch.b - wk.at(i, j)));
            }
        vw *= scale;

        Vec2 gresp = scale * Qa.inverse().transpose() * wk.gradient_at(x);

        double M = 1.0;
        if (k >= 2) {
            double ssum = 0;
            for (int j = 0; j + 2 <= k; ++j) ssum += deltas[j];
            M = std::exp(cfg.growth_coef() * ssum);
        }

        auto [r_in, r_out] = mapped_radii(sec, Q);
        double defect = std::max(std::abs(0.5 * r_in * r_in - 1.0),
                                 std::abs(0.5 * r_out * r_out - 1.0));
        Eigen::JacobiSVD<Mat2> psvd(P);
        double ecc = psvd.singularValues()(0) / std::max(psvd.singularValues()(1), 1e-300);

        ChainStep st;
        st.k = k;
        st.height = k == 0 ? h0 : std::pow(cfg.h_c, k);
        st.height_orig = h_orig;
        st.P = linear_map(P);
        st.T = linear_map(T2);
        st.hessian_center = Gp;
        st.delta = delta;
        st.M = M;
        st.ecc = ecc;
        st.r_in = r_in;
        st.r_out = r_out;
        st.defect = defect;
        st.det_gap = det_gap;
        st.vw_gap = vw;
        st.grad_center = gresp.norm();
        st.diameter = diam;
        st.section = sec;
        st.w = std::make_shared<ScalarField>(std::move(wk));

        st.checks.push_back(mk_check("delta budget", delta, cfg.C_mc + cfg.budget_slack));
        st.checks.push_back(mk_check("delta vs modulus", delta,
                                     cfg.omega_slack * ch.omega.eval(2 * op_norm(Qa.inverse())) + 1e-3));
        st.checks.push_back(mk_check("solution sandwich", vw, 2 * delta + cfg.vw_tol));
        st.checks.push_back(mk_check("gradient response", st.grad_center,
                                     cfg.kappa * std::sqrt(delta) + cfg.grad_floor));
        st.checks.push_back(mk_check("ball inclusion", std::max(1.0 - r_in, r_out - 2.0),
                                     k == 0 ? cfg.incl_tol_first : cfg.incl_tol));
        if (k >= 1) {
            st.checks.push_back(mk_check("radius defect", defect,
                                         cfg.nd2_dh * prev_delta / cfg.h_c +
                                             cfg.nd2_sh * std::sqrt(cfg.h_c) + cfg.nd2_floor));
            st.checks.push_back(mk_check("hessian gap", spec_norm(Gp - Mat2::Identity()),
                                         cfg.C5hat * prev_delta / cfg.h_c + cfg.g_floor));
            st.checks.push_back(mk_check("eccentricity growth", ecc * ecc,
                                         (cfg.C2hat / cfg.c2hat) * M * M * 1.01));
        }
        if (k >= 1 && have_hv) {
            double M_next = std::exp(cfg.growth_coef() *
                                     std::accumulate(deltas.begin(), deltas.end(), 0.0));
            Mat2 Hv = pushforward_hessian(ch.tau, Mat(Hw));
            st.checks.push_back(mk_check("hessian increment", spec_norm(Hv - prev_hv),
                                         cfg.C2hat * (M_next - M) + cfg.C2hat * cfg.g_floor));
        }

        ch.steps.push_back(st);
        std::string failed;
        for (const auto& c : st.checks)
            if (!c.pass) {
                failed = c.name;
                break;
            }
        if (!failed.empty()) {
            ch.termination = "rejected: " + failed;
            break;
        }

        deltas.push_back(delta);
        prev_delta = delta;
        prev_hv = pushforward_hessian(ch.tau, Mat(Hw));
        have_hv = true;
        P = T2 * P;

        double h_next = ch.b * std::pow(cfg.h_c, k + 1) / dr2;
        if (h_next >= h_orig) {
            ch.termination = "rejected: height ladder";
            break;
        }
        try {
            sec = extract_section(v, x, h_next).boundary;
        } catch (const numeric_error&) {
            ch.termination = "resolution";
            break;
        }
        h_orig = h_next;
    }
    return ch;
}

std::pair<Mat2, std::vector<double>> hessian_limit(const SectionChain& ch, const ScalarField& v,
                                                   const Vec2& x) {
    if (ch.steps.size() < 3) throw precondition_error("need at least three chain steps");
    if ((x - ch.x).norm() > 1e-9 * (1 + x.norm()))
        throw precondition_error("base point differs from the chain's");

    Mat2 Hfd = v.hessian_at(x);
    double hn = spec_norm(Hfd);
    std::vector<double> trace;
    Mat2 last = Mat2::Identity();
    for (const auto& st : ch.steps) {
        if (!st.w) throw resolution_error("chain step carries no solution");
        last = ch.b * st.w->hessian_at(x);
        trace.push_back(spec_norm(last - Hfd));
    }
    // A rise near the discretization floor is expected when the last sections
    // approach the grid pitch; a rise at an elevated level is a stall.
    for (std::size_t i = 1; i + 1 < trace.size(); ++i)
        if (trace[i + 1] > 1.1 * trace[i] + 5e-4 * hn && trace[i + 1] > 5e-3 * hn)
            throw divergence_error("hessian trace rises at step " + std::to_string(i + 1));

    Mat2 Hv = pushforward_hessian(ch.tau, Mat(ch.steps.back().w->hessian_at(x)));
    if (spec_norm(Hv) > ch.cfg.C2hat * ch.steps.back().M * 1.05 + 1e-9)
        throw numeric_error("limit hessian exceeds the growth window");

    return {last, trace};
}

ScalarField backward_transform(const SectionChain& ch, int k, const ScalarField& v) {
    const ChainStep* found = nullptr;
    for (const auto& st : ch.steps)
        if (st.k == k) found = &st;
    if (!found) throw precondition_error("no such chain step");
    if (!found->w) throw resolution_error("chain step carries no solution");

    Vec2 gv = v.gradient_at(ch.x);
    ScalarField out = *found->w;
    const Grid& g = *out.grid;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!g.node_valid(i, j)) continue;
            out.at(i, j) += (gv(0) * (g.xat(i) - ch.x(0)) + gv(1) * (g.yat(j) - ch.x(1))) / ch.b;
        }
    return out;
}

double backward_gap(const SectionChain& ch, int k, const ScalarField& v) {
    ScalarField wv = backward_transform(ch, k, v);
    const Grid& g = *wv.grid;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!g.node_valid(i, j)) continue;
            double val = v.interp(g.xat(i), g.yat(j));
            if (!std::isfinite(val)) continue;
            double r = val - ch.b * wv.at(i, j);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    if (!(hi >= lo)) throw resolution_error("no usable nodes for the constancy defect");
    return hi - lo;
}

void save_chain(const SectionChain& ch, const std::string& path) {
    nlohmann::ordered_json j;
    j["x"] = {ch.x(0), ch.x(1)};
    j["b"] = ch.b;
    j["f_max"] = ch.f_max;
    j["rho"] = ch.rho;
    j["q_in"] = ch.q_in;
    j["tau"] = {{"A", jmat(ch.tau.A)}, {"t", {ch.tau.t(0), ch.tau.t(1)}}};
    j["grad_v"] = {ch.grad_v(0), ch.grad_v(1)};
    j["termination"] = ch.termination;
    j["config"] = {{"h_c", ch.cfg.h_c},       {"C_mc", ch.cfg.C_mc},
                   {"K_max", ch.cfg.K_max},   {"C5hat", ch.cfg.C5hat},
                   {"C2hat", ch.cfg.C2hat},   {"c2hat", ch.cfg.c2hat},
                   {"kappa", ch.cfg.kappa},   {"growth_coef", ch.cfg.growth_coef()}};
    j["steps"] = nlohmann::ordered_json::array();
    for (const auto& st : ch.steps) {
        nlohmann::ordered_json s;
        s["k"] = st.k;
        s["height"] = st.height;
        s["height_orig"] = st.height_orig;
        s["P"] = jmat(st.P.A);
        s["T"] = jmat(st.T.A);
        s["hessian_center"] = jmat(Mat(st.hessian_center));
        s["delta"] = st.delta;
        s["M"] = st.M;
        s["ecc"] = st.ecc;
        s["r_in"] = st.r_in;
        s["r_out"] = st.r_out;
        s["defect"] = st.defect;
        s["det_gap"] = st.det_gap;
        s["vw_gap"] = st.vw_gap;
        s["grad_center"] = st.grad_center;
        s["diameter"] = st.diameter;
        s["checks"] = nlohmann::ordered_json::array();
        for (const auto& c : st.checks)
            s["checks"].push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}});
        j["steps"].push_back(std::move(s));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw error("cannot write " + path);
    out << j.dump(2) << '\n';
}

} // namespace malab
