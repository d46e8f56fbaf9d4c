#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "malab/bounds.hpp"
#include "malab/chain.hpp"
#include "malab/common.hpp"
#include "malab/geometry.hpp"
#include "malab/grid.hpp"
#include "malab/solver.hpp"

using namespace malab;

namespace {

Mat2 rot(double a) {
    Mat2 r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
}

// Polygon inscribed in the ellipse { z : z^T M z / 2 < level }.
ConvexPolytope quad_section(const Mat2& M, double level, int n = 128) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(M);
    Mat2 axes = es.eigenvectors();
    Vec2 lam = es.eigenvalues();
    std::vector<Vec> pts;
    for (int i = 0; i < n; ++i) {
        double t = 2 * M_PI * i / n;
        Vec2 w(std::sqrt(2 * level / lam(0)) * std::cos(t),
               std::sqrt(2 * level / lam(1)) * std::sin(t));
        Vec2 z = axes * w;
        pts.push_back(vec2(z(0), z(1)));
    }
    return ConvexPolytope(pts);
}

ConvexPolytope disk(double r, int n = 64, double cx = 0, double cy = 0) {
    std::vector<Vec> pts;
    for (int i = 0; i < n; ++i) {
        double t = 2 * M_PI * i / n;
        pts.push_back(vec2(cx + r * std::cos(t), cy + r * std::sin(t)));
    }
    return ConvexPolytope(pts);
}

ConvexPolytope box(double r) {
    std::vector<Vec> pts = {vec2(-r, -r), vec2(r, -r), vec2(r, r), vec2(-r, r)};
    return ConvexPolytope(pts);
}

ScalarField sampled(const ConvexPolytope& dom, int cells, const Sampler& f) {
    return ScalarField(Grid::make(dom, cells), f);
}

// Closed-form square root of a 2x2 SPD matrix; independent of the
// eigen-decomposition route used by the library.
Mat2 sqrt_closed(const Mat2& M) {
    double d = std::sqrt(M.determinant());
    double t = M.trace() + 2 * d;
    return (M + d * Mat2::Identity()) / std::sqrt(t);
}

double op_norm(const Mat2& A) {
    Eigen::JacobiSVD<Mat2> svd(A);
    return svd.singularValues()(0);
}

double sigma_min(const Mat2& A) {
    Eigen::JacobiSVD<Mat2> svd(A);
    return svd.singularValues()(1);
}

const StepCheck& named_check(const ChainStep& st, const std::string& name) {
    for (const auto& c : st.checks)
        if (c.name == name) return c;
    throw std::runtime_error("missing check " + name);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("perturbation step recovers an anisotropic quadratic") {
    Mat2 M = rot(0.4) * Eigen::DiagonalMatrix<double, 2>(1.44, 1.0 / 1.44) * rot(0.4).transpose();
    ConvexPolytope dom = quad_section(M, 1.0);
    ScalarField u = sampled(dom, 192, [&](double x, double y) {
        Vec2 z(x, y);
        return 0.5 * z.dot(M * z) - 1.0;
    });

    auto [T, d] = perturbation_step(u, 0.2, 0.0);

    // The map must reproduce h^{-1/2} sqrt(D^2 w(0)) with w the quadratic itself.
    Mat2 Texp = sqrt_closed(M) / std::sqrt(0.2);
    Mat2 Ta = T.A;
    CHECK((Ta - Texp).norm() <= 0.03 * Texp.norm());
    CHECK(T.det_root() == doctest::Approx(1.0 / std::sqrt(0.2)).epsilon(1e-8));
    // Anchored at the minimum, which sits at the origin.
    CHECK(T.inverse().apply(vec2(0, 0)).norm() <= 5e-3);

    CHECK(d.vw_gap <= 5e-3);
    CHECK(d.grad_norm <= 0.02);
    CHECK(d.hess_gap <= calib::g_floor);
    CHECK(d.defect <= 0.04);
    CHECK(d.r_in >= 1.33);
    CHECK(d.r_out <= 1.50);
    CHECK(d.ok());
    for (const auto& c : d.checks) {
        INFO(c.name, " lhs=", c.lhs, " rhs=", c.rhs);
        CHECK(c.pass);
    }
}

TEST_CASE("perturbation step rejects out of range inputs") {
    Mat2 M = rot(0.4) * Eigen::DiagonalMatrix<double, 2>(1.44, 1.0 / 1.44) * rot(0.4).transpose();
    ConvexPolytope dom = quad_section(M, 1.0);
    ScalarField u = sampled(dom, 96, [&](double x, double y) {
        Vec2 z(x, y);
        return 0.5 * z.dot(M * z) - 1.0;
    });

    try {
        perturbation_step(u, 0.2, 0.06);
        FAIL("oscillation budget not enforced");
    } catch (const step_rejection& e) {
        CHECK(e.failed_inequality.find("delta") != std::string::npos);
    }
    try {
        perturbation_step(u, 0.25, 0.0);
        FAIL("height cap not enforced");
    } catch (const step_rejection& e) {
        CHECK(e.failed_inequality.find("h_c") != std::string::npos);
    }
    try {
        perturbation_step(u, 0.04, 0.045);
        FAIL("height admissibility not enforced");
    } catch (const step_rejection& e) {
        CHECK(e.failed_inequality.find("C4") != std::string::npos);
    }

    ConvexPolytope big = quad_section(M, 4.0);
    ScalarField u2 = sampled(big, 96, [&](double x, double y) {
        Vec2 z(x, y);
        return 0.5 * z.dot(M * z) - 4.0;
    });
    try {
        perturbation_step(u2, 0.2, 0.0);
        FAIL("quasi-normalization not enforced");
    } catch (const step_rejection& e) {
        CHECK(e.failed_inequality.find("B1") != std::string::npos);
    }
}

TEST_CASE("hessian response stays within the frozen envelope across heights") {
    ConvexPolytope dom = quad_section(rot(0.3) * Eigen::DiagonalMatrix<double, 2>(2.0 / (1.45 * 1.45), 2.0 / (1.08 * 1.08)) * rot(0.3).transpose(),
                                      1.0);
    auto grid = Grid::make(dom, 129);
    auto g = [](double x, double) { return 1.0 + 0.01 * x; };
    ScalarField u = solve_dirichlet(grid, g, [](double, double) { return 0.0; });

    double delta = 0;
    for (int j = 0; j < grid->ny; ++j)
        for (int i = 0; i < grid->nx; ++i)
            if (grid->node_valid(i, j)) delta = std::max(delta, std::abs(g(grid->xat(i), 0) - 1.0));
    CHECK(delta >= 0.01);
    CHECK(delta <= 0.05);

    std::vector<double> ratios;
    for (int i = 0; i < 10; ++i) {
        double h = 0.2 * std::pow(0.045 / 0.2, i / 9.0);
        auto [T, d] = perturbation_step(u, h, delta);
        INFO("h=", h, " hess_gap=", d.hess_gap);
        CHECK(d.hess_gap <= calib::C5_hat * delta / h + calib::g_floor);
        CHECK(d.ok());
        ratios.push_back(d.hess_gap * h / delta);
    }
    double rmax = *std::max_element(ratios.begin(), ratios.end());
    MESSAGE("response ratios min=", *std::min_element(ratios.begin(), ratios.end()), " max=", rmax);
    CHECK(rmax <= 1.3);
}

TEST_CASE("constant rhs chain is exact and serializes deterministically") {
    auto grid = Grid::make(disk(1.5), 193);
    ScalarField v = solve_unit(grid);
    Vec2 x(0.12, -0.07);
    auto f = [](double, double) { return 1.0; };

    SectionChain ch = run_chain(v, x, f, 0.4);
    REQUIRE(ch.steps.size() >= 3);
    CHECK(ch.termination == "resolution");
    CHECK(ch.q_in == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(ch.b == doctest::Approx(1.0));

    double prev_diam = 1e30;
    for (const auto& st : ch.steps) {
        INFO("step ", st.k);
        CHECK(st.delta == 0.0);
        CHECK(st.M == 1.0);
        CHECK(st.diameter < prev_diam);
        prev_diam = st.diameter;
        for (const auto& c : st.checks) {
            INFO(c.name, " lhs=", c.lhs, " rhs=", c.rhs);
            CHECK(c.pass);
        }
        Mat2 Ta = st.T.A;
        CHECK(st.T.det_root() == doctest::Approx(1.0 / std::sqrt(0.2)).epsilon(1e-8));
        CHECK(st.P.det_root() == doctest::Approx(std::pow(0.2, -st.k / 2.0)).epsilon(1e-6));
        CHECK(st.ecc >= 1.0);
        CHECK(st.ecc * st.ecc <= (calib::C2_hat / calib::c2_hat) * st.M * st.M * 1.01);
        if (st.k >= 1) {
            // Contraction of the inverse map, and the two-sided ball fit.
            CHECK(sigma_min(Ta) >= 1.0 / (1.2 * std::sqrt(0.2)) * 0.999);
            CHECK(std::abs(0.5 * st.r_in * st.r_in - 1.0) <= 0.05);
            CHECK(std::abs(0.5 * st.r_out * st.r_out - 1.0) <= 0.05);
        } else {
            CHECK(st.r_in >= 0.9);
            CHECK(st.r_out <= 2.1);
        }
        MESSAGE("k=", st.k, " vw=", st.vw_gap, " grad=", st.grad_center, " det_gap=", st.det_gap);
        CHECK(st.vw_gap <= 0.03);
        CHECK(st.grad_center <= 0.02);
    }

    auto dir = std::filesystem::temp_directory_path();
    auto p1 = dir / "malab_chain_a.json";
    auto p2 = dir / "malab_chain_b.json";
    save_chain(ch, p1.string());
    save_chain(ch, p2.string());
    std::string s1 = slurp(p1), s2 = slurp(p2);
    CHECK(!s1.empty());
    CHECK(s1 == s2);
    auto j = nlohmann::json::parse(s1);
    CHECK(j["termination"] == "resolution");
    CHECK(j["steps"].size() == ch.steps.size());
    CHECK(j["steps"][0].contains("P"));
    CHECK(j["steps"][0].contains("T"));
    CHECK(j["steps"][0].contains("checks"));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);

    auto [Hlim, trace] = hessian_limit(ch, v, x);
    REQUIRE(trace.size() == ch.steps.size());
    Mat2 Hfd = v.hessian_at(x);
    CHECK(Hlim.determinant() == doctest::Approx(1.0).epsilon(0.1));
    CHECK(trace.back() <= 0.1 * op_norm(Hfd) + 1e-12);

    double gap1 = backward_gap(ch, 1, v);
    MESSAGE("backward gap k=1: ", gap1, " height_orig=", ch.steps[1].height_orig);
    CHECK(gap1 <= 0.02 * ch.steps[1].height_orig);
}

TEST_CASE("holder rhs chain grows within the integral cap") {
    auto grid = Grid::make(disk(1.5), 193);
    Vec2 x(0.12, -0.07);
    auto f = [&](double zx, double zy) { return 1.0 + 0.08 * std::sqrt(std::hypot(zx - x(0), zy - x(1))); };
    ScalarField v = solve_dirichlet(grid, f, [](double, double) { return 0.0; });

    ChainConfig cfg;
    cfg.C_mc = 0.05;
    SectionChain ch = run_chain(v, x, f, 0.5, cfg);
    REQUIRE(ch.steps.size() >= 3);
    CHECK(ch.q_in >= 0.2);
    CHECK(ch.q_in <= 0.45);
    CHECK(ch.b == doctest::Approx(1.0).epsilon(1e-6));

    // Cap from the growth integral: M_k <= 2 exp(beta int_0^{q_in} w(q)/q dq).
    BoundConstants bc = BoundConstants::defaults();
    bc.C_mc = cfg.C_mc;
    double E0 = std::exp(bc.beta() * 0.08 * 2.0 * std::sqrt(ch.q_in));
    MESSAGE("E0 cap = ", E0);

    double prev_M = 1.0;
    for (const auto& st : ch.steps) {
        INFO("step ", st.k);
        CHECK(st.delta >= 0.0);
        CHECK(st.delta <= cfg.C_mc + cfg.budget_slack);
        CHECK(st.M >= prev_M);
        prev_M = st.M;
        CHECK(st.M <= 2.0 * E0);
        for (const auto& c : st.checks) {
            INFO(c.name, " lhs=", c.lhs, " rhs=", c.rhs);
            CHECK(c.pass);
        }
        CHECK(named_check(st, "delta vs modulus").pass);
        if (st.k >= 1) CHECK(sigma_min(Mat2(st.T.A)) >= 1.0 / (1.2 * std::sqrt(0.2)) * 0.999);
    }
    CHECK(ch.steps.back().M > 1.0);
    MESSAGE("q_in=", ch.q_in, " M_last=", ch.steps.back().M);
}

TEST_CASE("quadratic chain recovers the hessian") {
    Mat2 M = rot(0.5) * Eigen::DiagonalMatrix<double, 2>(2.0, 0.9) * rot(0.5).transpose();
    ScalarField v = sampled(box(1.0), 513, [&](double x, double y) {
        Vec2 z(x, y);
        return 0.5 * z.dot(M * z);
    });
    Vec2 x(0.05, -0.02);
    double b = std::sqrt(M.determinant());
    auto f = [&](double, double) { return b; };

    SectionChain ch = run_chain(v, x, f, 0.25);
    REQUIRE(ch.steps.size() >= 3);
    CHECK(ch.b == doctest::Approx(b).epsilon(1e-12));
    for (const auto& st : ch.steps)
        for (const auto& c : st.checks) {
            INFO("step ", st.k, " ", c.name, " lhs=", c.lhs, " rhs=", c.rhs);
            CHECK(c.pass);
        }

    auto [Hlim, trace] = hessian_limit(ch, v, x);
    CHECK((Hlim - M).norm() <= 0.02 * M.norm());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        INFO("trace[", i, "]=", trace[i]);
        CHECK(trace[i] <= 0.02 * op_norm(M));
    }

    // v - b w_v is constant on the mapped-back solution, up to numerics.
    double gap1 = backward_gap(ch, 1, v);
    MESSAGE("backward gap k=1: ", gap1);
    CHECK(gap1 <= 0.02 * b * ch.steps[1].height_orig);
}

TEST_CASE("smooth rhs chain converges and transforms back") {
    double eps = 0.5;
    ScalarField v = sampled(box(1.0), 1025, [&](double x, double y) {
        return 0.5 * (x * x + y * y) + eps / 12.0 * (x * x * x * x + y * y * y * y);
    });
    auto f = [&](double x, double y) {
        return std::sqrt((1.0 + eps * x * x) * (1.0 + eps * y * y));
    };
    Vec2 x(0.3, -0.2);
    Mat2 Hexact = Eigen::DiagonalMatrix<double, 2>(1.0 + eps * x(0) * x(0), 1.0 + eps * x(1) * x(1));

    ChainConfig cfg;
    cfg.C_mc = 0.05;
    SectionChain ch = run_chain(v, x, f, 0.3, cfg);
    REQUIRE(ch.steps.size() >= 3);
    for (const auto& st : ch.steps)
        for (const auto& c : st.checks) {
            INFO("step ", st.k, " ", c.name, " lhs=", c.lhs, " rhs=", c.rhs);
            CHECK(c.pass);
        }

    auto [Hlim, trace] = hessian_limit(ch, v, x);
    MESSAGE("hessian error ", (Hlim - Hexact).norm() / Hexact.norm());
    CHECK((Hlim - Hexact).norm() <= 0.05 * Hexact.norm());

    std::vector<double> gaps;
    for (int k = 1; k < (int)ch.steps.size(); ++k) {
        gaps.push_back(backward_gap(ch, k, v));
        MESSAGE("backward gap k=", k, ": ", gaps.back());
    }
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) CHECK(gaps[i + 1] <= 1.1 * gaps[i]);
    CHECK(gaps.back() <= 0.8 * gaps.front());

    // Mapped-back curvature matches the original, scaled by the rhs value.
    int klast = ch.steps.back().k;
    ScalarField wv = backward_transform(ch, klast, v);
    Mat2 Hback = ch.b * wv.hessian_at(x);
    CHECK((Hback - Hexact).norm() <= 0.05 * Hexact.norm());
}

TEST_CASE("log oscillating rhs stalls the hessian trace") {
    auto grid = Grid::make(disk(1.2), 193);
    Vec2 x(0.05, 0.03);
    double s = 0.045, klog = 4.0, r0 = 0.01;
    auto f = [&](double zx, double zy) {
        double r = std::hypot(zx - x(0), zy - x(1));
        return 1.0 + 0.5 * s * (1.0 + std::cos(klog * std::log(r / r0 + 1e-7)));
    };
    ScalarField v = solve_dirichlet(grid, f, [](double, double) { return 0.0; });

    ChainConfig cfg;
    cfg.C_mc = 0.05;
    SectionChain ch = run_chain(v, x, f, 0.45, cfg);
    REQUIRE(ch.steps.size() >= 3);

    CHECK_THROWS_AS((void)hessian_limit(ch, v, x), divergence_error);
}

TEST_CASE("chain precondition failures throw") {
    auto grid = Grid::make(disk(1.5), 97);
    ScalarField v = solve_unit(grid);
    auto one = [](double, double) { return 1.0; };

    // Oscillation never settles below the budget.
    auto jump = [](double zx, double) { return zx > 0.12 ? 1.2 : 1.0; };
    CHECK_THROWS_AS((void)run_chain(v, Vec2(0.12, -0.07), jump, 0.3), no_admissible_error);

    // Base point too close to the boundary.
    CHECK_THROWS_AS((void)run_chain(v, Vec2(1.45, 0.0), one, 0.3), precondition_error);

    // Rhs dips below one.
    auto low = [](double, double) { return 0.9; };
    CHECK_THROWS_AS((void)run_chain(v, Vec2(0.12, -0.07), low, 0.3), precondition_error);

    CHECK_THROWS_AS((void)run_chain(v, Vec2(0.12, -0.07), one, -0.1), precondition_error);

    ChainConfig cfg;
    cfg.K_max = 1;
    SectionChain ch = run_chain(v, Vec2(0.12, -0.07), one, 0.3, cfg);
    CHECK(ch.termination == "kmax");
    CHECK(ch.steps.size() == 1);
    CHECK_THROWS_AS((void)hessian_limit(ch, v, Vec2(0.12, -0.07)), precondition_error);
    CHECK_THROWS_AS((void)backward_transform(ch, 99, v), precondition_error);
}
