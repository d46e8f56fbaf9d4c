#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "malab/common.hpp"
#include "malab/solver.hpp"

using namespace malab;

namespace {

ConvexPolytope regular_polygon(int m, double r) {
    std::vector<Vec> v;
    for (int k = 0; k < m; ++k) {
        double a = 2 * M_PI * k / m;
        v.push_back(vec2(r * std::cos(a), r * std::sin(a)));
    }
    return ConvexPolytope(std::move(v));
}

// det(D^2 v)^(1/2) for v = exp(|x|^2 / 2) is exp(|x|^2 / 2) sqrt(1 + |x|^2).
double manufactured_v(double x, double y) { return std::exp((x * x + y * y) / 2); }
double manufactured_f(double x, double y) {
    double r2 = x * x + y * y;
    return std::exp(r2 / 2) * std::sqrt(1 + r2);
}

double sup_error(const ScalarField& u, const Sampler& exact) {
    double e = 0;
    const Grid& g = *u.grid;
    for (int id : g.unodes) {
        int i = id % g.nx, j = id / g.nx;
        e = std::max(e, std::abs(u.values[id] - exact(g.xat(i), g.yat(j))));
    }
    return e;
}

} // namespace

TEST_CASE("quadratic data is reproduced to solver tolerance") {
    auto disk = regular_polygon(64, 1.0);
    auto quad = [](double x, double y) { return 0.5 * (x * x + y * y) - 0.5; };
    for (bool refined : {true, false}) {
        SolverConfig cfg;
        cfg.refined_min = refined;
        SolveReport rep;
        auto g = Grid::make(disk, 33);
        ScalarField u = solve_dirichlet(g, [](double, double) { return 1.0; }, quad, cfg, &rep);
        CHECK(sup_error(u, quad) < 1e-6);
        CHECK(rep.residual <= cfg.tol);
        CHECK(rep.min_second_difference > 0.9); // Hessian is the identity
    }
}

TEST_CASE("solver output is deterministic") {
    auto disk = regular_polygon(32, 1.0);
    auto g = Grid::make(disk, 17);
    ScalarField a = solve_unit(g);
    ScalarField b = solve_unit(g);
    REQUIRE(a.values.size() == b.values.size());
    CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
}

TEST_CASE("smooth case: accuracy and Newton behavior") {
    auto disk = regular_polygon(64, 1.0);
    double err[3];
    int cells[3] = {33, 65, 129};
    for (int k = 0; k < 3; ++k) {
        SolveReport rep;
        auto g = Grid::make(disk, cells[k]);
        ScalarField u = solve_dirichlet(g, manufactured_f, manufactured_v, {}, &rep);
        err[k] = sup_error(u, manufactured_v);
        CHECK(rep.refined_active);
        CHECK(rep.defect_rounds == 1);
        // A correct Jacobian converges without relaxation rescues.
        CHECK(rep.gs_sweeps == 0);
        CHECK(rep.newton_iters <= 30);
        CHECK(rep.min_second_difference > 0);
    }
    CHECK(err[0] < 1e-2);
    CHECK(err[1] < 2e-3);
    CHECK(err[2] < 5e-3); // the absolute bar at this resolution

    // The floor compensation must beat the plain minimum once the h^2 part
    // is below the directional floor.
    SolverConfig mono;
    mono.refined_min = false;
    auto g = Grid::make(disk, 129);
    double em = sup_error(solve_dirichlet(g, manufactured_f, manufactured_v, mono), manufactured_v);
    CHECK(err[2] < em);
}

TEST_CASE("comparison principle and minimum sandwich") {
    SolverConfig cfg;
    auto b1 = Grid::make(regular_polygon(64, 1.0), 65);
    auto b2 = Grid::make(regular_polygon(64, 2.0), 65);
    auto sq = Grid::make(
        ConvexPolytope({vec2(-1.2, -1.2), vec2(1.2, -1.2), vec2(1.2, 1.2), vec2(-1.2, 1.2)}), 65);

    ScalarField u1 = solve_unit(b1, cfg);
    ScalarField u2 = solve_unit(b2, cfg);
    ScalarField us = solve_unit(sq, cfg);

    double m1 = u1.min_value(), m2 = u2.min_value(), ms = us.min_value();
    CHECK(m1 == doctest::Approx(-0.5).epsilon(0.01));
    CHECK(m2 == doctest::Approx(-2.0).epsilon(0.01));
    // Larger domains push the solution down; the square sits between disks.
    CHECK(ms <= m1 + 1e-8);
    CHECK(ms >= m2 - 1e-8);

    // Larger right-hand side pushes the solution down on a fixed domain.
    ScalarField v1 = solve_unit(b1, cfg);
    ScalarField v2 = solve_dirichlet(
        b1, [](double, double) { return 1.3; }, [](double, double) { return 0.0; }, cfg);
    for (int id : b1->unodes) CHECK(v2.values[id] <= v1.values[id] + 1e-9);
}

TEST_CASE("right-hand side preconditions") {
    auto g = Grid::make(regular_polygon(32, 1.0), 17);
    CHECK_THROWS_AS(solve_dirichlet(
                        g, [](double, double) { return 0.0; },
                        [](double, double) { return 0.0; }),
                    precondition_error);
    CHECK_THROWS_AS(solve_dirichlet(
                        g, [](double x, double) { return x > 0 ? 1.0 : -1.0; },
                        [](double, double) { return 0.0; }),
                    precondition_error);
    CHECK_THROWS_AS(solve_dirichlet(
                        g, [](double, double) { return std::nan(""); },
                        [](double, double) { return 0.0; }),
                    precondition_error);
}
