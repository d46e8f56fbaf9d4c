#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "malab/geometry.hpp"

namespace malab {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

using Sampler = std::function<double(double, double)>;

enum class NodeKind : std::uint8_t { exterior = 0, cut = 1, interior = 2 };

// One orthogonal direction pair of the wide stencil, integer offsets.
struct PairDir {
    Eigen::Vector2i a, b;
};

// Uniform node grid over the bounding box of a convex polygon. Nodes strictly
// inside the polygon carry unknowns; every stencil arm that would leave the
// polygon is clipped at the boundary with the exact crossing fraction.
struct Grid {
    ConvexPolytope domain;
    double ox = 0, oy = 0, h = 1;
    int nx = 0, ny = 0;
    int pair_count = 8;
    bool connected = true;

    std::vector<NodeKind> kind;    // nx*ny
    std::vector<std::int32_t> unknown; // node -> unknown index or -1
    std::vector<std::int32_t> unodes;  // unknown index -> node

    // nb >= 0: neighbor unknown; nb < 0: clipped at (bx,by), theta = fraction
    // of the full step |offset|*h that remains inside.
    struct Arm {
        std::int32_t nb = -1;
        double theta = 1;
        double bx = 0, by = 0;
    };
    std::vector<Arm> arms; // ((u * ndirs + d) * 2 + side), side 0 fwd, 1 bwd

    static const std::array<PairDir, 8>& direction_pairs();
    // Direction d in [0, 2*pair_count): even = pair lead, odd = its orthogonal.
    Eigen::Vector2i dir(int d) const;
    int ndirs() const { return 2 * pair_count; }

    int node_id(int i, int j) const { return j * nx + i; }
    double xat(int i) const { return ox + i * h; }
    double yat(int j) const { return oy + j * h; }
    bool in_range(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    bool node_valid(int i, int j) const {
        return in_range(i, j) && kind[node_id(i, j)] != NodeKind::exterior;
    }
    const Arm& arm(int u, int d, int side) const { return arms[(u * ndirs() + d) * 2 + side]; }
    std::size_t unknown_count() const { return unodes.size(); }

    static std::shared_ptr<const Grid> make(const ConvexPolytope& domain, int cells_across,
                                            int pair_count = 8);
    static std::shared_ptr<const Grid> make_layout(const ConvexPolytope& domain, double ox,
                                                   double oy, double h, int nx, int ny,
                                                   int pair_count);
};

// Sampled scalar function on a Grid; exterior nodes hold NaN.
struct ScalarField {
    std::shared_ptr<const Grid> grid;
    std::vector<double> values; // nx*ny

    ScalarField() = default;
    explicit ScalarField(std::shared_ptr<const Grid> g);
    ScalarField(std::shared_ptr<const Grid> g, const Sampler& f);

    double& at(int i, int j) { return values[grid->node_id(i, j)]; }
    double at(int i, int j) const { return values[grid->node_id(i, j)]; }
    bool valid(int i, int j) const { return grid->node_valid(i, j); }

    // Bilinear interpolation; NaN outside the valid region.
    double interp(double x, double y) const;

    // Centered differences with a two-cell step, blended bilinearly between
    // the four surrounding nodes; exact on quadratic fields.
    // Throws proximity_error when the stencil leaves the valid region.
    Vec2 gradient_at(const Vec2& p) const;
    Mat2 hessian_at(const Vec2& p) const;

    double min_value() const;
    double max_value() const;
    double oscillation() const { return max_value() - min_value(); }

    void write_binary(const std::string& path) const;
    static ScalarField read_binary(const std::string& path);
    void write_csv(const std::string& path) const;
};

// Pushforward under an affine map: output(y) = |det A|^(2/n) * input(T^-1 y),
// resampled bilinearly on a grid over the image domain. target_spacing 0
// picks h * (smallest singular value of A) so no source detail is skipped.
// Throws resolution_error when the implied grid exceeds node_budget.
ScalarField group_action(const AffineMap& T, const ScalarField& v, double target_spacing = 0,
                         std::size_t node_budget = 20000000);

// Hessian of the pushforward at T(x), given the Hessian at x. Leaves the
// n-th determinant root unchanged.
Mat pushforward_hessian(const AffineMap& T, const Mat& H);

} // namespace malab
