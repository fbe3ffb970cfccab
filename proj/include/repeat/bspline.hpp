// bspline.hpp - cubic B-spline control lattice: evaluation, refinement and
// the bending-energy regularizer.
//
// The lattice axes follow the fixed image axes (same direction matrix), so a
// world point p has lattice coordinate q = D^T (p - origin_cp) / spacing_cp
// per axis. Coefficients are world-frame displacements in mm.
#pragma once

#include <array>
#include <vector>

#include "repeat/volume.hpp"

namespace repeat {

struct ControlPointGrid {
    std::array<int, 3> dims{0, 0, 0};  // control points per axis, >= 4
    Vec3 spacing{1, 1, 1};             // mm between control points
    Vec3 origin{0, 0, 0};              // world position of control point (0,0,0)
    Mat3 direction;                    // lattice axes (copied from the fixed grid)
    std::vector<Vec3> coeff;           // per-control-point displacement, mm, world frame

    size_t node_count() const {
        return static_cast<size_t>(dims[0]) * dims[1] * static_cast<size_t>(dims[2]);
    }
    size_t index(int i, int j, int k) const {
        return static_cast<size_t>(i) +
               static_cast<size_t>(dims[0]) * (static_cast<size_t>(j) +
                                               static_cast<size_t>(dims[1]) * static_cast<size_t>(k));
    }
};

// Uniform cubic B-spline basis on t in [0,1); weights sum to 1.
inline void bspline_weights(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0;
    w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
    w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
    w[3] = t3 / 6.0;
}

// Displacement at a world point; throws OutsideSupport when the 4x4x4
// neighborhood is not fully inside the lattice.
Vec3 bspline_evaluate(const ControlPointGrid& grid, const WorldPoint& point);

// Lattice covering the given geometry's voxel extent plus a two-node ring,
// coefficients zero. Spacing in mm along the image axes.
ControlPointGrid build_control_grid(const Geometry& geom, const Vec3& spacing_cp);

// Halve the control spacing; the refined lattice represents the same
// displacement field exactly over the covered extent.
ControlPointGrid refine_control_grid(const ControlPointGrid& grid);

// Per-axis sampling tables for evaluating the lattice on a voxel grid. Valid
// because the lattice shares the grid's direction matrix, which makes the
// lattice coordinate separable per axis.
struct SplineSampler {
    std::array<std::vector<int>, 3> base;                    // first of 4 nodes, per voxel index
    std::array<std::vector<std::array<double, 4>>, 3> wgt;   // basis weights, per voxel index

    // valid voxel-index ranges contributing to a given node, per axis
    std::array<std::vector<int>, 3> node_lo, node_hi;

    static SplineSampler build(const ControlPointGrid& grid, const Geometry& geom);

    // out[v] = sum of basis-weighted coefficients (dense forward evaluation)
    void evaluate(const ControlPointGrid& grid, const Geometry& geom, std::vector<Vec3>& out) const;

    // grad_cp = adjoint scatter of per-voxel vectors (transpose of evaluate)
    void adjoint(const ControlPointGrid& grid, const Geometry& geom,
                 const std::vector<Vec3>& voxel_grad, std::vector<Vec3>& grad_cp) const;
};

// Mean over interior nodes of the squared second differences of the
// coefficients (all nine second-derivative pairs, cross terms twice),
// normalized by total node count. Zero for constant and linear lattices.
double bending_energy(const ControlPointGrid& grid);
void bending_energy_gradient(const ControlPointGrid& grid, std::vector<Vec3>& grad);

}  // namespace repeat
