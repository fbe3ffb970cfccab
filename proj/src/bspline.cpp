// bspline.cpp

#include "repeat/bspline.hpp"

#include <cmath>

namespace repeat {

namespace {

// Lattice coordinate offset of the voxel grid: q_a(i) = (spacing_a * i + t0_a) / h_a.
Vec3 lattice_offset(const ControlPointGrid& grid, const Geometry& geom) {
    if (grid.direction.max_abs_diff(geom.direction) > 1e-9)
        throw Error(ErrorCode::GeometryMismatch, "lattice and grid direction matrices differ");
    return grid.direction.transpose() * (geom.origin - grid.origin);
}

}  // namespace

Vec3 bspline_evaluate(const ControlPointGrid& grid, const WorldPoint& point) {
    const Vec3 q = (grid.direction.transpose() * (point - grid.origin)).cdiv(grid.spacing);
    int base[3];
    double w[3][4];
    for (int a = 0; a < 3; ++a) {
        const double f = std::floor(q[a]);
        base[a] = static_cast<int>(f) - 1;
        if (base[a] < 0 || base[a] + 3 > grid.dims[a] - 1)
            throw Error(ErrorCode::OutsideSupport, "point outside control lattice support");
        bspline_weights(q[a] - f, w[a]);
    }
    Vec3 out{0, 0, 0};
    for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b) {
            const double wyz = w[1][b] * w[2][c];
            const size_t row = grid.index(base[0], base[1] + b, base[2] + c);
            for (int a = 0; a < 4; ++a) out += grid.coeff[row + a] * (w[0][a] * wyz);
        }
    return out;
}

ControlPointGrid build_control_grid(const Geometry& geom, const Vec3& spacing_cp) {
    for (int a = 0; a < 3; ++a)
        if (!(spacing_cp[a] > 0.0))
            throw Error(ErrorCode::InvalidSpacing, "control spacing must be positive");

    ControlPointGrid grid;
    grid.spacing = spacing_cp;
    grid.direction = geom.direction;
    // Two-node ring below the extent keeps support valid and makes dyadic
    // refinement exact over the covered region.
    grid.origin = geom.origin - geom.direction * Vec3{2.0 * spacing_cp.x, 2.0 * spacing_cp.y,
                                                      2.0 * spacing_cp.z};
    // +6: two-node ring below, the eval neighborhood above, plus one spare node
    // so coarser pyramid grids (whose ceil'ed extent can overshoot by a voxel)
    // stay inside support.
    for (int a = 0; a < 3; ++a) {
        const double extent = geom.spacing[a] * (geom.dims[a] - 1);
        grid.dims[a] = static_cast<int>(std::ceil(extent / spacing_cp[a] - 1e-12)) + 6;
    }
    grid.coeff.assign(grid.node_count(), Vec3{0, 0, 0});
    return grid;
}

ControlPointGrid refine_control_grid(const ControlPointGrid& grid) {
    // Dyadic subdivision, separable per axis:
    //   even node: (c[i-1] + 6 c[i] + c[i+1]) / 8, odd node: (c[i] + c[i+1]) / 2
    auto refine_axis = [](const std::vector<Vec3>& in, const std::array<int, 3>& d, int axis,
                          std::vector<Vec3>& out, std::array<int, 3>& dout) {
        dout = d;
        dout[axis] = 2 * d[axis] - 1;
        out.assign(static_cast<size_t>(dout[0]) * dout[1] * dout[2], Vec3{});
        auto idx_in = [&](int i, int j, int k) {
            return static_cast<size_t>(i) + static_cast<size_t>(d[0]) *
                   (static_cast<size_t>(j) + static_cast<size_t>(d[1]) * k);
        };
        auto idx_out = [&](int i, int j, int k) {
            return static_cast<size_t>(i) + static_cast<size_t>(dout[0]) *
                   (static_cast<size_t>(j) + static_cast<size_t>(dout[1]) * k);
        };
        auto fetch = [&](int i, int j, int k) -> Vec3 {
            int p[3] = {i, j, k};
            if (p[axis] < 0 || p[axis] >= d[axis]) return {0, 0, 0};
            return in[idx_in(p[0], p[1], p[2])];
        };
        for (int k = 0; k < dout[2]; ++k)
            for (int j = 0; j < dout[1]; ++j)
                for (int i = 0; i < dout[0]; ++i) {
                    int p[3] = {i, j, k};
                    const int t = p[axis];
                    int q[3] = {i, j, k};
                    Vec3 v;
                    if (t % 2 == 0) {
                        q[axis] = t / 2 - 1;
                        const Vec3 cm = fetch(q[0], q[1], q[2]);
                        q[axis] = t / 2;
                        const Vec3 c0 = fetch(q[0], q[1], q[2]);
                        q[axis] = t / 2 + 1;
                        const Vec3 cp = fetch(q[0], q[1], q[2]);
                        v = (cm + c0 * 6.0 + cp) / 8.0;
                    } else {
                        q[axis] = t / 2;
                        const Vec3 c0 = fetch(q[0], q[1], q[2]);
                        q[axis] = t / 2 + 1;
                        const Vec3 c1 = fetch(q[0], q[1], q[2]);
                        v = (c0 + c1) * 0.5;
                    }
                    out[idx_out(i, j, k)] = v;
                }
    };

    ControlPointGrid fine;
    fine.spacing = grid.spacing * 0.5;
    fine.origin = grid.origin;
    fine.direction = grid.direction;

    std::array<int, 3> d = grid.dims;
    std::vector<Vec3> cur = grid.coeff, next;
    std::array<int, 3> dnext{};
    for (int axis = 0; axis < 3; ++axis) {
        refine_axis(cur, d, axis, next, dnext);
        cur = std::move(next);
        d = dnext;
    }
    fine.dims = d;
    fine.coeff = std::move(cur);
    return fine;
}

SplineSampler SplineSampler::build(const ControlPointGrid& grid, const Geometry& geom) {
    SplineSampler s;
    const Vec3 t0 = lattice_offset(grid, geom);
    for (int a = 0; a < 3; ++a) {
        const int n = geom.dims[a];
        s.base[a].resize(n);
        s.wgt[a].resize(n);
        for (int i = 0; i < n; ++i) {
            const double q = (geom.spacing[a] * i + t0[a]) / grid.spacing[a];
            const double f = std::floor(q);
            const int b = static_cast<int>(f) - 1;
            if (b < 0 || b + 3 > grid.dims[a] - 1)
                throw Error(ErrorCode::OutsideSupport, "voxel grid escapes control lattice support");
            s.base[a][i] = b;
            bspline_weights(q - f, s.wgt[a][i].data());
        }
        // contributing voxel ranges per node (bases are non-decreasing in i)
        s.node_lo[a].assign(grid.dims[a], n);
        s.node_hi[a].assign(grid.dims[a], 0);
        for (int i = 0; i < n; ++i)
            for (int m = 0; m < 4; ++m) {
                const int j = s.base[a][i] + m;
                s.node_lo[a][j] = std::min(s.node_lo[a][j], i);
                s.node_hi[a][j] = std::max(s.node_hi[a][j], i + 1);
            }
    }
    return s;
}

void SplineSampler::evaluate(const ControlPointGrid& grid, const Geometry& geom,
                             std::vector<Vec3>& out) const {
    const int nx = geom.dims[0], ny = geom.dims[1], nz = geom.dims[2];
    const int cx = grid.dims[0], cy = grid.dims[1], cz = grid.dims[2];

    // stage 1: contract x  -> A[vx, jy, jz]
    std::vector<Vec3> A(static_cast<size_t>(nx) * cy * cz);
    for (int jz = 0; jz < cz; ++jz)
        for (int jy = 0; jy < cy; ++jy) {
            const size_t crow = static_cast<size_t>(cx) * (jy + static_cast<size_t>(cy) * jz);
            const size_t arow = static_cast<size_t>(nx) * (jy + static_cast<size_t>(cy) * jz);
            for (int vx = 0; vx < nx; ++vx) {
                const int b = base[0][vx];
                const auto& w = wgt[0][vx];
                A[arow + vx] = grid.coeff[crow + b] * w[0] + grid.coeff[crow + b + 1] * w[1] +
                               grid.coeff[crow + b + 2] * w[2] + grid.coeff[crow + b + 3] * w[3];
            }
        }

    // stage 2: contract y  -> B[vx, vy, jz]
    std::vector<Vec3> B(static_cast<size_t>(nx) * ny * cz);
    for (int jz = 0; jz < cz; ++jz)
        for (int vy = 0; vy < ny; ++vy) {
            const int b = base[1][vy];
            const auto& w = wgt[1][vy];
            const size_t a0 = static_cast<size_t>(nx) * (b + static_cast<size_t>(cy) * jz);
            const size_t a1 = a0 + nx, a2 = a1 + nx, a3 = a2 + nx;
            const size_t brow = static_cast<size_t>(nx) * (vy + static_cast<size_t>(ny) * jz);
            for (int vx = 0; vx < nx; ++vx)
                B[brow + vx] =
                    A[a0 + vx] * w[0] + A[a1 + vx] * w[1] + A[a2 + vx] * w[2] + A[a3 + vx] * w[3];
        }

    // stage 3: contract z  -> out[vx, vy, vz]
    out.resize(geom.voxel_count());
    for (int vz = 0; vz < nz; ++vz) {
        const int b = base[2][vz];
        const auto& w = wgt[2][vz];
        for (int vy = 0; vy < ny; ++vy) {
            const size_t b0 = static_cast<size_t>(nx) * (vy + static_cast<size_t>(ny) * b);
            const size_t step = static_cast<size_t>(nx) * ny;
            const size_t orow = static_cast<size_t>(nx) * (vy + static_cast<size_t>(ny) * vz);
            for (int vx = 0; vx < nx; ++vx)
                out[orow + vx] = B[b0 + vx] * w[0] + B[b0 + step + vx] * w[1] +
                                 B[b0 + 2 * step + vx] * w[2] + B[b0 + 3 * step + vx] * w[3];
        }
    }
}

void SplineSampler::adjoint(const ControlPointGrid& grid, const Geometry& geom,
                            const std::vector<Vec3>& voxel_grad, std::vector<Vec3>& grad_cp) const {
    const int nx = geom.dims[0], ny = geom.dims[1];
    const int cx = grid.dims[0], cy = grid.dims[1], cz = grid.dims[2];

    // stage 1: contract voxel z -> Bt[vx, vy, jz]
    std::vector<Vec3> Bt(static_cast<size_t>(nx) * ny * cz, Vec3{});
    for (int jz = 0; jz < cz; ++jz) {
        const size_t trow = static_cast<size_t>(nx) * ny * jz;
        for (int vz = node_lo[2][jz]; vz < node_hi[2][jz]; ++vz) {
            const double w = wgt[2][vz][jz - base[2][vz]];
            const size_t grow = static_cast<size_t>(nx) * ny * vz;
            for (size_t p = 0; p < static_cast<size_t>(nx) * ny; ++p)
                Bt[trow + p] += voxel_grad[grow + p] * w;
        }
    }

    // stage 2: contract voxel y -> At[vx, jy, jz]
    std::vector<Vec3> At(static_cast<size_t>(nx) * cy * cz, Vec3{});
    for (int jz = 0; jz < cz; ++jz)
        for (int jy = 0; jy < cy; ++jy) {
            const size_t arow = static_cast<size_t>(nx) * (jy + static_cast<size_t>(cy) * jz);
            for (int vy = node_lo[1][jy]; vy < node_hi[1][jy]; ++vy) {
                const double w = wgt[1][vy][jy - base[1][vy]];
                const size_t brow = static_cast<size_t>(nx) * (vy + static_cast<size_t>(ny) * jz);
                for (int vx = 0; vx < nx; ++vx) At[arow + vx] += Bt[brow + vx] * w;
            }
        }

    // stage 3: contract voxel x -> grad_cp[jx, jy, jz]
    grad_cp.assign(grid.node_count(), Vec3{});
    for (int jz = 0; jz < cz; ++jz)
        for (int jy = 0; jy < cy; ++jy) {
            const size_t arow = static_cast<size_t>(nx) * (jy + static_cast<size_t>(cy) * jz);
            const size_t crow = static_cast<size_t>(cx) * (jy + static_cast<size_t>(cy) * jz);
            for (int jx = 0; jx < cx; ++jx) {
                Vec3 acc{};
                for (int vx = node_lo[0][jx]; vx < node_hi[0][jx]; ++vx)
                    acc += At[arow + vx] * wgt[0][vx][jx - base[0][vx]];
                grad_cp[crow + jx] = acc;
            }
        }
}

namespace {

struct Stencil {
    int off[3];
};

}  // namespace

double bending_energy(const ControlPointGrid& grid) {
    const auto& d = grid.dims;
    double acc = 0;
    for (int k = 1; k < d[2] - 1; ++k)
        for (int j = 1; j < d[1] - 1; ++j)
            for (int i = 1; i < d[0] - 1; ++i) {
                const size_t n = grid.index(i, j, k);
                const auto& c = grid.coeff;
                const size_t sx = 1, sy = d[0], sz = static_cast<size_t>(d[0]) * d[1];
                const Vec3 dxx = c[n + sx] - c[n] * 2.0 + c[n - sx];
                const Vec3 dyy = c[n + sy] - c[n] * 2.0 + c[n - sy];
                const Vec3 dzz = c[n + sz] - c[n] * 2.0 + c[n - sz];
                const Vec3 dxy = (c[n + sx + sy] - c[n + sx - sy] - c[n - sx + sy] + c[n - sx - sy]) * 0.25;
                const Vec3 dxz = (c[n + sx + sz] - c[n + sx - sz] - c[n - sx + sz] + c[n - sx - sz]) * 0.25;
                const Vec3 dyz = (c[n + sy + sz] - c[n + sy - sz] - c[n - sy + sz] + c[n - sy - sz]) * 0.25;
                acc += dxx.dot(dxx) + dyy.dot(dyy) + dzz.dot(dzz) +
                       2.0 * (dxy.dot(dxy) + dxz.dot(dxz) + dyz.dot(dyz));
            }
    return acc / static_cast<double>(grid.node_count());
}

void bending_energy_gradient(const ControlPointGrid& grid, std::vector<Vec3>& grad) {
    grad.assign(grid.node_count(), Vec3{});
    const auto& d = grid.dims;
    const double norm = 1.0 / static_cast<double>(grid.node_count());
    const long sx = 1, sy = d[0], sz = static_cast<long>(d[0]) * d[1];
    const long strides[3] = {sx, sy, sz};

    for (int k = 1; k < d[2] - 1; ++k)
        for (int j = 1; j < d[1] - 1; ++j)
            for (int i = 1; i < d[0] - 1; ++i) {
                const size_t n = grid.index(i, j, k);
                const auto& c = grid.coeff;
                // straight second differences
                for (int a = 0; a < 3; ++a) {
                    const long s = strides[a];
                    const Vec3 dd = c[n + s] - c[n] * 2.0 + c[n - s];
                    const Vec3 g = dd * (2.0 * norm);
                    grad[n + s] += g;
                    grad[n] -= g * 2.0;
                    grad[n - s] += g;
                }
                // mixed differences, each counted twice in the energy
                for (int a = 0; a < 3; ++a)
                    for (int b = a + 1; b < 3; ++b) {
                        const long s1 = strides[a], s2 = strides[b];
                        const Vec3 dd =
                            (c[n + s1 + s2] - c[n + s1 - s2] - c[n - s1 + s2] + c[n - s1 - s2]) * 0.25;
                        const Vec3 g = dd * (2.0 * 2.0 * norm * 0.25);
                        grad[n + s1 + s2] += g;
                        grad[n + s1 - s2] -= g;
                        grad[n - s1 + s2] -= g;
                        grad[n - s1 - s2] += g;
                    }
            }
}

}  // namespace repeat
