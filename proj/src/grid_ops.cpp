// grid_ops.cpp

#include "repeat/grid_ops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace repeat {

namespace {

// Snap nearly-integer coordinates so that resampling a grid onto itself
// reproduces node values despite affine round-trip noise.
constexpr double kSnapEps = 1e-9;

struct CellCoord {
    int base[3];
    double frac[3];
    bool inside;
};

CellCoord locate(const Geometry& g, const Vec3& index) {
    CellCoord c{};
    c.inside = true;
    for (int a = 0; a < 3; ++a) {
        double x = index[a];
        const double r = std::round(x);
        if (std::abs(x - r) < kSnapEps) x = r;
        if (x < 0.0 || x > static_cast<double>(g.dims[a] - 1)) {
            c.inside = false;
            return c;
        }
        int i0 = static_cast<int>(std::floor(x));
        if (i0 > g.dims[a] - 2) i0 = g.dims[a] - 2;  // x == dim-1
        c.base[a] = i0;
        c.frac[a] = x - i0;
    }
    return c;
}

}  // namespace

double trilinear_sample(const ImageVolume& vol, const Vec3& index, bool* inside) {
    const CellCoord c = locate(vol.geom, index);
    if (inside) *inside = c.inside;
    if (!c.inside) return outside_value(vol.kind);

    const int nx = vol.geom.dims[0];
    const size_t nxy = static_cast<size_t>(nx) * vol.geom.dims[1];
    const size_t i000 = vol.geom.index(c.base[0], c.base[1], c.base[2]);
    const double fx = c.frac[0], fy = c.frac[1], fz = c.frac[2];
    const double* d = vol.data.data();

    const double c00 = d[i000] * (1 - fx) + d[i000 + 1] * fx;
    const double c10 = d[i000 + nx] * (1 - fx) + d[i000 + nx + 1] * fx;
    const double c01 = d[i000 + nxy] * (1 - fx) + d[i000 + nxy + 1] * fx;
    const double c11 = d[i000 + nxy + nx] * (1 - fx) + d[i000 + nxy + nx + 1] * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

Vec3 trilinear_gradient(const ImageVolume& vol, const Vec3& index) {
    const CellCoord c = locate(vol.geom, index);
    if (!c.inside) return {0, 0, 0};

    const int nx = vol.geom.dims[0];
    const size_t nxy = static_cast<size_t>(nx) * vol.geom.dims[1];
    const size_t i000 = vol.geom.index(c.base[0], c.base[1], c.base[2]);
    const double fx = c.frac[0], fy = c.frac[1], fz = c.frac[2];
    const double* d = vol.data.data();

    const double v000 = d[i000], v100 = d[i000 + 1];
    const double v010 = d[i000 + nx], v110 = d[i000 + nx + 1];
    const double v001 = d[i000 + nxy], v101 = d[i000 + nxy + 1];
    const double v011 = d[i000 + nxy + nx], v111 = d[i000 + nxy + nx + 1];

    Vec3 g;
    g.x = (v100 - v000) * (1 - fy) * (1 - fz) + (v110 - v010) * fy * (1 - fz) +
          (v101 - v001) * (1 - fy) * fz + (v111 - v011) * fy * fz;
    g.y = (v010 - v000) * (1 - fx) * (1 - fz) + (v110 - v100) * fx * (1 - fz) +
          (v011 - v001) * (1 - fx) * fz + (v111 - v101) * fx * fz;
    g.z = (v001 - v000) * (1 - fx) * (1 - fy) + (v101 - v100) * fx * (1 - fy) +
          (v011 - v010) * (1 - fx) * fy + (v111 - v110) * fx * fy;
    return g;
}

double nearest_sample(const ImageVolume& vol, const Vec3& index, bool* inside) {
    bool in = true;
    int idx[3] = {0, 0, 0};
    for (int a = 0; a < 3; ++a) {
        double x = index[a];
        const double r = std::round(x);
        if (std::abs(x - r) < kSnapEps) x = r;
        // outside test matches trilinear support so masks never grow past it
        if (x < 0.0 || x > static_cast<double>(vol.geom.dims[a] - 1)) {
            in = false;
            break;
        }
        idx[a] = std::clamp(static_cast<int>(std::lround(x)), 0, vol.geom.dims[a] - 1);
    }
    if (inside) *inside = in;
    if (!in) return outside_value(vol.kind);
    return vol.at(idx[0], idx[1], idx[2]);
}

ImageVolume resample_to_spacing(const ImageVolume& vol, const Vec3& target,
                                InterpolationKind interp) {
    for (int a = 0; a < 3; ++a)
        if (!(target[a] > 0.0)) throw Error(ErrorCode::InvalidSpacing, "target spacing must be > 0");

    ImageVolume out;
    out.kind = vol.kind;
    out.geom = vol.geom;
    out.geom.spacing = target;
    for (int a = 0; a < 3; ++a) {
        const double extent = vol.geom.dims[a] * vol.geom.spacing[a];
        out.geom.dims[a] = std::max(2, static_cast<int>(std::ceil(extent / target[a])));
    }
    out.data.resize(out.geom.voxel_count());

    size_t o = 0;
    for (int k = 0; k < out.geom.dims[2]; ++k)
        for (int j = 0; j < out.geom.dims[1]; ++j)
            for (int i = 0; i < out.geom.dims[0]; ++i, ++o) {
                const WorldPoint p = out.geom.voxel_to_world({double(i), double(j), double(k)});
                const Vec3 src = vol.geom.world_to_voxel(p);
                out.data[o] = (interp == InterpolationKind::Trilinear)
                                  ? trilinear_sample(vol, src)
                                  : nearest_sample(vol, src);
            }
    return out;
}

ImageVolume resample_onto(const ImageVolume& vol, const Geometry& target,
                          InterpolationKind interp) {
    ImageVolume out;
    out.kind = vol.kind;
    out.geom = target;
    out.data.resize(target.voxel_count());
    size_t o = 0;
    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i, ++o) {
                const WorldPoint p = target.voxel_to_world({double(i), double(j), double(k)});
                const Vec3 src = vol.geom.world_to_voxel(p);
                out.data[o] = (interp == InterpolationKind::Trilinear)
                                  ? trilinear_sample(vol, src)
                                  : nearest_sample(vol, src);
            }
    return out;
}

ImageVolume window_intensity(const ImageVolume& vol, double lo, double hi) {
    if (!(lo < hi)) throw Error(ErrorCode::InvalidWindow, "window requires lo < hi");
    ImageVolume out = vol;
    out.kind = VolumeKind::Intensity;
    const double scale = 1.0 / (hi - lo);
    for (double& v : out.data) v = std::clamp((v - lo) * scale, 0.0, 1.0);
    return out;
}

Vec3 central_gradient(const ImageVolume& vol, int i, int j, int k) {
    const auto& dims = vol.geom.dims;
    const int idx[3] = {i, j, k};
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        int lo[3] = {i, j, k}, hi[3] = {i, j, k};
        double denom;
        if (idx[a] == 0) {
            hi[a] = 1;
            denom = vol.geom.spacing[a];
        } else if (idx[a] == dims[a] - 1) {
            lo[a] = dims[a] - 2;
            denom = vol.geom.spacing[a];
        } else {
            lo[a] = idx[a] - 1;
            hi[a] = idx[a] + 1;
            denom = 2.0 * vol.geom.spacing[a];
        }
        g[a] = (vol.at(hi[0], hi[1], hi[2]) - vol.at(lo[0], lo[1], lo[2])) / denom;
    }
    return g;
}

ImageVolume warp_volume(const ImageVolume& vol, const DeformationField& field,
                        InterpolationKind interp) {
    if (field.u.size() != field.geom.voxel_count())
        throw Error(ErrorCode::GeometryMismatch, "field length does not match its geometry");
    if (vol.kind == VolumeKind::Mask && interp != InterpolationKind::NearestNeighbor)
        throw Error(ErrorCode::NotAMask, "masks must be warped with nearest-neighbor interpolation");

    ImageVolume out;
    out.kind = vol.kind;
    out.geom = field.geom;
    out.data.resize(out.geom.voxel_count());

    size_t o = 0;
    for (int k = 0; k < out.geom.dims[2]; ++k)
        for (int j = 0; j < out.geom.dims[1]; ++j)
            for (int i = 0; i < out.geom.dims[0]; ++i, ++o) {
                const WorldPoint x = out.geom.voxel_to_world({double(i), double(j), double(k)});
                const Vec3 src = vol.geom.world_to_voxel(x + field.u[o]);
                out.data[o] = (interp == InterpolationKind::Trilinear)
                                  ? trilinear_sample(vol, src)
                                  : nearest_sample(vol, src);
            }
    return out;
}

ImageVolume threshold_mask(const ImageVolume& vol, double lo, double hi) {
    if (!(lo < hi)) throw Error(ErrorCode::InvalidWindow, "threshold requires lo < hi");
    ImageVolume out;
    out.kind = VolumeKind::Mask;
    out.geom = vol.geom;
    out.data.resize(vol.data.size());
    for (size_t i = 0; i < vol.data.size(); ++i)
        out.data[i] = (vol.data[i] >= lo && vol.data[i] <= hi) ? 1.0 : 0.0;
    return out;
}

ImageVolume largest_connected_component(const ImageVolume& mask) {
    if (mask.kind != VolumeKind::Mask)
        throw Error(ErrorCode::NotAMask, "largest_connected_component expects a mask");

    const auto& dims = mask.geom.dims;
    const size_t n = mask.geom.voxel_count();
    std::vector<int32_t> label(n, 0);
    int32_t next = 0;
    size_t best_size = 0;
    int32_t best_label = 0;

    std::deque<size_t> queue;
    for (size_t s = 0; s < n; ++s) {
        if (mask.data[s] == 0.0 || label[s] != 0) continue;
        ++next;
        size_t count = 0;
        label[s] = next;
        queue.push_back(s);
        while (!queue.empty()) {
            const size_t cur = queue.front();
            queue.pop_front();
            ++count;
            const int i = static_cast<int>(cur % dims[0]);
            const int j = static_cast<int>((cur / dims[0]) % dims[1]);
            const int k = static_cast<int>(cur / (static_cast<size_t>(dims[0]) * dims[1]));
            const int di[6] = {-1, 1, 0, 0, 0, 0};
            const int dj[6] = {0, 0, -1, 1, 0, 0};
            const int dk[6] = {0, 0, 0, 0, -1, 1};
            for (int m = 0; m < 6; ++m) {
                const int ni = i + di[m], nj = j + dj[m], nk = k + dk[m];
                if (ni < 0 || nj < 0 || nk < 0 || ni >= dims[0] || nj >= dims[1] || nk >= dims[2])
                    continue;
                const size_t ns = mask.geom.index(ni, nj, nk);
                if (mask.data[ns] != 0.0 && label[ns] == 0) {
                    label[ns] = next;
                    queue.push_back(ns);
                }
            }
        }
        if (count > best_size) {
            best_size = count;
            best_label = next;
        }
    }

    ImageVolume out;
    out.kind = VolumeKind::Mask;
    out.geom = mask.geom;
    out.data.assign(n, 0.0);
    if (best_label != 0)
        for (size_t s = 0; s < n; ++s)
            if (label[s] == best_label) out.data[s] = 1.0;
    return out;
}

ImageVolume gaussian_smooth(const ImageVolume& vol, const Vec3& sigma_mm) {
    ImageVolume out = vol;
    const auto& dims = vol.geom.dims;

    for (int axis = 0; axis < 3; ++axis) {
        const double sigma_vox = sigma_mm[axis] / vol.geom.spacing[axis];
        if (sigma_vox < 0.3) continue;
        const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_vox)));
        std::vector<double> kernel(2 * radius + 1);
        for (int t = -radius; t <= radius; ++t)
            kernel[t + radius] = std::exp(-0.5 * (t / sigma_vox) * (t / sigma_vox));

        ImageVolume src = out;
        const long stride_sel[3] = {1, dims[0], static_cast<long>(dims[0]) * dims[1]};
        const long stride = stride_sel[axis];
        const int len = dims[axis];

        size_t o = 0;
        for (int k = 0; k < dims[2]; ++k)
            for (int j = 0; j < dims[1]; ++j)
                for (int i = 0; i < dims[0]; ++i, ++o) {
                    const int pos[3] = {i, j, k};
                    const int c = pos[axis];
                    double acc = 0, wsum = 0;
                    const int t0 = std::max(-radius, -c);
                    const int t1 = std::min(radius, len - 1 - c);
                    for (int t = t0; t <= t1; ++t) {
                        const double w = kernel[t + radius];
                        acc += w * src.data[o + static_cast<long>(t) * stride];
                        wsum += w;
                    }
                    out.data[o] = acc / wsum;
                }
    }
    return out;
}

ImageVolume crop_volume(const ImageVolume& vol, const std::array<int, 3>& lo,
                        const std::array<int, 3>& hi) {
    for (int a = 0; a < 3; ++a)
        if (lo[a] < 0 || hi[a] >= vol.geom.dims[a] || hi[a] - lo[a] + 1 < 2)
            throw Error(ErrorCode::IndexOutOfRange, "crop range invalid");

    ImageVolume out;
    out.kind = vol.kind;
    out.geom = vol.geom;
    for (int a = 0; a < 3; ++a) out.geom.dims[a] = hi[a] - lo[a] + 1;
    out.geom.origin = vol.geom.voxel_to_world({double(lo[0]), double(lo[1]), double(lo[2])});
    out.data.resize(out.geom.voxel_count());
    size_t o = 0;
    for (int k = lo[2]; k <= hi[2]; ++k)
        for (int j = lo[1]; j <= hi[1]; ++j)
            for (int i = lo[0]; i <= hi[0]; ++i, ++o) out.data[o] = vol.at(i, j, k);
    return out;
}

ImageVolume dilate_mask(const ImageVolume& mask, double radius_mm) {
    if (mask.kind != VolumeKind::Mask)
        throw Error(ErrorCode::NotAMask, "dilate_mask expects a mask");
    const double min_spacing =
        std::min({mask.geom.spacing.x, mask.geom.spacing.y, mask.geom.spacing.z});
    const int steps = std::max(0, static_cast<int>(std::ceil(radius_mm / min_spacing)));
    ImageVolume cur = mask;
    const auto& dims = mask.geom.dims;
    for (int s = 0; s < steps; ++s) {
        ImageVolume nxt = cur;
        size_t o = 0;
        for (int k = 0; k < dims[2]; ++k)
            for (int j = 0; j < dims[1]; ++j)
                for (int i = 0; i < dims[0]; ++i, ++o) {
                    if (cur.data[o] != 0.0) continue;
                    const bool touch = (i > 0 && cur.at(i - 1, j, k) != 0.0) ||
                                       (i < dims[0] - 1 && cur.at(i + 1, j, k) != 0.0) ||
                                       (j > 0 && cur.at(i, j - 1, k) != 0.0) ||
                                       (j < dims[1] - 1 && cur.at(i, j + 1, k) != 0.0) ||
                                       (k > 0 && cur.at(i, j, k - 1) != 0.0) ||
                                       (k < dims[2] - 1 && cur.at(i, j, k + 1) != 0.0);
                    if (touch) nxt.data[o] = 1.0;
                }
        cur = std::move(nxt);
    }
    return cur;
}

}  // namespace repeat
