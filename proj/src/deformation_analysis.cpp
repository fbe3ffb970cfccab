// deformation_analysis.cpp

#include "repeat/deformation_analysis.hpp"

#include <algorithm>
#include <cmath>

namespace repeat {

JacobianField jacobian_determinant_field(const DeformationField& field) {
    const Geometry& g = field.geom;
    for (int a = 0; a < 3; ++a)
        if (g.dims[a] < 2)
            throw Error(ErrorCode::SpecInvalid, "jacobian needs at least 2 voxels per axis");

    JacobianField jac;
    jac.geom = g;
    jac.det.resize(g.voxel_count());

    // du/dworld = du/dindex * diag(1/spacing) * D^T
    const Mat3 dt = g.direction.transpose();

    size_t v = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++v) {
                const int idx[3] = {i, j, k};
                Mat3 gidx;  // gidx[r][a] = du_r / dindex_a / spacing_a
                for (int a = 0; a < 3; ++a) {
                    int lo[3] = {i, j, k}, hi[3] = {i, j, k};
                    double denom;
                    if (idx[a] == 0) {
                        hi[a] = 1;
                        denom = g.spacing[a];
                    } else if (idx[a] == g.dims[a] - 1) {
                        lo[a] = g.dims[a] - 2;
                        denom = g.spacing[a];
                    } else {
                        lo[a] = idx[a] - 1;
                        hi[a] = idx[a] + 1;
                        denom = 2.0 * g.spacing[a];
                    }
                    const Vec3 d = (field.at(hi[0], hi[1], hi[2]) - field.at(lo[0], lo[1], lo[2])) /
                                   denom;
                    for (int r = 0; r < 3; ++r) gidx.at(r, a) = d[r];
                }
                // J = I + gidx * D^T
                Mat3 J = gidx * dt;
                for (int r = 0; r < 3; ++r) J.at(r, r) += 1.0;
                jac.det[v] = J.det();
            }
    return jac;
}

double folding_fraction(const JacobianField& jac, const ImageVolume& mask) {
    if (mask.kind != VolumeKind::Mask)
        throw Error(ErrorCode::NotAMask, "folding_fraction expects a mask");
    if (!jac.geom.same_grid(mask.geom))
        throw Error(ErrorCode::GeometryMismatch, "jacobian and mask are on different grids");
    size_t total = 0, folded = 0;
    for (size_t v = 0; v < jac.det.size(); ++v) {
        if (mask.data[v] == 0.0) continue;
        ++total;
        if (jac.det[v] <= 0.0) ++folded;
    }
    if (total == 0) throw Error(ErrorCode::EmptyMask, "mask is empty");
    return static_cast<double>(folded) / static_cast<double>(total);
}

DisplacementStats displacement_stats(const DeformationField& field, const ImageVolume& mask) {
    if (mask.kind != VolumeKind::Mask)
        throw Error(ErrorCode::NotAMask, "displacement_stats expects a mask");
    if (!field.geom.same_grid(mask.geom))
        throw Error(ErrorCode::GeometryMismatch, "field and mask are on different grids");

    std::vector<double> mags;
    mags.reserve(1024);
    Vec3 axis_sum{};
    double mag_sum = 0, mag_max = 0;
    for (size_t v = 0; v < field.u.size(); ++v) {
        if (mask.data[v] == 0.0) continue;
        const double m = field.u[v].norm();
        mags.push_back(m);
        mag_sum += m;
        mag_max = std::max(mag_max, m);
        axis_sum += field.u[v];
    }
    if (mags.empty()) throw Error(ErrorCode::EmptyMask, "mask is empty");

    DisplacementStats s;
    s.mean_mag = mag_sum / static_cast<double>(mags.size());
    s.max_mag = mag_max;
    s.mean_axis = axis_sum / static_cast<double>(mags.size());
    // nearest-rank percentile: ceil(p * n) in 1-based ranks
    std::sort(mags.begin(), mags.end());
    const size_t rank = static_cast<size_t>(std::ceil(0.99 * static_cast<double>(mags.size())));
    s.p99_mag = mags[std::min(mags.size() - 1, std::max<size_t>(rank, 1) - 1)];
    return s;
}

}  // namespace repeat
