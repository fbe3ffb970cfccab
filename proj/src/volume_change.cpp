// volume_change.cpp

#include "repeat/volume_change.hpp"

#include <cmath>

namespace repeat {

ImageVolume fov_valid_mask(const DeformationField& field, const Geometry& moving_geometry,
                           int margin) {
    if (margin < 0) throw Error(ErrorCode::SpecInvalid, "margin must be >= 0");

    ImageVolume valid;
    valid.kind = VolumeKind::Mask;
    valid.geom = field.geom;
    valid.data.assign(field.geom.voxel_count(), 0.0);

    const double lo[3] = {double(margin), double(margin), double(margin)};
    const double hi[3] = {double(moving_geometry.dims[0] - 1 - margin),
                          double(moving_geometry.dims[1] - 1 - margin),
                          double(moving_geometry.dims[2] - 1 - margin)};

    size_t v = 0;
    for (int k = 0; k < field.geom.dims[2]; ++k)
        for (int j = 0; j < field.geom.dims[1]; ++j)
            for (int i = 0; i < field.geom.dims[0]; ++i, ++v) {
                const WorldPoint x = field.geom.voxel_to_world({double(i), double(j), double(k)});
                const Vec3 m = moving_geometry.world_to_voxel(x + field.u[v]);
                const bool ok = m.x >= lo[0] && m.x <= hi[0] && m.y >= lo[1] && m.y <= hi[1] &&
                                m.z >= lo[2] && m.z <= hi[2];
                if (ok) valid.data[v] = 1.0;
            }
    return valid;
}

VolumeChangeReport measure_partial_volume_change(const ImageVolume& liver_mask,
                                                 const JacobianField& jac,
                                                 const ImageVolume& valid, double max_folding) {
    if (liver_mask.kind != VolumeKind::Mask || valid.kind != VolumeKind::Mask)
        throw Error(ErrorCode::NotAMask, "liver and validity inputs must be masks");
    if (!liver_mask.geom.same_grid(jac.geom) || !valid.geom.same_grid(jac.geom))
        throw Error(ErrorCode::GeometryMismatch, "mask, jacobian and validity grids differ");

    size_t n_liver = 0, n_region = 0, n_folded = 0;
    double det_sum = 0;
    for (size_t v = 0; v < jac.det.size(); ++v) {
        if (liver_mask.data[v] == 0.0) continue;
        ++n_liver;
        if (valid.data[v] == 0.0) continue;
        ++n_region;
        det_sum += jac.det[v];
        if (jac.det[v] <= 0.0) ++n_folded;
    }
    if (n_liver == 0) throw Error(ErrorCode::EmptyRegion, "liver mask is empty");
    if (n_region == 0)
        throw Error(ErrorCode::EmptyRegion, "liver mask does not intersect the valid FOV region");

    VolumeChangeReport r;
    r.n_voxels = n_region;
    r.voxel_volume_ml = jac.geom.voxel_volume_mm3() / 1000.0;
    r.v_fixed_ml = static_cast<double>(n_region) * r.voxel_volume_ml;
    r.v_mapped_ml = det_sum * r.voxel_volume_ml;
    r.delta_percent = 100.0 * (det_sum / static_cast<double>(n_region) - 1.0);
    r.coverage_fraction = static_cast<double>(n_region) / static_cast<double>(n_liver);
    r.folding_fraction = static_cast<double>(n_folded) / static_cast<double>(n_region);
    if (r.folding_fraction > max_folding)
        throw Error(ErrorCode::FoldingExceeded,
                    "folding fraction " + format_double(r.folding_fraction) +
                        " exceeds the configured maximum " + format_double(max_folding));
    return r;
}

double mean_jacobian(const ImageVolume& liver_mask, const JacobianField& jac,
                     const ImageVolume& valid) {
    if (!liver_mask.geom.same_grid(jac.geom) || !valid.geom.same_grid(jac.geom))
        throw Error(ErrorCode::GeometryMismatch, "mask, jacobian and validity grids differ");
    size_t n = 0;
    double det_sum = 0;
    for (size_t v = 0; v < jac.det.size(); ++v) {
        if (liver_mask.data[v] == 0.0 || valid.data[v] == 0.0) continue;
        ++n;
        det_sum += jac.det[v];
    }
    if (n == 0) throw Error(ErrorCode::EmptyRegion, "no voxel is both in-mask and FOV-valid");
    return det_sum / static_cast<double>(n);
}

}  // namespace repeat
