// volume_change.hpp - the measurement itself: restrict the liver mask to the
// usable field-of-view overlap, integrate the Jacobian determinant over it,
// and report the partial-liver volume change between phases.
#pragma once

#include <string>

#include "repeat/volume.hpp"

namespace repeat {

struct VolumeChangeReport {
    double v_fixed_ml = 0;        // partial liver volume, fixed phase, valid region
    double v_mapped_ml = 0;       // same tissue's volume in the moving phase
    double delta_percent = 0;     // 100 * (v_mapped - v_fixed) / v_fixed
    double coverage_fraction = 0; // in-FOV fraction of the input liver mask
    double folding_fraction = 0;  // over the measured region
    size_t n_voxels = 0;
    double voxel_volume_ml = 0;
    std::string config_digest;
};

// Mask on the fixed grid: 1 where the mapped point x + u(x) lies at least
// `margin` voxels inside the moving grid.
ImageVolume fov_valid_mask(const DeformationField& field, const Geometry& moving_geometry,
                           int margin = 1);

// Integrates det J over liver-and-valid voxels. Fails with FoldingExceeded
// when the folded fraction of the region makes the measurement meaningless.
VolumeChangeReport measure_partial_volume_change(const ImageVolume& liver_mask,
                                                 const JacobianField& jac,
                                                 const ImageVolume& valid,
                                                 double max_folding = 0.01);

// Arithmetic mean of det J over the measured region; equals
// 1 + delta_percent/100 by construction.
double mean_jacobian(const ImageVolume& liver_mask, const JacobianField& jac,
                     const ImageVolume& valid);

}  // namespace repeat
