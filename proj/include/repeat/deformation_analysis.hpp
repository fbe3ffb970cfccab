// deformation_analysis.hpp - Jacobian determinants, folding diagnostics and
// displacement statistics for a dense deformation field.
#pragma once

#include "repeat/volume.hpp"

namespace repeat {

struct DisplacementStats {
    double mean_mag = 0;  // mm
    double max_mag = 0;
    double p99_mag = 0;   // nearest-rank percentile
    Vec3 mean_axis{0, 0, 0};
};

// det(I + du/dx) with du/dx by central differences (physical spacing) at
// interior voxels and one-sided differences on faces. Exact for affine u.
JacobianField jacobian_determinant_field(const DeformationField& field);

// Fraction of in-mask voxels with det <= 0.
double folding_fraction(const JacobianField& jac, const ImageVolume& mask);

DisplacementStats displacement_stats(const DeformationField& field, const ImageVolume& mask);

}  // namespace repeat
