// nifti_io.hpp - NIfTI-1 reader/writer (single file, optional gzip).
//
// Geometry precedence on read: sform when sform_code > 0, else qform when
// qform_code > 0, else pixdim with identity direction. Data is converted to
// float64 applying scl_slope/scl_inter when scl_slope != 0. Writes use
// float64 for intensity volumes and uint8 for masks, sform only.
#pragma once

#include <string>

#include "repeat/volume.hpp"

namespace repeat {

ImageVolume read_nifti(const std::string& path, VolumeKind kind = VolumeKind::Intensity);
void write_nifti(const ImageVolume& vol, const std::string& path);

// Deformation fields travel as 5D vector volumes (dim[5] = 3, vector intent,
// float64, displacement in mm, world frame).
DeformationField read_deformation_field(const std::string& path);
void write_deformation_field(const DeformationField& field, const std::string& path);

}  // namespace repeat
