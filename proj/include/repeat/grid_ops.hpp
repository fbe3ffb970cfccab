// grid_ops.hpp - interpolation, resampling, windowing, gradients, warping and
// mask utilities shared by registration and measurement.
#pragma once

#include <optional>

#include "repeat/volume.hpp"

namespace repeat {

enum class InterpolationKind { Trilinear, NearestNeighbor };

// Value used for samples outside the grid: air for intensities, background for masks.
inline double outside_value(VolumeKind kind) {
    return kind == VolumeKind::Mask ? 0.0 : -1024.0;
}

// Trilinear blend of the 8 surrounding voxels at a continuous voxel index.
// Outside [0, dim-1] on any axis the configured outside value is returned and
// *inside (when given) is cleared.
double trilinear_sample(const ImageVolume& vol, const Vec3& index, bool* inside = nullptr);

// Analytic gradient of the trilinear interpolant w.r.t. the continuous voxel
// index (per voxel step, not per mm). Zero outside the grid.
Vec3 trilinear_gradient(const ImageVolume& vol, const Vec3& index);

double nearest_sample(const ImageVolume& vol, const Vec3& index, bool* inside = nullptr);

ImageVolume resample_to_spacing(const ImageVolume& vol, const Vec3& target,
                                InterpolationKind interp);

// Resample onto an explicit target grid.
ImageVolume resample_onto(const ImageVolume& vol, const Geometry& target,
                          InterpolationKind interp);

// clamp((v - lo) / (hi - lo), 0, 1)
ImageVolume window_intensity(const ImageVolume& vol, double lo, double hi);

// Central differences divided by 2*spacing on interior voxels, one-sided on
// faces; components are along the image axes, per mm.
Vec3 central_gradient(const ImageVolume& vol, int i, int j, int k);

// Pull-back warp: output(x) = vol sampled at x_world + u(x). Output lives on
// the field's grid.
ImageVolume warp_volume(const ImageVolume& vol, const DeformationField& field,
                        InterpolationKind interp);

// mask = 1 where lo <= v <= hi
ImageVolume threshold_mask(const ImageVolume& vol, double lo, double hi);

// 6-connectivity; keeps only the largest component. Empty in, empty out.
ImageVolume largest_connected_component(const ImageVolume& mask);

// Separable Gaussian smoothing, sigma in mm per axis; border weights renormalized.
ImageVolume gaussian_smooth(const ImageVolume& vol, const Vec3& sigma_mm);

// Axis-aligned crop, [lo, hi] voxel ranges inclusive; origin follows.
ImageVolume crop_volume(const ImageVolume& vol, const std::array<int, 3>& lo,
                        const std::array<int, 3>& hi);

// Binary dilation by a given physical radius (iterated 6-neighborhood).
ImageVolume dilate_mask(const ImageVolume& mask, double radius_mm);

}  // namespace repeat
