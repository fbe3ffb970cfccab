// registration.hpp - center-of-mass initialization, affine registration and
// multi-resolution cubic B-spline free-form deformation.
//
// Convention: fixed = inspiration, moving = expiration. The estimated
// transform maps fixed-space world points into moving space,
// T(x) = A x + t + u_spline(x).
#pragma once

#include <cstdint>
#include <vector>

#include "repeat/bspline.hpp"
#include "repeat/volume.hpp"

namespace repeat {

struct AffineParams {
    Mat3 linear;        // orientation-preserving: det > 0
    Vec3 translation;   // mm

    WorldPoint apply(const WorldPoint& p) const { return linear * p + translation; }
};

enum class MetricKind { SSD, NCC };

struct RegistrationConfig {
    int levels = 3;                     // 1..5, coarse to fine
    double cp_spacing_coarsest = 32.0;  // mm; halved per level
    // SSD is the default: intensities are calibrated HU and NCC's global
    // variance normalization couples the overlap composition into the cost,
    // which destabilizes runs on truncated fields of view.
    MetricKind metric = MetricKind::SSD;
    double bending_weight = 0.01;
    int max_iters_per_level = 100;
    double step_init = 1.0;             // mm
    double grad_tol = 1e-4;             // relative cost decrease
    double smoothing_sigma = 3.0;       // mm, scaled by the per-level shrink factor
    uint64_t seed = 0;                  // reserved for stochastic sampling (off by default)
    int metric_stride = 1;

    void validate() const;
};

struct CostEntry {
    int level = 0;       // 1-based, 1 = coarsest
    int iteration = 0;   // 0 = cost before the first step
    double metric_value = 0;
    double bending_value = 0;
};

struct RegistrationResult {
    AffineParams affine;
    ControlPointGrid grid;
    DeformationField field;
    std::vector<CostEntry> cost_history;
    std::vector<bool> converged;  // per level
};

// Affine part plus optional spline refinement; the argument shape of the
// similarity metrics.
struct TotalTransform {
    AffineParams affine;
    const ControlPointGrid* grid = nullptr;
};

// linear = I, translation = intensity-weighted centroid difference
// (moving - fixed), weights max(v + 1024, 0).
AffineParams center_of_mass_init(const ImageVolume& fixed, const ImageVolume& moving);

// Mean squared difference over the overlap region (in-mask fixed voxels whose
// mapped point lands inside the moving grid).
double ssd_metric(const ImageVolume& fixed, const ImageVolume& moving,
                  const TotalTransform& transform, const ImageVolume* sample_mask = nullptr);

// 1 - squared normalized cross-correlation over the overlap region.
double ncc_metric(const ImageVolume& fixed, const ImageVolume& moving,
                  const TotalTransform& transform, const ImageVolume* sample_mask = nullptr);

// Analytic metric gradients (chain rule through the interpolated moving
// image); checked against central finite differences in the test suite.
struct AffineMetricGradient {
    double cost = 0;
    Mat3 d_linear;
    Vec3 d_translation;
};
AffineMetricGradient affine_metric_gradient(const ImageVolume& fixed, const ImageVolume& moving,
                                            const AffineParams& affine, MetricKind kind,
                                            const ImageVolume* sample_mask = nullptr);

struct ControlPointMetricGradient {
    double cost = 0;
    std::vector<Vec3> d_coeff;
};
ControlPointMetricGradient control_point_metric_gradient(const ImageVolume& fixed,
                                                         const ImageVolume& moving,
                                                         const AffineParams& affine,
                                                         const ControlPointGrid& grid,
                                                         MetricKind kind,
                                                         const ImageVolume* sample_mask = nullptr);

// Gradient descent with Armijo backtracking (factor 0.5, c = 1e-4) over the
// 12 affine parameters, run over the same multi-resolution pyramid as the FFD.
AffineParams affine_register(const ImageVolume& fixed, const ImageVolume& moving,
                             const AffineParams& init, const RegistrationConfig& config,
                             const ImageVolume* sample_mask = nullptr);

RegistrationResult ffd_register(const ImageVolume& fixed, const ImageVolume& moving,
                                const AffineParams& affine, const RegistrationConfig& config,
                                const ImageVolume* sample_mask = nullptr);

// u(x) = (A x + t + s(x)) - x for every voxel of the given geometry.
DeformationField compose_to_dense(const AffineParams& affine, const ControlPointGrid& grid,
                                  const Geometry& fixed_geometry);

}  // namespace repeat
