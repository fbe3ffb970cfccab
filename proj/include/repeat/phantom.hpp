// phantom.hpp - synthetic inspiration/expiration pairs with an ellipsoid
// "liver" under analytically known warps; supplies the ground truth every
// acceptance test is checked against.
#pragma once

#include <array>
#include <cstdint>

#include "repeat/volume.hpp"

namespace repeat {

enum class WarpKind { Translation, UniformScale, Polynomial, Respiratory };

// Closed-form warps with closed-form Jacobian determinants.
//
// Polynomial (separable, per axis a, d = p - center):
//   T_a(p) = p_a + lin_a d_a + quad_a d_a^2,   dT_a/dp_a = 1 + lin_a + 2 quad_a d_a
//
// Respiratory, L(z) = 1 / (1 + exp(-(z - z0)/width)), L' = L(1-L)/width:
//   u_z  = amp_z * L(z)
//   u_xy = -compress * (p_xy - center_xy) * L(z)
//   det  = (1 + amp_z L') (1 - compress L)^2
struct AnalyticWarp {
    WarpKind kind = WarpKind::Translation;

    Vec3 translation{0, 0, 0};

    double scale = 1.0;
    Vec3 center{0, 0, 0};

    Vec3 poly_linear{0, 0, 0};
    Vec3 poly_quadratic{0, 0, 0};

    double amp_z = 0;      // mm, cranio-caudal push
    double compress = 0;   // in-plane compression per unit L (negative = expansion)
    double z0 = 0;         // mm, lung boundary
    double width = 1;      // mm, transition sharpness
};

struct PhantomSpec {
    std::array<int, 3> dims{96, 96, 96};
    Vec3 spacing{2, 2, 2};
    Vec3 liver_semi_axes{55, 40, 35};  // mm
    Vec3 liver_center{15, 5, -25};     // mm, world
    double liver_hu = 90;
    double body_hu = 40;
    double lung_hu = -800;
    double background_hu = -1024;
    double noise_sigma = 10;  // HU
    uint64_t seed = 0;
};

struct PhantomImages {
    ImageVolume volume;      // intensity, HU
    ImageVolume liver_mask;  // exact ellipsoid indicator
};

struct SynthesizedPair {
    ImageVolume fixed;   // inspiration phase (the phantom itself)
    ImageVolume moving;  // expiration phase (the tissue model pulled through the inverse warp)
    double ground_truth_delta_percent = 0;
};

struct WarpSample {
    Vec3 mapped;
    double det = 1;
};

// Closed-form map and determinant at a point.
WarpSample warp_analytic(const AnalyticWarp& warp, const WorldPoint& point);

// Noiseless tissue model value at a world point.
double phantom_tissue_at(const PhantomSpec& spec, const WorldPoint& point);

PhantomImages generate_phantom(const PhantomSpec& spec);

// Fixed-point inversion of the warp (tolerance 1e-6 mm, at most 50 iterations).
WorldPoint invert_warp(const AnalyticWarp& warp, const WorldPoint& target);

// Both phases are voxel-center evaluations of the same analytic model (the
// moving one at inverse-warped positions), so neither image is blurrier than
// the other. Noise realizations are independent between phases; with the
// identity warp and sigma 0 the two volumes are bit-identical.
SynthesizedPair synthesize_pair(const PhantomSpec& spec, const AnalyticWarp& warp);

// Brute-force oracle: supersample every mask voxel `factor`^3 times, average
// the analytic determinant over the sample points.
double ground_truth_volume_change(const ImageVolume& mask, const AnalyticWarp& warp,
                                  int factor = 4);

// Frozen fixture: cranio-caudal expansion toward the lung boundary whose
// ground-truth volume change is +8% of the default phantom's liver (value
// pinned by the supersampled oracle in the acceptance suite).
AnalyticWarp default_respiratory_warp();

}  // namespace repeat
