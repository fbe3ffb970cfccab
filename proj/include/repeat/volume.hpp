// volume.hpp - grid-attached data types: image volumes, deformation fields,
// Jacobian maps, and the voxel<->world geometry contract.
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "repeat/core.hpp"
#include "repeat/errors.hpp"

namespace repeat {

using WorldPoint = Vec3;

enum class VolumeKind { Intensity, Mask };

// Physical placement of a regular voxel grid. world = direction * diag(spacing) * index + origin,
// where `index` addresses voxel centers and may be fractional.
struct Geometry {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1, 1, 1};   // mm per voxel step
    Vec3 origin{0, 0, 0};    // world position of voxel (0,0,0) center, mm
    Mat3 direction;          // orthonormal voxel-axis -> world-axis map

    size_t voxel_count() const {
        return static_cast<size_t>(dims[0]) * static_cast<size_t>(dims[1]) *
               static_cast<size_t>(dims[2]);
    }

    size_t index(int i, int j, int k) const {
        return static_cast<size_t>(i) +
               static_cast<size_t>(dims[0]) *
                   (static_cast<size_t>(j) + static_cast<size_t>(dims[1]) * static_cast<size_t>(k));
    }

    WorldPoint voxel_to_world(const Vec3& idx) const {
        return direction * spacing.cmul(idx) + origin;
    }

    // direction is orthonormal, so its inverse is the transpose.
    Vec3 world_to_voxel(const WorldPoint& p) const {
        return (direction.transpose() * (p - origin)).cdiv(spacing);
    }

    double voxel_volume_mm3() const { return spacing.x * spacing.y * spacing.z; }

    bool same_grid(const Geometry& o, double tol = 1e-6) const {
        return dims == o.dims && (spacing - o.spacing).max_abs() <= tol &&
               (origin - o.origin).max_abs() <= tol && direction.max_abs_diff(o.direction) <= tol;
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 2) throw Error(ErrorCode::SpecInvalid, "volume dims must be >= 2 per axis");
            if (!(spacing[a] > 0.0)) throw Error(ErrorCode::InvalidSpacing, "spacing must be positive");
        }
        if (!origin.finite() || !direction.finite())
            throw Error(ErrorCode::SpecInvalid, "non-finite geometry");
        const Mat3 dtd = direction.transpose() * direction;
        if (dtd.max_abs_diff(Mat3::identity()) >= 1e-6)
            throw Error(ErrorCode::MalformedHeader, "direction matrix is not orthonormal");
    }
};

// 3D scalar grid. Holds CT intensities (HU) or {0,1} label masks; data is
// stored as float64 regardless of the on-disk type, x fastest.
struct ImageVolume {
    Geometry geom;
    VolumeKind kind = VolumeKind::Intensity;
    std::vector<double> data;

    double at(int i, int j, int k) const { return data[geom.index(i, j, k)]; }
    double& at(int i, int j, int k) { return data[geom.index(i, j, k)]; }

    void validate() const {
        geom.validate();
        if (data.size() != geom.voxel_count())
            throw Error(ErrorCode::SpecInvalid, "data length does not match dims");
        if (kind == VolumeKind::Mask) {
            for (double v : data)
                if (v != 0.0 && v != 1.0)
                    throw Error(ErrorCode::NotAMask, "mask values must be 0 or 1");
        }
    }
};

// Dense per-voxel displacement u(x), world frame, mm, on the fixed grid.
// Total transform: T(x) = x_world + u(x).
struct DeformationField {
    Geometry geom;
    std::vector<Vec3> u;

    const Vec3& at(int i, int j, int k) const { return u[geom.index(i, j, k)]; }
    Vec3& at(int i, int j, int k) { return u[geom.index(i, j, k)]; }
};

// Per-voxel determinant of dT/dx; the local deformed-to-original volume ratio.
struct JacobianField {
    Geometry geom;
    std::vector<double> det;
};

inline WorldPoint voxel_to_world(const ImageVolume& vol, const Vec3& idx) {
    return vol.geom.voxel_to_world(idx);
}

inline Vec3 world_to_voxel(const ImageVolume& vol, const WorldPoint& p) {
    return vol.geom.world_to_voxel(p);
}

}  // namespace repeat
