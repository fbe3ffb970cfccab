// phantom.cpp

#include "repeat/phantom.hpp"

#include <cmath>

#include "repeat/grid_ops.hpp"

namespace repeat {

namespace {

double logistic(double z, double z0, double width) {
    return 1.0 / (1.0 + std::exp(-(z - z0) / width));
}

}  // namespace

WarpSample warp_analytic(const AnalyticWarp& warp, const WorldPoint& p) {
    WarpSample s;
    switch (warp.kind) {
        case WarpKind::Translation:
            s.mapped = p + warp.translation;
            s.det = 1.0;
            break;
        case WarpKind::UniformScale:
            s.mapped = warp.center + (p - warp.center) * warp.scale;
            s.det = warp.scale * warp.scale * warp.scale;
            break;
        case WarpKind::Polynomial: {
            const Vec3 d = p - warp.center;
            s.det = 1.0;
            for (int a = 0; a < 3; ++a) {
                s.mapped[a] = p[a] + warp.poly_linear[a] * d[a] + warp.poly_quadratic[a] * d[a] * d[a];
                s.det *= 1.0 + warp.poly_linear[a] + 2.0 * warp.poly_quadratic[a] * d[a];
            }
            break;
        }
        case WarpKind::Respiratory: {
            const double L = logistic(p.z, warp.z0, warp.width);
            const double Lp = L * (1.0 - L) / warp.width;
            s.mapped.x = p.x - warp.compress * (p.x - warp.center.x) * L;
            s.mapped.y = p.y - warp.compress * (p.y - warp.center.y) * L;
            s.mapped.z = p.z + warp.amp_z * L;
            const double dzz = 1.0 + warp.amp_z * Lp;
            const double dxy = 1.0 - warp.compress * L;
            s.det = dzz * dxy * dxy;
            break;
        }
    }
    return s;
}

namespace {

struct TissueModel {
    const PhantomSpec& spec;
    Vec3 extent;
    double body_rx, body_ry, body_hz;
    Vec3 lung_center, lung_semi;

    explicit TissueModel(const PhantomSpec& s)
        : spec(s),
          extent{s.spacing.x * s.dims[0], s.spacing.y * s.dims[1], s.spacing.z * s.dims[2]},
          body_rx(0.42 * extent.x),
          body_ry(0.42 * extent.y),
          body_hz(0.45 * extent.z),
          lung_center{s.liver_center.x, s.liver_center.y,
                      s.liver_center.z + s.liver_semi_axes.z + 35.0},
          lung_semi{60, 55, 40} {}

    bool in_body(const Vec3& p) const {
        const double e = (p.x / body_rx) * (p.x / body_rx) + (p.y / body_ry) * (p.y / body_ry);
        return e <= 1.0 && std::abs(p.z) <= body_hz;
    }
    bool in_liver(const Vec3& p) const {
        const Vec3 d = p - spec.liver_center;
        const double e = (d.x / spec.liver_semi_axes.x) * (d.x / spec.liver_semi_axes.x) +
                         (d.y / spec.liver_semi_axes.y) * (d.y / spec.liver_semi_axes.y) +
                         (d.z / spec.liver_semi_axes.z) * (d.z / spec.liver_semi_axes.z);
        return e <= 1.0;
    }
    bool in_lung(const Vec3& p) const {
        const Vec3 d = p - lung_center;
        const double e = (d.x / lung_semi.x) * (d.x / lung_semi.x) +
                         (d.y / lung_semi.y) * (d.y / lung_semi.y) +
                         (d.z / lung_semi.z) * (d.z / lung_semi.z);
        return e <= 1.0;
    }
    double value(const Vec3& p) const {
        if (in_liver(p)) return spec.liver_hu;
        if (in_body(p)) return in_lung(p) ? spec.lung_hu : spec.body_hu;
        return spec.background_hu;
    }
};

Geometry phantom_geometry(const PhantomSpec& spec) {
    Geometry g;
    g.dims = spec.dims;
    g.spacing = spec.spacing;
    g.direction = Mat3::identity();
    // centered FOV; keeps origins exactly representable in the file header
    g.origin = {-0.5 * spec.spacing.x * (spec.dims[0] - 1),
                -0.5 * spec.spacing.y * (spec.dims[1] - 1),
                -0.5 * spec.spacing.z * (spec.dims[2] - 1)};
    return g;
}

void validate_spec(const PhantomSpec& spec, const TissueModel& tm) {
    for (int a = 0; a < 3; ++a) {
        if (spec.dims[a] < 2) throw Error(ErrorCode::SpecInvalid, "phantom dims must be >= 2");
        if (!(spec.spacing[a] > 0))
            throw Error(ErrorCode::SpecInvalid, "phantom spacing must be positive");
        if (!(spec.liver_semi_axes[a] > 0))
            throw Error(ErrorCode::SpecInvalid, "liver semi-axes must be positive");
    }
    if (!(spec.noise_sigma >= 0))
        throw Error(ErrorCode::SpecInvalid, "noise sigma must be non-negative");
    // the liver ellipsoid must fit inside the body region
    for (int a = 0; a < 3; ++a)
        for (int sgn = -1; sgn <= 1; sgn += 2) {
            Vec3 p = spec.liver_center;
            p[a] += sgn * spec.liver_semi_axes[a];
            if (!tm.in_body(p))
                throw Error(ErrorCode::SpecInvalid, "liver ellipsoid escapes the body region");
        }
}

}  // namespace

double phantom_tissue_at(const PhantomSpec& spec, const WorldPoint& point) {
    return TissueModel(spec).value(point);
}

PhantomImages generate_phantom(const PhantomSpec& spec) {
    const TissueModel tm(spec);
    validate_spec(spec, tm);
    const Geometry g = phantom_geometry(spec);

    PhantomImages out;
    out.volume.geom = g;
    out.volume.kind = VolumeKind::Intensity;
    out.volume.data.resize(g.voxel_count());
    out.liver_mask.geom = g;
    out.liver_mask.kind = VolumeKind::Mask;
    out.liver_mask.data.resize(g.voxel_count());

    size_t v = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++v) {
                const Vec3 p = g.voxel_to_world({double(i), double(j), double(k)});
                double hu = tm.value(p);
                if (spec.noise_sigma > 0) hu += spec.noise_sigma * counter_normal(spec.seed, v);
                out.volume.data[v] = hu;
                out.liver_mask.data[v] = tm.in_liver(p) ? 1.0 : 0.0;
            }
    return out;
}

WorldPoint invert_warp(const AnalyticWarp& warp, const WorldPoint& target) {
    // solve T(x) = target by fixed point: x <- target - u(x)
    WorldPoint x = target;
    for (int it = 0; it < 50; ++it) {
        const WarpSample s = warp_analytic(warp, x);
        const Vec3 residual = s.mapped - target;
        if (residual.max_abs() < 1e-6) return x;
        x = x - residual;
    }
    throw Error(ErrorCode::WarpNotInvertible,
                "fixed-point inversion did not reach 1e-6 mm in 50 iterations");
}

SynthesizedPair synthesize_pair(const PhantomSpec& spec, const AnalyticWarp& warp) {
    const TissueModel tm(spec);
    validate_spec(spec, tm);
    const Geometry g = phantom_geometry(spec);

    SynthesizedPair pair;
    PhantomImages ph = generate_phantom(spec);
    pair.fixed = std::move(ph.volume);

    pair.moving.geom = g;
    pair.moving.kind = VolumeKind::Intensity;
    pair.moving.data.resize(g.voxel_count());
    // separate noise stream for the second phase; identical when sigma is 0
    const uint64_t moving_seed = spec.seed ^ 0x517cc1b727220a95ull;

    size_t v = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++v) {
                const WorldPoint y = g.voxel_to_world({double(i), double(j), double(k)});
                double hu = tm.value(invert_warp(warp, y));
                if (spec.noise_sigma > 0)
                    hu += spec.noise_sigma * counter_normal(moving_seed, v);
                pair.moving.data[v] = hu;
            }
    pair.ground_truth_delta_percent = ground_truth_volume_change(ph.liver_mask, warp, 4);
    return pair;
}

double ground_truth_volume_change(const ImageVolume& mask, const AnalyticWarp& warp, int factor) {
    if (factor < 1) throw Error(ErrorCode::SpecInvalid, "supersampling factor must be >= 1");
    const Geometry& g = mask.geom;

    double det_sum = 0;
    size_t n = 0;
    size_t v = 0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++v) {
                if (mask.data[v] == 0.0) continue;
                for (int sk = 0; sk < factor; ++sk)
                    for (int sj = 0; sj < factor; ++sj)
                        for (int si = 0; si < factor; ++si) {
                            const Vec3 idx{i + (si + 0.5) / factor - 0.5,
                                           j + (sj + 0.5) / factor - 0.5,
                                           k + (sk + 0.5) / factor - 0.5};
                            det_sum += warp_analytic(warp, g.voxel_to_world(idx)).det;
                            ++n;
                        }
            }
    if (n == 0) throw Error(ErrorCode::EmptyMask, "mask is empty");
    return 100.0 * (det_sum / static_cast<double>(n) - 1.0);
}

AnalyticWarp default_respiratory_warp() {
    AnalyticWarp w;
    w.kind = WarpKind::Respiratory;
    w.amp_z = 14.08;      // calibrated: +7.999% on the default phantom's liver
    w.compress = -0.02;   // slight in-plane expansion
    w.z0 = 10.0;          // superior liver boundary of the default phantom
    w.width = 45.0;
    w.center = {15, 5, 0};
    return w;
}

}  // namespace repeat
