// registration.cpp

#include "repeat/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "repeat/grid_ops.hpp"

namespace repeat {

void RegistrationConfig::validate() const {
    if (levels < 1 || levels > 5)
        throw Error(ErrorCode::ConfigError, "levels must be in [1,5]");
    if (!(cp_spacing_coarsest > 0))
        throw Error(ErrorCode::ConfigError, "cp_spacing_coarsest must be positive");
    if (!(bending_weight >= 0))
        throw Error(ErrorCode::ConfigError, "bending_weight must be non-negative");
    if (max_iters_per_level < 1)
        throw Error(ErrorCode::ConfigError, "max_iters_per_level must be >= 1");
    if (!(step_init > 0)) throw Error(ErrorCode::ConfigError, "step_init must be positive");
    if (!(grad_tol > 0)) throw Error(ErrorCode::ConfigError, "grad_tol must be positive");
    if (!(smoothing_sigma >= 0))
        throw Error(ErrorCode::ConfigError, "smoothing_sigma must be non-negative");
    if (metric_stride < 1) throw Error(ErrorCode::ConfigError, "metric_stride must be >= 1");
}

namespace {

constexpr double kArmijoC = 1e-4;
constexpr double kMinStep = 1e-12;

struct PassResult {
    double cost = 0;
    size_t omega = 0;
    bool zero_variance = false;
};

// World position of voxel (i,j,k) built incrementally along the x-row.
struct RowWalker {
    Vec3 col_x, col_y, col_z, origin;

    explicit RowWalker(const Geometry& g) {
        col_x = g.direction * Vec3{g.spacing.x, 0, 0};
        col_y = g.direction * Vec3{0, g.spacing.y, 0};
        col_z = g.direction * Vec3{0, 0, g.spacing.z};
        origin = g.origin;
    }
    Vec3 row_start(int j, int k) const { return origin + col_y * double(j) + col_z * double(k); }
};

struct NccSums {
    double sf = 0, sm = 0, sff = 0, smm = 0, sfm = 0;
    size_t n = 0;
};

double ncc_cost_from_sums(const NccSums& s, bool* zero_variance) {
    const double n = static_cast<double>(s.n);
    const double var_f = s.sff - s.sf * s.sf / n;
    const double var_m = s.smm - s.sm * s.sm / n;
    if (var_f <= 1e-12 || var_m <= 1e-12) {
        if (zero_variance) *zero_variance = true;
        return 1.0;
    }
    const double cov = s.sfm - s.sf * s.sm / n;
    return 1.0 - (cov * cov) / (var_f * var_m);
}

// One full pass over the fixed grid: map, sample, accumulate the metric.
PassResult metric_value_pass(MetricKind kind, const ImageVolume& fixed, const ImageVolume& moving,
                             const Mat3& A, const Vec3& t, const std::vector<Vec3>* disp,
                             const ImageVolume* mask, int stride) {
    const auto& dims = fixed.geom.dims;
    const RowWalker walk(fixed.geom);

    double ssd_acc = 0;
    NccSums sums;
    size_t n = 0;

    for (int k = 0; k < dims[2]; k += stride)
        for (int j = 0; j < dims[1]; j += stride) {
            const Vec3 row = walk.row_start(j, k);
            for (int i = 0; i < dims[0]; i += stride) {
                const size_t v = fixed.geom.index(i, j, k);
                if (mask && mask->data[v] == 0.0) continue;
                const Vec3 xw = row + walk.col_x * double(i);
                Vec3 T = A * xw + t;
                if (disp) T += (*disp)[v];
                bool inside = false;
                const double mval = trilinear_sample(moving, moving.geom.world_to_voxel(T), &inside);
                if (!inside) continue;
                const double fval = fixed.data[v];
                ++n;
                if (kind == MetricKind::SSD) {
                    const double r = fval - mval;
                    ssd_acc += r * r;
                } else {
                    sums.sf += fval;
                    sums.sm += mval;
                    sums.sff += fval * fval;
                    sums.smm += mval * mval;
                    sums.sfm += fval * mval;
                }
            }
        }

    PassResult res;
    res.omega = n;
    if (kind == MetricKind::SSD) {
        if (n == 0) throw Error(ErrorCode::EmptyOverlap, "no fixed voxel maps inside the moving grid");
        res.cost = ssd_acc / static_cast<double>(n);
    } else {
        if (n < 8) throw Error(ErrorCode::EmptyOverlap, "overlap region smaller than 8 voxels");
        sums.n = n;
        res.cost = ncc_cost_from_sums(sums, &res.zero_variance);
    }
    if (!std::isfinite(res.cost))
        throw Error(ErrorCode::NonFiniteCost, "similarity metric evaluated to a non-finite value");
    return res;
}

// Pass computing the per-voxel cost gradient w.r.t. the mapped point (world
// frame): gfield[v] = dCost/dT(x_v). Zero outside the overlap region.
PassResult metric_gradient_pass(MetricKind kind, const ImageVolume& fixed,
                                const ImageVolume& moving, const Mat3& A, const Vec3& t,
                                const std::vector<Vec3>* disp, const ImageVolume* mask, int stride,
                                std::vector<Vec3>& gfield) {
    const auto& dims = fixed.geom.dims;
    const RowWalker walk(fixed.geom);
    const size_t nvox = fixed.geom.voxel_count();
    gfield.assign(nvox, Vec3{});

    // cached per-voxel mapping results for the second pass
    std::vector<Vec3> vm_cache(nvox);
    std::vector<double> m_cache(nvox);
    std::vector<uint8_t> in_omega(nvox, 0);

    double ssd_acc = 0;
    NccSums sums;
    size_t n = 0;

    for (int k = 0; k < dims[2]; k += stride)
        for (int j = 0; j < dims[1]; j += stride) {
            const Vec3 row = walk.row_start(j, k);
            for (int i = 0; i < dims[0]; i += stride) {
                const size_t v = fixed.geom.index(i, j, k);
                if (mask && mask->data[v] == 0.0) continue;
                const Vec3 xw = row + walk.col_x * double(i);
                Vec3 T = A * xw + t;
                if (disp) T += (*disp)[v];
                const Vec3 vm = moving.geom.world_to_voxel(T);
                bool inside = false;
                const double mval = trilinear_sample(moving, vm, &inside);
                if (!inside) continue;
                in_omega[v] = 1;
                vm_cache[v] = vm;
                m_cache[v] = mval;
                const double fval = fixed.data[v];
                ++n;
                if (kind == MetricKind::SSD) {
                    const double r = fval - mval;
                    ssd_acc += r * r;
                } else {
                    sums.sf += fval;
                    sums.sm += mval;
                    sums.sff += fval * fval;
                    sums.smm += mval * mval;
                    sums.sfm += fval * mval;
                }
            }
        }

    PassResult res;
    res.omega = n;
    double mean_f = 0, mean_m = 0, cov = 0, var_m = 0, var_prod = 0;
    if (kind == MetricKind::SSD) {
        if (n == 0) throw Error(ErrorCode::EmptyOverlap, "no fixed voxel maps inside the moving grid");
        res.cost = ssd_acc / static_cast<double>(n);
    } else {
        if (n < 8) throw Error(ErrorCode::EmptyOverlap, "overlap region smaller than 8 voxels");
        sums.n = n;
        res.cost = ncc_cost_from_sums(sums, &res.zero_variance);
        if (res.zero_variance) return res;  // gradient stays zero
        const double nn = static_cast<double>(n);
        mean_f = sums.sf / nn;
        mean_m = sums.sm / nn;
        cov = sums.sfm - sums.sf * sums.sm / nn;
        const double var_f = sums.sff - sums.sf * sums.sf / nn;
        var_m = sums.smm - sums.sm * sums.sm / nn;
        var_prod = var_f * var_m;
    }
    if (!std::isfinite(res.cost))
        throw Error(ErrorCode::NonFiniteCost, "similarity metric evaluated to a non-finite value");

    // second pass: gfield[v] = dC/dM(v) * dM/dT(v)
    const Mat3 dm_world = moving.geom.direction;  // dM/dT = D * S^-1 * grad_voxel
    const double inv_n = 1.0 / static_cast<double>(std::max<size_t>(n, 1));
    for (int k = 0; k < dims[2]; k += stride)
        for (int j = 0; j < dims[1]; j += stride)
            for (int i = 0; i < dims[0]; i += stride) {
                const size_t v = fixed.geom.index(i, j, k);
                if (!in_omega[v]) continue;
                const Vec3 gv = trilinear_gradient(moving, vm_cache[v]);
                const Vec3 gworld = dm_world * gv.cdiv(moving.geom.spacing);
                double coeff;
                if (kind == MetricKind::SSD) {
                    coeff = -2.0 * (fixed.data[v] - m_cache[v]) * inv_n;
                } else {
                    // C = 1 - cov^2/(varF varM);
                    // dC/dM_k = -(2 cov/(varF varM)) (f_k - (cov/varM) m_k)
                    const double fk = fixed.data[v] - mean_f;
                    const double mk = m_cache[v] - mean_m;
                    coeff = -(2.0 * cov / var_prod) * (fk - (cov / var_m) * mk);
                }
                gfield[v] = gworld * coeff;
            }
    return res;
}

// Accumulate affine-parameter gradients from the per-voxel field:
// d/dL[r][s] = sum g_r * x_s, d/dt = sum g.
void affine_grad_from_field(const Geometry& geom, const std::vector<Vec3>& gfield, Mat3& d_linear,
                            Vec3& d_translation) {
    d_linear = Mat3{{0, 0, 0, 0, 0, 0, 0, 0, 0}};
    d_translation = {0, 0, 0};
    const RowWalker walk(geom);
    size_t v = 0;
    for (int k = 0; k < geom.dims[2]; ++k)
        for (int j = 0; j < geom.dims[1]; ++j) {
            const Vec3 row = walk.row_start(j, k);
            for (int i = 0; i < geom.dims[0]; ++i, ++v) {
                const Vec3& g = gfield[v];
                if (g.x == 0 && g.y == 0 && g.z == 0) continue;
                const Vec3 xw = row + walk.col_x * double(i);
                for (int r = 0; r < 3; ++r)
                    for (int s = 0; s < 3; ++s) d_linear.at(r, s) += g[r] * xw[s];
                d_translation += g;
            }
        }
}

std::vector<Vec3> dense_displacement(const ControlPointGrid& grid, const Geometry& geom) {
    const SplineSampler sampler = SplineSampler::build(grid, geom);
    std::vector<Vec3> disp;
    sampler.evaluate(grid, geom, disp);
    return disp;
}

struct PyramidLevel {
    ImageVolume fixed;
    ImageVolume moving;
    std::optional<ImageVolume> mask;
    int shrink = 1;
};

// Coarse-to-fine level images: Gaussian smoothing scaled by the shrink
// factor, then resampling. The finest level keeps the input grid but is still
// smoothed, which keeps sharp structures equally band-limited in both images.
std::vector<PyramidLevel> build_pyramid(const ImageVolume& fixed, const ImageVolume& moving,
                                        const ImageVolume* mask, const RegistrationConfig& cfg) {
    std::vector<PyramidLevel> out;
    out.reserve(cfg.levels);
    for (int level = 1; level <= cfg.levels; ++level) {
        const int shrink = 1 << (cfg.levels - level);
        PyramidLevel& pl = out.emplace_back();
        pl.shrink = shrink;
        const Vec3 sigma{cfg.smoothing_sigma * shrink, cfg.smoothing_sigma * shrink,
                         cfg.smoothing_sigma * shrink};
        if (shrink == 1) {
            pl.fixed = gaussian_smooth(fixed, sigma);
            pl.moving = gaussian_smooth(moving, sigma);
        } else {
            pl.fixed = resample_to_spacing(gaussian_smooth(fixed, sigma),
                                           fixed.geom.spacing * double(shrink),
                                           InterpolationKind::Trilinear);
            pl.moving = resample_to_spacing(gaussian_smooth(moving, sigma),
                                            moving.geom.spacing * double(shrink),
                                            InterpolationKind::Trilinear);
        }
        if (mask && shrink == 1) {
            pl.mask.emplace(*mask);
        } else if (mask) {
            pl.mask.emplace(resample_to_spacing(*mask, mask->geom.spacing * double(shrink),
                                                InterpolationKind::NearestNeighbor));
        }
    }
    return out;
}

double fixed_half_extent_mm(const Geometry& g) {
    double r = 0;
    for (int a = 0; a < 3; ++a) r = std::max(r, 0.5 * g.spacing[a] * (g.dims[a] - 1));
    return r;
}

}  // namespace

AffineParams center_of_mass_init(const ImageVolume& fixed, const ImageVolume& moving) {
    auto centroid = [](const ImageVolume& vol) {
        const RowWalker walk(vol.geom);
        double wsum = 0;
        Vec3 acc{};
        size_t v = 0;
        for (int k = 0; k < vol.geom.dims[2]; ++k)
            for (int j = 0; j < vol.geom.dims[1]; ++j) {
                const Vec3 row = walk.row_start(j, k);
                for (int i = 0; i < vol.geom.dims[0]; ++i, ++v) {
                    const double w = std::max(vol.data[v] + 1024.0, 0.0);
                    if (w == 0.0) continue;
                    acc += (row + walk.col_x * double(i)) * w;
                    wsum += w;
                }
            }
        if (wsum <= 0.0)
            throw Error(ErrorCode::DegenerateVolume, "volume has zero total intensity weight");
        return acc / wsum;
    };
    AffineParams p;
    p.linear = Mat3::identity();
    p.translation = centroid(moving) - centroid(fixed);
    return p;
}

double ssd_metric(const ImageVolume& fixed, const ImageVolume& moving,
                  const TotalTransform& transform, const ImageVolume* sample_mask) {
    std::optional<std::vector<Vec3>> disp;
    if (transform.grid) disp = dense_displacement(*transform.grid, fixed.geom);
    return metric_value_pass(MetricKind::SSD, fixed, moving, transform.affine.linear,
                             transform.affine.translation, disp ? &*disp : nullptr, sample_mask, 1)
        .cost;
}

double ncc_metric(const ImageVolume& fixed, const ImageVolume& moving,
                  const TotalTransform& transform, const ImageVolume* sample_mask) {
    std::optional<std::vector<Vec3>> disp;
    if (transform.grid) disp = dense_displacement(*transform.grid, fixed.geom);
    const PassResult res =
        metric_value_pass(MetricKind::NCC, fixed, moving, transform.affine.linear,
                          transform.affine.translation, disp ? &*disp : nullptr, sample_mask, 1);
    if (res.zero_variance)
        warn("ncc_metric: zero variance in the overlap region; cost forced to 1");
    return res.cost;
}

AffineMetricGradient affine_metric_gradient(const ImageVolume& fixed, const ImageVolume& moving,
                                            const AffineParams& affine, MetricKind kind,
                                            const ImageVolume* sample_mask) {
    std::vector<Vec3> gfield;
    const PassResult res = metric_gradient_pass(kind, fixed, moving, affine.linear,
                                                affine.translation, nullptr, sample_mask, 1, gfield);
    AffineMetricGradient out;
    out.cost = res.cost;
    affine_grad_from_field(fixed.geom, gfield, out.d_linear, out.d_translation);
    return out;
}

ControlPointMetricGradient control_point_metric_gradient(const ImageVolume& fixed,
                                                         const ImageVolume& moving,
                                                         const AffineParams& affine,
                                                         const ControlPointGrid& grid,
                                                         MetricKind kind,
                                                         const ImageVolume* sample_mask) {
    const SplineSampler sampler = SplineSampler::build(grid, fixed.geom);
    std::vector<Vec3> disp;
    sampler.evaluate(grid, fixed.geom, disp);
    std::vector<Vec3> gfield;
    const PassResult res = metric_gradient_pass(kind, fixed, moving, affine.linear,
                                                affine.translation, &disp, sample_mask, 1, gfield);
    ControlPointMetricGradient out;
    out.cost = res.cost;
    sampler.adjoint(grid, fixed.geom, gfield, out.d_coeff);
    return out;
}

AffineParams affine_register(const ImageVolume& fixed, const ImageVolume& moving,
                             const AffineParams& init, const RegistrationConfig& config,
                             const ImageVolume* sample_mask) {
    config.validate();
    const std::vector<PyramidLevel> pyramid = build_pyramid(fixed, moving, sample_mask, config);
    const double radius = std::max(1.0, fixed_half_extent_mm(fixed.geom));
    const Vec3 center = fixed.geom.voxel_to_world({0.5 * (fixed.geom.dims[0] - 1),
                                                   0.5 * (fixed.geom.dims[1] - 1),
                                                   0.5 * (fixed.geom.dims[2] - 1)});

    // Optimize T = P (x - c) + c + s; better conditioned than raw (linear, t).
    Mat3 P = init.linear;
    Vec3 s = init.translation - center + P * center;

    for (const PyramidLevel& pl : pyramid) {
        const ImageVolume* mask = pl.mask ? &*pl.mask : nullptr;
        double alpha_prev = config.step_init;

        auto eval_cost = [&](const Mat3& Pm, const Vec3& sv) {
            const Vec3 t_eff = center + sv - Pm * center;
            return metric_value_pass(config.metric, pl.fixed, pl.moving, Pm, t_eff, nullptr, mask,
                                     config.metric_stride)
                .cost;
        };

        double cost = eval_cost(P, s);
        for (int iter = 1; iter <= config.max_iters_per_level; ++iter) {
            const Vec3 t_eff = center + s - P * center;
            std::vector<Vec3> gfield;
            metric_gradient_pass(config.metric, pl.fixed, pl.moving, P, t_eff, nullptr, mask,
                                 config.metric_stride, gfield);
            Mat3 gL;
            Vec3 gt;
            affine_grad_from_field(pl.fixed.geom, gfield, gL, gt);
            // chain rule to centered params: dC/dP[r][s] = gL[r][s] - c_s gt_r
            Mat3 gP = gL;
            for (int r = 0; r < 3; ++r)
                for (int cidx = 0; cidx < 3; ++cidx) gP.at(r, cidx) -= center[cidx] * gt[r];

            // scaled (per-mm) gradient: linear entries act through the radius
            double gmax = 0;
            for (int m = 0; m < 9; ++m) gmax = std::max(gmax, std::abs(gP.m[m]) / radius);
            gmax = std::max(gmax, gt.max_abs());
            if (gmax <= 0) break;

            Mat3 dP;
            Vec3 ds;
            double gdot = 0;
            for (int m = 0; m < 9; ++m) {
                const double gphi = gP.m[m] / radius;
                const double dphi = -gphi / gmax;
                dP.m[m] = dphi / radius;
                gdot += gphi * dphi;
            }
            for (int a = 0; a < 3; ++a) {
                const double dphi = -gt[a] / gmax;
                ds[a] = dphi;
                gdot += gt[a] * dphi;
            }

            double alpha = std::min(2.0 * alpha_prev, config.step_init);
            bool accepted = false;
            double new_cost = cost;
            while (alpha >= kMinStep) {
                Mat3 Pt = P;
                for (int m = 0; m < 9; ++m) Pt.m[m] += alpha * dP.m[m];
                const Vec3 st = s + ds * alpha;
                if (Pt.det() > 0.1) {
                    double c;
                    try {
                        c = eval_cost(Pt, st);
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::EmptyOverlap) throw;
                        c = std::numeric_limits<double>::infinity();
                    }
                    if (c <= cost + kArmijoC * alpha * gdot) {
                        P = Pt;
                        s = st;
                        new_cost = c;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
            alpha_prev = alpha;
            const double rel = (cost - new_cost) / std::max(std::abs(cost), 1e-30);
            cost = new_cost;
            if (rel < config.grad_tol) break;
        }
    }

    AffineParams out;
    out.linear = P;
    out.translation = center + s - P * center;
    if (!(out.linear.det() > 0))
        throw Error(ErrorCode::NonFiniteCost, "affine registration left an orientation flip");
    return out;
}

RegistrationResult ffd_register(const ImageVolume& fixed, const ImageVolume& moving,
                                const AffineParams& affine, const RegistrationConfig& config,
                                const ImageVolume* sample_mask) {
    config.validate();
    const std::vector<PyramidLevel> pyramid = build_pyramid(fixed, moving, sample_mask, config);

    RegistrationResult result;
    result.affine = affine;
    result.converged.assign(config.levels, false);

    ControlPointGrid grid = build_control_grid(
        fixed.geom, Vec3{config.cp_spacing_coarsest, config.cp_spacing_coarsest,
                         config.cp_spacing_coarsest});

    const double lambda = config.bending_weight;

    for (int level = 1; level <= config.levels; ++level) {
        if (level > 1) grid = refine_control_grid(grid);
        const PyramidLevel& pl = pyramid[level - 1];
        const ImageVolume* mask = pl.mask ? &*pl.mask : nullptr;
        const SplineSampler sampler = SplineSampler::build(grid, pl.fixed.geom);

        std::vector<Vec3> disp;
        sampler.evaluate(grid, pl.fixed.geom, disp);

        auto eval_total = [&](const ControlPointGrid& g, std::vector<Vec3>& dbuf, double& metric_part,
                              double& bending_part) {
            sampler.evaluate(g, pl.fixed.geom, dbuf);
            metric_part = metric_value_pass(config.metric, pl.fixed, pl.moving, affine.linear,
                                            affine.translation, &dbuf, mask, config.metric_stride)
                              .cost;
            bending_part = bending_energy(g);
            return metric_part + lambda * bending_part;
        };

        double metric_part = metric_value_pass(config.metric, pl.fixed, pl.moving, affine.linear,
                                               affine.translation, &disp, mask, config.metric_stride)
                                 .cost;
        double bending_part = bending_energy(grid);
        double cost = metric_part + lambda * bending_part;
        result.cost_history.push_back({level, 0, metric_part, bending_part});

        double alpha_prev = config.step_init;
        std::vector<Vec3> gfield, g_metric, g_bend;
        ControlPointGrid trial = grid;
        std::vector<Vec3> trial_disp;

        for (int iter = 1; iter <= config.max_iters_per_level; ++iter) {
            metric_gradient_pass(config.metric, pl.fixed, pl.moving, affine.linear,
                                 affine.translation, &disp, mask, config.metric_stride, gfield);
            sampler.adjoint(grid, pl.fixed.geom, gfield, g_metric);
            bending_energy_gradient(grid, g_bend);

            double gmax = 0;
            for (size_t m = 0; m < g_metric.size(); ++m) {
                g_metric[m] += g_bend[m] * lambda;
                gmax = std::max(gmax, g_metric[m].max_abs());
            }
            if (gmax <= 0) {
                result.converged[level - 1] = true;
                break;
            }
            double gdot = 0;
            for (const Vec3& g : g_metric) gdot -= g.dot(g);
            gdot /= gmax;

            double alpha = std::min(2.0 * alpha_prev, config.step_init);
            bool accepted = false;
            double new_cost = cost, new_metric = metric_part, new_bending = bending_part;
            while (alpha >= kMinStep) {
                const double scale = -alpha / gmax;
                for (size_t m = 0; m < grid.coeff.size(); ++m)
                    trial.coeff[m] = grid.coeff[m] + g_metric[m] * scale;
                double c;
                try {
                    c = eval_total(trial, trial_disp, new_metric, new_bending);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::EmptyOverlap) throw;
                    c = std::numeric_limits<double>::infinity();
                }
                if (c <= cost + kArmijoC * alpha * gdot) {
                    accepted = true;
                    new_cost = c;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                result.converged[level - 1] = true;
                break;
            }
            grid.coeff.swap(trial.coeff);
            disp.swap(trial_disp);
            alpha_prev = alpha;
            result.cost_history.push_back({level, iter, new_metric, new_bending});
            const double rel = (cost - new_cost) / std::max(std::abs(cost), 1e-30);
            cost = new_cost;
            metric_part = new_metric;
            bending_part = new_bending;
            if (rel < config.grad_tol) {
                result.converged[level - 1] = true;
                break;
            }
        }
    }

    result.grid = grid;
    result.field = compose_to_dense(affine, grid, fixed.geom);
    return result;
}

DeformationField compose_to_dense(const AffineParams& affine, const ControlPointGrid& grid,
                                  const Geometry& fixed_geometry) {
    DeformationField field;
    field.geom = fixed_geometry;
    const SplineSampler sampler = SplineSampler::build(grid, fixed_geometry);
    sampler.evaluate(grid, fixed_geometry, field.u);

    const RowWalker walk(fixed_geometry);
    size_t v = 0;
    for (int k = 0; k < fixed_geometry.dims[2]; ++k)
        for (int j = 0; j < fixed_geometry.dims[1]; ++j) {
            const Vec3 row = walk.row_start(j, k);
            for (int i = 0; i < fixed_geometry.dims[0]; ++i, ++v) {
                const Vec3 xw = row + walk.col_x * double(i);
                field.u[v] += affine.apply(xw) - xw;
            }
        }
    return field;
}

}  // namespace repeat
