// pipeline.cpp

#include "repeat/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "repeat/deformation_analysis.hpp"
#include "repeat/grid_ops.hpp"
#include "repeat/nifti_io.hpp"
#include "repeat/overlay.hpp"

namespace repeat {

void PipelineConfig::validate() const {
    reg.validate();
    if (!(window_lo < window_hi))
        throw Error(ErrorCode::ConfigError, "window_lo must be below window_hi");
    for (int a = 0; a < 3; ++a)
        if (!(resample_spacing[a] > 0))
            throw Error(ErrorCode::ConfigError, "resample_spacing must be positive");
    if (fov_margin < 0) throw Error(ErrorCode::ConfigError, "fov_margin must be >= 0");
    if (!(max_folding >= 0 && max_folding <= 1))
        throw Error(ErrorCode::ConfigError, "max_folding must be in [0,1]");
    if (!(mask_dilation_mm >= 0))
        throw Error(ErrorCode::ConfigError, "mask_dilation_mm must be >= 0");
}

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_number(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "key '" + key + "' has non-numeric value '" + value + "'");
    }
}

long parse_integer(const std::string& key, const std::string& value) {
    const double v = parse_number(key, value);
    if (v != std::floor(v))
        throw Error(ErrorCode::ConfigError, "key '" + key + "' expects an integer, got '" + value + "'");
    return static_cast<long>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw Error(ErrorCode::ConfigError, "key '" + key + "' expects a boolean, got '" + value + "'");
}

Vec3 parse_spacing(const std::string& key, const std::string& value) {
    std::vector<double> parts;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(parse_number(key, trim(item)));
    if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
    if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
    throw Error(ErrorCode::ConfigError, "key '" + key + "' expects one or three values");
}

}  // namespace

PipelineConfig parse_pipeline_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ConfigError,
                        "line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (value.empty())
            throw Error(ErrorCode::ConfigError, "key '" + key + "' has an empty value");

        if (key == "levels") cfg.reg.levels = static_cast<int>(parse_integer(key, value));
        else if (key == "cp_spacing_coarsest") cfg.reg.cp_spacing_coarsest = parse_number(key, value);
        else if (key == "metric") {
            if (value == "ssd" || value == "SSD") cfg.reg.metric = MetricKind::SSD;
            else if (value == "ncc" || value == "NCC") cfg.reg.metric = MetricKind::NCC;
            else throw Error(ErrorCode::ConfigError, "metric must be 'ssd' or 'ncc'");
        }
        else if (key == "bending_weight") cfg.reg.bending_weight = parse_number(key, value);
        else if (key == "max_iters_per_level")
            cfg.reg.max_iters_per_level = static_cast<int>(parse_integer(key, value));
        else if (key == "step_init") cfg.reg.step_init = parse_number(key, value);
        else if (key == "grad_tol") cfg.reg.grad_tol = parse_number(key, value);
        else if (key == "smoothing_sigma") cfg.reg.smoothing_sigma = parse_number(key, value);
        else if (key == "seed") cfg.reg.seed = static_cast<uint64_t>(parse_integer(key, value));
        else if (key == "metric_stride")
            cfg.reg.metric_stride = static_cast<int>(parse_integer(key, value));
        else if (key == "window_lo") cfg.window_lo = parse_number(key, value);
        else if (key == "window_hi") cfg.window_hi = parse_number(key, value);
        else if (key == "resample_spacing") cfg.resample_spacing = parse_spacing(key, value);
        else if (key == "fov_margin") cfg.fov_margin = static_cast<int>(parse_integer(key, value));
        else if (key == "max_folding") cfg.max_folding = parse_number(key, value);
        else if (key == "restrict_metric_to_mask") cfg.restrict_metric_to_mask = parse_bool(key, value);
        else if (key == "mask_dilation_mm") cfg.mask_dilation_mm = parse_number(key, value);
        else if (key == "foreground_mask") cfg.foreground_mask = parse_bool(key, value);
        else if (key == "foreground_threshold_hu")
            cfg.foreground_threshold_hu = parse_number(key, value);
        else throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

PipelineConfig parse_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config_text(ss.str());
}

std::string config_digest(const PipelineConfig& cfg, bool swap_phases) {
    std::string canon;
    auto add = [&](const std::string& k, const std::string& v) { canon += k + "=" + v + "\n"; };
    add("levels", std::to_string(cfg.reg.levels));
    add("cp_spacing_coarsest", format_double(cfg.reg.cp_spacing_coarsest));
    add("metric", cfg.reg.metric == MetricKind::SSD ? "ssd" : "ncc");
    add("bending_weight", format_double(cfg.reg.bending_weight));
    add("max_iters_per_level", std::to_string(cfg.reg.max_iters_per_level));
    add("step_init", format_double(cfg.reg.step_init));
    add("grad_tol", format_double(cfg.reg.grad_tol));
    add("smoothing_sigma", format_double(cfg.reg.smoothing_sigma));
    add("seed", std::to_string(cfg.reg.seed));
    add("metric_stride", std::to_string(cfg.reg.metric_stride));
    add("window_lo", format_double(cfg.window_lo));
    add("window_hi", format_double(cfg.window_hi));
    add("resample_spacing", format_double(cfg.resample_spacing.x) + "," +
                                format_double(cfg.resample_spacing.y) + "," +
                                format_double(cfg.resample_spacing.z));
    add("fov_margin", std::to_string(cfg.fov_margin));
    add("max_folding", format_double(cfg.max_folding));
    add("restrict_metric_to_mask", cfg.restrict_metric_to_mask ? "true" : "false");
    add("mask_dilation_mm", format_double(cfg.mask_dilation_mm));
    add("foreground_mask", cfg.foreground_mask ? "true" : "false");
    add("foreground_threshold_hu", format_double(cfg.foreground_threshold_hu));
    add("swap_phases", swap_phases ? "true" : "false");

    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canon)));
    return buf;
}

namespace {

// Resampling a windowed volume samples air (-1024) outside the grid; clamping
// back to the window range restores the intended 0 there.
ImageVolume resample_windowed(const ImageVolume& vol, const Vec3& spacing) {
    ImageVolume out = resample_to_spacing(vol, spacing, InterpolationKind::Trilinear);
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

}  // namespace

ImageVolume build_foreground_mask(const ImageVolume& raw_hu, double threshold_hu) {
    return largest_connected_component(threshold_mask(raw_hu, threshold_hu, 1e6));
}

namespace {

int mask_centroid_slice(const ImageVolume& mask, int axis) {
    double acc = 0;
    size_t n = 0;
    size_t v = 0;
    for (int k = 0; k < mask.geom.dims[2]; ++k)
        for (int j = 0; j < mask.geom.dims[1]; ++j)
            for (int i = 0; i < mask.geom.dims[0]; ++i, ++v) {
                if (mask.data[v] == 0.0) continue;
                const int idx[3] = {i, j, k};
                acc += idx[axis];
                ++n;
            }
    if (n == 0) return mask.geom.dims[axis] / 2;
    return std::clamp(static_cast<int>(std::lround(acc / static_cast<double>(n))), 0,
                      mask.geom.dims[axis] - 1);
}

}  // namespace

PipelineArtifacts run_pipeline(const std::string& fixed_path, const std::string& moving_path,
                               const std::string& mask_path, const PipelineConfig& cfg,
                               const PipelineOptions& opt) {
    cfg.validate();
    std::filesystem::create_directories(opt.out_dir);

    ImageVolume fixed_raw = read_nifti(fixed_path, VolumeKind::Intensity);
    ImageVolume moving_raw = read_nifti(moving_path, VolumeKind::Intensity);
    ImageVolume mask = read_nifti(mask_path, VolumeKind::Mask);
    if (opt.swap_phases) std::swap(fixed_raw, moving_raw);

    PipelineArtifacts art;
    art.fixed_phase = opt.swap_phases ? "expiration" : "inspiration";
    art.moving_phase = opt.swap_phases ? "inspiration" : "expiration";

    if (!mask.geom.same_grid(fixed_raw.geom, 1e-3)) {
        warn("liver mask is not on the fixed grid; resampling with nearest neighbor");
        mask = resample_onto(mask, fixed_raw.geom, InterpolationKind::NearestNeighbor);
    }

    // window -> resample to the processing resolution
    const ImageVolume fixed_proc =
        resample_windowed(window_intensity(fixed_raw, cfg.window_lo, cfg.window_hi),
                          cfg.resample_spacing);
    const ImageVolume moving_proc =
        resample_windowed(window_intensity(moving_raw, cfg.window_lo, cfg.window_hi),
                          cfg.resample_spacing);
    const ImageVolume mask_proc =
        resample_onto(mask, fixed_proc.geom, InterpolationKind::NearestNeighbor);

    // centroid initialization runs on raw HU so air carries no weight
    const ImageVolume fixed_raw_proc =
        resample_to_spacing(fixed_raw, cfg.resample_spacing, InterpolationKind::Trilinear);
    const ImageVolume moving_raw_proc =
        resample_to_spacing(moving_raw, cfg.resample_spacing, InterpolationKind::Trilinear);
    const AffineParams com = center_of_mass_init(fixed_raw_proc, moving_raw_proc);

    const ImageVolume* sample_mask = nullptr;
    ImageVolume sample_region;
    if (cfg.restrict_metric_to_mask) {
        sample_region = dilate_mask(mask_proc, cfg.mask_dilation_mm);
        sample_mask = &sample_region;
    } else if (cfg.foreground_mask) {
        sample_region = build_foreground_mask(fixed_raw_proc, cfg.foreground_threshold_hu);
        sample_mask = &sample_region;
    }

    const AffineParams affine =
        affine_register(fixed_proc, moving_proc, com, cfg.reg, sample_mask);
    const RegistrationResult reg =
        ffd_register(fixed_proc, moving_proc, affine, cfg.reg, sample_mask);

    const JacobianField jac = jacobian_determinant_field(reg.field);
    const ImageVolume valid = fov_valid_mask(reg.field, moving_proc.geom, cfg.fov_margin);

    VolumeChangeReport report = measure_partial_volume_change(mask_proc, jac, valid, cfg.max_folding);
    report.config_digest = config_digest(cfg, opt.swap_phases);
    art.report = report;

    const std::filesystem::path dir(opt.out_dir);

    // intermediates
    art.field_path = (dir / "deformation_field.nii.gz").string();
    write_deformation_field(reg.field, art.field_path);

    ImageVolume jac_vol;
    jac_vol.geom = jac.geom;
    jac_vol.kind = VolumeKind::Intensity;
    jac_vol.data = jac.det;
    art.jacobian_path = (dir / "jacobian.nii.gz").string();
    write_nifti(jac_vol, art.jacobian_path);

    art.cost_history_path = (dir / "cost_history.csv").string();
    {
        std::ofstream csv(art.cost_history_path, std::ios::trunc);
        if (!csv) throw Error(ErrorCode::IoFailure, "cannot write " + art.cost_history_path);
        csv << "level,iteration,metric,bending\n";
        for (const CostEntry& e : reg.cost_history)
            csv << e.level << "," << e.iteration << "," << format_double(e.metric_value) << ","
                << format_double(e.bending_value) << "\n";
    }

    const char* overlay_names[3] = {"overlay_sagittal.png", "overlay_coronal.png",
                                    "overlay_axial.png"};
    for (int axis = 0; axis < 3; ++axis) {
        const int slice = mask_centroid_slice(mask_proc, axis);
        const RgbImage img = render_overlay(fixed_proc, &mask_proc, axis, slice, 0.0, 1.0);
        const std::string path = (dir / overlay_names[axis]).string();
        write_png_rgb8(img, path);
        art.overlay_paths.push_back(path);
    }

    // report JSON, stable field order
    nlohmann::ordered_json j;
    j["v_fixed_ml"] = report.v_fixed_ml;
    j["v_mapped_ml"] = report.v_mapped_ml;
    j["delta_percent"] = report.delta_percent;
    j["coverage_fraction"] = report.coverage_fraction;
    j["folding_fraction"] = report.folding_fraction;
    j["n_voxels"] = report.n_voxels;
    j["voxel_volume_ml"] = report.voxel_volume_ml;
    j["fixed_phase"] = art.fixed_phase;
    j["moving_phase"] = art.moving_phase;
    j["config_digest"] = report.config_digest;
    j["cost_history_path"] = "cost_history.csv";
    if (!opt.deterministic) {
        const auto now = std::chrono::system_clock::now();
        j["generated_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                                now.time_since_epoch())
                                .count();
    }
    art.report_path = (dir / "report.json").string();
    std::ofstream out(art.report_path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + art.report_path);
    out << j.dump(2) << "\n";
    return art;
}

}  // namespace repeat
