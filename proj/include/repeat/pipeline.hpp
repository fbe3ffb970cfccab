// pipeline.hpp - end-to-end orchestration: files in, volume-change report and
// QC artifacts out.
#pragma once

#include <string>
#include <vector>

#include "repeat/registration.hpp"
#include "repeat/volume_change.hpp"

namespace repeat {

struct PipelineConfig {
    RegistrationConfig reg;
    double window_lo = -100;  // HU
    double window_hi = 400;
    Vec3 resample_spacing{2, 2, 2};  // mm, processing resolution
    int fov_margin = 1;              // voxels inside the moving grid
    double max_folding = 0.01;
    bool restrict_metric_to_mask = false;
    double mask_dilation_mm = 20;
    // Metric sampling restricted to the patient foreground. Mean-over-overlap
    // metrics otherwise reward transforms that pull more background into the
    // overlap, biasing scale-like components.
    bool foreground_mask = true;
    double foreground_threshold_hu = -950;

    void validate() const;
};

// Foreground sampling region: threshold at the configured HU, keep the
// largest connected component. Input must be raw HU on the processing grid.
ImageVolume build_foreground_mask(const ImageVolume& raw_hu, double threshold_hu);

// Strict key = value parser; unknown keys are errors.
PipelineConfig parse_pipeline_config_text(const std::string& text);
PipelineConfig parse_pipeline_config(const std::string& path);

// Stable fingerprint of every config field (plus the phase-direction flag).
std::string config_digest(const PipelineConfig& cfg, bool swap_phases);

struct PipelineOptions {
    std::string out_dir = ".";
    bool swap_phases = false;    // treat the first input as expiration instead
    bool deterministic = false;  // omit timestamps from the report
};

struct PipelineArtifacts {
    VolumeChangeReport report;
    std::string fixed_phase;
    std::string moving_phase;
    std::string report_path;
    std::string field_path;
    std::string jacobian_path;
    std::string cost_history_path;
    std::vector<std::string> overlay_paths;
};

// read -> window -> resample -> center_of_mass_init -> affine_register ->
// ffd_register -> compose_to_dense -> jacobian -> fov_valid_mask -> measure.
// Writes report.json, the deformation field and Jacobian NIfTIs, the cost
// history CSV and three orthogonal overlay PNGs into out_dir.
PipelineArtifacts run_pipeline(const std::string& fixed_path, const std::string& moving_path,
                               const std::string& mask_path, const PipelineConfig& cfg,
                               const PipelineOptions& opt);

}  // namespace repeat
