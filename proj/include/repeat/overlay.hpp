// overlay.hpp - grayscale slice rendering with mask contours, written as
// 8-bit RGB PNG for visual QC.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repeat/volume.hpp"

namespace repeat {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // RGB, row-major, no alpha

    uint8_t* at(int x, int y) { return &pixels[3 * (static_cast<size_t>(y) * width + x)]; }
    const uint8_t* at(int x, int y) const {
        return &pixels[3 * (static_cast<size_t>(y) * width + x)];
    }
};

void write_png_rgb8(const RgbImage& img, const std::string& path);

// Windowed grayscale slice of `vol` along `axis` (0,1,2) with the in-slice
// boundary of `mask` drawn in red. The mask may be null.
RgbImage render_overlay(const ImageVolume& vol, const ImageVolume* mask, int axis, int slice,
                        double window_lo, double window_hi);

}  // namespace repeat
