// overlay.cpp

#include "repeat/overlay.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace repeat {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32(out, crc);
}

}  // namespace

void write_png_rgb8(const RgbImage& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3)
        throw Error(ErrorCode::SpecInvalid, "inconsistent image buffer");

    // raw scanlines, filter byte 0 per row
    std::vector<uint8_t> raw;
    raw.reserve((static_cast<size_t>(img.width) * 3 + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.at(0, y), img.at(0, y) + static_cast<size_t>(img.width) * 3);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error(ErrorCode::IoFailure, "png deflate failed");
    compressed.resize(bound);

    std::vector<uint8_t> out;
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::IoFailure, "write failed on '" + path + "'");
}

RgbImage render_overlay(const ImageVolume& vol, const ImageVolume* mask, int axis, int slice,
                        double window_lo, double window_hi) {
    if (axis < 0 || axis > 2) throw Error(ErrorCode::IndexOutOfRange, "axis must be 0, 1 or 2");
    if (slice < 0 || slice >= vol.geom.dims[axis])
        throw Error(ErrorCode::IndexOutOfRange, "slice index outside the volume");
    if (mask && !mask->geom.same_grid(vol.geom))
        throw Error(ErrorCode::GeometryMismatch, "mask and volume grids differ");
    if (!(window_lo < window_hi)) throw Error(ErrorCode::InvalidWindow, "window requires lo < hi");

    // in-plane axes: rows advance along `row_axis`, columns along `col_axis`
    const int col_axis = (axis == 0) ? 1 : 0;
    const int row_axis = (axis == 2) ? 1 : 2;

    RgbImage img;
    img.width = vol.geom.dims[col_axis];
    img.height = vol.geom.dims[row_axis];
    img.pixels.assign(static_cast<size_t>(img.width) * img.height * 3, 0);

    auto voxel = [&](const ImageVolume& v, int col, int row) {
        int idx[3];
        idx[axis] = slice;
        idx[col_axis] = col;
        idx[row_axis] = row;
        return v.at(idx[0], idx[1], idx[2]);
    };

    for (int row = 0; row < img.height; ++row)
        for (int col = 0; col < img.width; ++col) {
            const double t =
                std::clamp((voxel(vol, col, row) - window_lo) / (window_hi - window_lo), 0.0, 1.0);
            const auto gray = static_cast<uint8_t>(std::lround(t * 255.0));
            uint8_t* px = img.at(col, row);
            px[0] = px[1] = px[2] = gray;
        }

    if (mask) {
        for (int row = 0; row < img.height; ++row)
            for (int col = 0; col < img.width; ++col) {
                if (voxel(*mask, col, row) == 0.0) continue;
                const bool boundary =
                    col == 0 || col == img.width - 1 || row == 0 || row == img.height - 1 ||
                    voxel(*mask, col - 1, row) == 0.0 || voxel(*mask, col + 1, row) == 0.0 ||
                    voxel(*mask, col, row - 1) == 0.0 || voxel(*mask, col, row + 1) == 0.0;
                if (!boundary) continue;
                uint8_t* px = img.at(col, row);
                px[0] = 255;
                px[1] = 48;
                px[2] = 48;
            }
    }
    return img;
}

}  // namespace repeat
