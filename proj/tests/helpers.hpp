// helpers.hpp - shared fixtures for the test suites.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>
#include <zlib.h>

#include <doctest.h>

#include "repeat/errors.hpp"
#include "repeat/volume.hpp"

namespace testutil {

using repeat::ErrorCode;
using repeat::Geometry;
using repeat::ImageVolume;
using repeat::Mat3;
using repeat::Vec3;
using repeat::VolumeKind;

// Small deterministic generator for test data.
struct Lcg {
    uint64_t state;
    explicit Lcg(uint64_t seed) : state(seed * 6364136223846793005ull + 1442695040888963407ull) {}
    uint64_t next() {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return state >> 16;
    }
    double uniform() { return static_cast<double>(next() % 1000000007ull) / 1000000007.0; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

inline ImageVolume make_volume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin,
                               const std::function<double(int, int, int)>& fn,
                               VolumeKind kind = VolumeKind::Intensity) {
    ImageVolume v;
    v.geom.dims = dims;
    v.geom.spacing = spacing;
    v.geom.origin = origin;
    v.kind = kind;
    v.data.resize(v.geom.voxel_count());
    size_t o = 0;
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i, ++o) v.data[o] = fn(i, j, k);
    return v;
}

inline ImageVolume constant_volume(std::array<int, 3> dims, Vec3 spacing, double value) {
    return make_volume(dims, spacing, {0, 0, 0}, [&](int, int, int) { return value; });
}

// Fresh per-test output directory under the system temp root.
inline std::string fresh_dir(const std::string& tag) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("repeat_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir.string();
}

// Returns the ErrorCode thrown by fn, or nullopt if it did not throw Error.
template <typename Fn>
inline std::optional<ErrorCode> thrown_code(Fn&& fn) {
    try {
        fn();
    } catch (const repeat::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

// Orthonormal direction built from a permutation with sign flips; exercises
// non-identity geometry in round-trip properties.
inline Mat3 permuted_direction() {
    Mat3 d;
    d.m = {0, -1, 0, 1, 0, 0, 0, 0, -1};
    return d;
}

// Minimal RGB decoder for the PNGs this project writes (filter 0 rows only).
struct DecodedPng {
    int width = 0, height = 0;
    std::vector<uint8_t> rgb;
    const uint8_t* at(int x, int y) const { return &rgb[3 * (static_cast<size_t>(y) * width + x)]; }
};

inline DecodedPng decode_png_rgb8(const std::string& path) {
    const std::vector<unsigned char> bytes = read_bytes(path);
    DecodedPng png;
    REQUIRE_MESSAGE(bytes.size() > 8, "png too small");
    size_t pos = 8;
    std::vector<unsigned char> idat;
    auto u32 = [&](size_t p) {
        return (uint32_t(bytes[p]) << 24) | (uint32_t(bytes[p + 1]) << 16) |
               (uint32_t(bytes[p + 2]) << 8) | uint32_t(bytes[p + 3]);
    };
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = u32(pos);
        const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
        if (type == "IHDR") {
            png.width = static_cast<int>(u32(pos + 8));
            png.height = static_cast<int>(u32(pos + 12));
            REQUIRE(bytes[pos + 16] == 8);  // bit depth
            REQUIRE(bytes[pos + 17] == 2);  // RGB
        } else if (type == "IDAT") {
            idat.insert(idat.end(), bytes.begin() + pos + 8, bytes.begin() + pos + 8 + len);
        }
        pos += 12 + len;
    }
    const size_t row = static_cast<size_t>(png.width) * 3 + 1;
    std::vector<unsigned char> raw(row * png.height);
    uLongf out_len = static_cast<uLongf>(raw.size());
    REQUIRE(uncompress(raw.data(), &out_len, idat.data(), static_cast<uLong>(idat.size())) == Z_OK);
    REQUIRE(out_len == raw.size());
    png.rgb.resize(static_cast<size_t>(png.width) * png.height * 3);
    for (int y = 0; y < png.height; ++y) {
        REQUIRE(raw[y * row] == 0);  // filter byte
        std::copy(raw.begin() + y * row + 1, raw.begin() + (y + 1) * row,
                  png.rgb.begin() + static_cast<size_t>(y) * png.width * 3);
    }
    return png;
}

}  // namespace testutil
