// nifti_io.cpp - NIfTI-1 single-file I/O with gzip support.

#include "repeat/nifti_io.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace repeat {

namespace {

struct Nifti1Header {
    int32_t sizeof_hdr;     // must be 348
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1;
    float intent_p2;
    float intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax;
    int32_t glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code;
    int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "nifti-1 header must be 348 bytes");

constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtFloat32 = 16;
constexpr int16_t kDtFloat64 = 64;
constexpr int16_t kIntentVector = 1007;

bool is_gzip(const std::vector<unsigned char>& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed on '" + path + "'");
    return bytes;
}

std::vector<unsigned char> gzip_decompress(const std::vector<unsigned char>& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK)  // auto-detect gzip/zlib wrapper
        throw Error(ErrorCode::IoFailure, "inflateInit failed");
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    std::vector<unsigned char> buf(1 << 16);
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int ret = Z_OK;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw Error(ErrorCode::IoFailure, "corrupt gzip stream");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (ret != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
    inflateEnd(&zs);
    if (ret != Z_STREAM_END) throw Error(ErrorCode::IoFailure, "truncated gzip stream");
    return out;
}

// Explicit zeroed gzip header so output bytes depend only on content.
std::vector<unsigned char> gzip_compress(const std::vector<unsigned char>& in) {
    z_stream zs{};
    if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error(ErrorCode::IoFailure, "deflateInit failed");
    gz_header gh{};
    gh.time = 0;
    gh.os = 3;
    deflateSetHeader(&zs, &gh);
    std::vector<unsigned char> out;
    out.reserve(in.size() / 2 + 64);
    std::vector<unsigned char> buf(1 << 16);
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int ret = Z_OK;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = deflate(&zs, Z_FINISH);
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (ret != Z_STREAM_END);
    deflateEnd(&zs);
    return out;
}

void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed on '" + path + "'");
}

bool ends_with_gz(const std::string& path) {
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

template <typename T>
void swap_bytes(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    for (size_t i = 0, j = sizeof(T) - 1; i < j; ++i, --j) std::swap(p[i], p[j]);
}

void swap_header(Nifti1Header& h) {
    swap_bytes(h.sizeof_hdr);
    swap_bytes(h.extents);
    swap_bytes(h.session_error);
    for (auto& d : h.dim) swap_bytes(d);
    swap_bytes(h.intent_p1);
    swap_bytes(h.intent_p2);
    swap_bytes(h.intent_p3);
    swap_bytes(h.intent_code);
    swap_bytes(h.datatype);
    swap_bytes(h.bitpix);
    swap_bytes(h.slice_start);
    for (auto& p : h.pixdim) swap_bytes(p);
    swap_bytes(h.vox_offset);
    swap_bytes(h.scl_slope);
    swap_bytes(h.scl_inter);
    swap_bytes(h.slice_end);
    swap_bytes(h.cal_max);
    swap_bytes(h.cal_min);
    swap_bytes(h.slice_duration);
    swap_bytes(h.toffset);
    swap_bytes(h.glmax);
    swap_bytes(h.glmin);
    swap_bytes(h.qform_code);
    swap_bytes(h.sform_code);
    swap_bytes(h.quatern_b);
    swap_bytes(h.quatern_c);
    swap_bytes(h.quatern_d);
    swap_bytes(h.qoffset_x);
    swap_bytes(h.qoffset_y);
    swap_bytes(h.qoffset_z);
    for (auto& v : h.srow_x) swap_bytes(v);
    for (auto& v : h.srow_y) swap_bytes(v);
    for (auto& v : h.srow_z) swap_bytes(v);
}

struct ParsedFile {
    Nifti1Header hdr;
    Geometry geom;
    std::vector<double> values;  // raw values with scl applied, component planes in file order
    size_t volume_components;    // dim[5] when dim[0] == 5, else 1
};

Geometry geometry_from_header(const Nifti1Header& h) {
    Geometry g;
    for (int a = 0; a < 3; ++a) g.dims[a] = h.dim[a + 1];

    if (h.sform_code > 0) {
        const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
        Mat3 rs;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rs.at(r, c) = rows[r][c];
        for (int c = 0; c < 3; ++c) {
            double n = std::sqrt(rs.at(0, c) * rs.at(0, c) + rs.at(1, c) * rs.at(1, c) +
                                 rs.at(2, c) * rs.at(2, c));
            if (!(n > 0)) throw Error(ErrorCode::MalformedHeader, "degenerate sform column");
            g.spacing[c] = n;
            for (int r = 0; r < 3; ++r) g.direction.at(r, c) = rs.at(r, c) / n;
        }
        g.origin = {rows[0][3], rows[1][3], rows[2][3]};
    } else if (h.qform_code > 0) {
        const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
        const double aa = std::max(0.0, 1.0 - b * b - c * c - d * d);
        const double a = std::sqrt(aa);
        Mat3 r;
        r.at(0, 0) = a * a + b * b - c * c - d * d;
        r.at(0, 1) = 2 * (b * c - a * d);
        r.at(0, 2) = 2 * (b * d + a * c);
        r.at(1, 0) = 2 * (b * c + a * d);
        r.at(1, 1) = a * a + c * c - b * b - d * d;
        r.at(1, 2) = 2 * (c * d - a * b);
        r.at(2, 0) = 2 * (b * d - a * c);
        r.at(2, 1) = 2 * (c * d + a * b);
        r.at(2, 2) = a * a + d * d - b * b - c * c;
        const double qfac = (h.pixdim[0] < 0.0f) ? -1.0 : 1.0;
        for (int row = 0; row < 3; ++row) r.at(row, 2) *= qfac;
        g.direction = r;
        g.spacing = {std::abs(h.pixdim[1]), std::abs(h.pixdim[2]), std::abs(h.pixdim[3])};
        g.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    } else {
        g.spacing = {std::abs(h.pixdim[1]), std::abs(h.pixdim[2]), std::abs(h.pixdim[3])};
        for (int a = 0; a < 3; ++a)
            if (!(g.spacing[a] > 0)) g.spacing[a] = 1.0;
        g.origin = {0, 0, 0};
        g.direction = Mat3::identity();
    }
    return g;
}

template <typename T>
void decode_values(const unsigned char* raw, size_t n, bool swapped, double slope, double inter,
                   std::vector<double>& out) {
    out.resize(n);
    for (size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, raw + i * sizeof(T), sizeof(T));
        if (swapped) swap_bytes(v);
        out[i] = static_cast<double>(v) * slope + inter;
    }
}

ParsedFile parse_nifti(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::IoFailure, "file does not exist: " + path);
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (is_gzip(bytes)) bytes = gzip_decompress(bytes);
    if (bytes.size() < sizeof(Nifti1Header))
        throw Error(ErrorCode::MalformedHeader, "file shorter than a nifti-1 header");

    ParsedFile f;
    std::memcpy(&f.hdr, bytes.data(), sizeof(Nifti1Header));
    Nifti1Header& h = f.hdr;

    bool swapped = false;
    if (h.dim[0] < 1 || h.dim[0] > 7) {
        swap_header(h);
        swapped = true;
    }
    if (h.sizeof_hdr != 348 || h.dim[0] < 1 || h.dim[0] > 7)
        throw Error(ErrorCode::MalformedHeader, "bad sizeof_hdr/dim[0]");
    if (!(std::strncmp(h.magic, "n+1", 4) == 0 || std::strncmp(h.magic, "ni1", 4) == 0))
        throw Error(ErrorCode::MalformedHeader, "bad magic (expected n+1 or ni1)");
    if (std::strncmp(h.magic, "ni1", 4) == 0)
        throw Error(ErrorCode::UnsupportedDatatype, "two-file (.hdr/.img) nifti is not supported");
    for (int a = 1; a <= 3; ++a)
        if (h.dim[a] < 1) throw Error(ErrorCode::MalformedHeader, "non-positive spatial dim");

    f.volume_components = 1;
    if (h.dim[0] == 5 && h.dim[5] > 1) {
        if (h.dim[4] != 1)
            throw Error(ErrorCode::UnsupportedDatatype, "time series volumes are not supported");
        f.volume_components = static_cast<size_t>(h.dim[5]);
    } else if (h.dim[0] > 3) {
        for (int a = 4; a <= h.dim[0]; ++a)
            if (h.dim[a] > 1)
                throw Error(ErrorCode::UnsupportedDatatype, "time series volumes are not supported");
    }

    f.geom = geometry_from_header(h);
    f.geom.validate();

    const size_t nvox = f.geom.voxel_count() * f.volume_components;
    size_t elem = 0;
    switch (h.datatype) {
        case kDtUint8: elem = 1; break;
        case kDtInt16: elem = 2; break;
        case kDtFloat32: elem = 4; break;
        case kDtFloat64: elem = 8; break;
        default:
            throw Error(ErrorCode::UnsupportedDatatype,
                        "datatype code " + std::to_string(h.datatype) + " not supported");
    }
    const size_t offset = static_cast<size_t>(h.vox_offset);
    if (offset < 348 || bytes.size() < offset + nvox * elem)
        throw Error(ErrorCode::MalformedHeader, "data section truncated");

    const double slope = (h.scl_slope != 0.0f) ? static_cast<double>(h.scl_slope) : 1.0;
    const double inter = (h.scl_slope != 0.0f) ? static_cast<double>(h.scl_inter) : 0.0;
    const unsigned char* raw = bytes.data() + offset;
    switch (h.datatype) {
        case kDtUint8: decode_values<uint8_t>(raw, nvox, false, slope, inter, f.values); break;
        case kDtInt16: decode_values<int16_t>(raw, nvox, swapped, slope, inter, f.values); break;
        case kDtFloat32: decode_values<float>(raw, nvox, swapped, slope, inter, f.values); break;
        case kDtFloat64: decode_values<double>(raw, nvox, swapped, slope, inter, f.values); break;
        default: break;
    }
    return f;
}

Nifti1Header make_header(const Geometry& g, int16_t datatype, int16_t bitpix, size_t components) {
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    if (components > 1) {
        h.dim[0] = 5;
        h.dim[4] = 1;
        h.dim[5] = static_cast<int16_t>(components);
        h.dim[6] = 1;
        h.dim[7] = 1;
        h.intent_code = kIntentVector;
    } else {
        h.dim[0] = 3;
        h.dim[4] = h.dim[5] = h.dim[6] = h.dim[7] = 1;
    }
    for (int a = 0; a < 3; ++a) h.dim[a + 1] = static_cast<int16_t>(g.dims[a]);
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.0f;
    for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // millimetres
    h.sform_code = 1;
    h.qform_code = 0;
    for (int c = 0; c < 3; ++c) {
        h.srow_x[c] = static_cast<float>(g.direction.at(0, c) * g.spacing[c]);
        h.srow_y[c] = static_cast<float>(g.direction.at(1, c) * g.spacing[c]);
        h.srow_z[c] = static_cast<float>(g.direction.at(2, c) * g.spacing[c]);
    }
    h.srow_x[3] = static_cast<float>(g.origin.x);
    h.srow_y[3] = static_cast<float>(g.origin.y);
    h.srow_z[3] = static_cast<float>(g.origin.z);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_nifti_bytes(const Nifti1Header& h, const std::vector<unsigned char>& payload,
                       const std::string& path) {
    std::vector<unsigned char> bytes(352, 0);  // header + 4-byte extension flag
    std::memcpy(bytes.data(), &h, sizeof(Nifti1Header));
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    if (ends_with_gz(path)) bytes = gzip_compress(bytes);
    write_file_bytes(path, bytes);
}

}  // namespace

ImageVolume read_nifti(const std::string& path, VolumeKind kind) {
    ParsedFile f = parse_nifti(path);
    if (f.volume_components != 1)
        throw Error(ErrorCode::UnsupportedDatatype,
                    "expected a scalar volume, got " + std::to_string(f.volume_components) +
                        " components");
    ImageVolume vol;
    vol.geom = f.geom;
    vol.kind = kind;
    vol.data = std::move(f.values);
    if (kind == VolumeKind::Mask) {
        bool nonbinary = false;
        for (double& v : vol.data) {
            if (v != 0.0 && v != 1.0) {
                nonbinary = true;
                v = (v > 0.5) ? 1.0 : 0.0;
            }
        }
        if (nonbinary)
            warn("mask '" + path + "' had values outside {0,1}; binarized by (value > 0.5)");
    }
    vol.validate();
    return vol;
}

void write_nifti(const ImageVolume& vol, const std::string& path) {
    vol.validate();
    const size_t n = vol.geom.voxel_count();
    if (vol.kind == VolumeKind::Mask) {
        Nifti1Header h = make_header(vol.geom, kDtUint8, 8, 1);
        std::vector<unsigned char> payload(n);
        for (size_t i = 0; i < n; ++i) payload[i] = vol.data[i] != 0.0 ? 1 : 0;
        write_nifti_bytes(h, payload, path);
    } else {
        Nifti1Header h = make_header(vol.geom, kDtFloat64, 64, 1);
        std::vector<unsigned char> payload(n * 8);
        std::memcpy(payload.data(), vol.data.data(), n * 8);
        write_nifti_bytes(h, payload, path);
    }
}

DeformationField read_deformation_field(const std::string& path) {
    ParsedFile f = parse_nifti(path);
    if (f.volume_components != 3)
        throw Error(ErrorCode::MalformedField,
                    "expected a 3-component vector volume (dim[5] = 3)");
    if (f.hdr.intent_code != kIntentVector)
        warn("field '" + path + "' lacks the vector intent code; reading anyway");
    DeformationField field;
    field.geom = f.geom;
    const size_t n = f.geom.voxel_count();
    field.u.resize(n);
    for (size_t i = 0; i < n; ++i)
        field.u[i] = {f.values[i], f.values[n + i], f.values[2 * n + i]};
    return field;
}

void write_deformation_field(const DeformationField& field, const std::string& path) {
    field.geom.validate();
    const size_t n = field.geom.voxel_count();
    if (field.u.size() != n)
        throw Error(ErrorCode::MalformedField, "field length does not match its geometry");
    Nifti1Header h = make_header(field.geom, kDtFloat64, 64, 3);
    std::vector<unsigned char> payload(n * 3 * 8);
    auto* out = reinterpret_cast<double*>(payload.data());
    for (size_t i = 0; i < n; ++i) {
        out[i] = field.u[i].x;
        out[n + i] = field.u[i].y;
        out[2 * n + i] = field.u[i].z;
    }
    write_nifti_bytes(h, payload, path);
}

}  // namespace repeat
