#include <doctest.h>

#include <cstring>

#include "helpers.hpp"
#include "repeat/nifti_io.hpp"

using namespace repeat;
using namespace testutil;

namespace {

// Hand-crafted raw NIfTI-1 writer, independent of the library's writer; the
// oracle for the reader tests.
struct RawNifti {
    std::vector<unsigned char> header = std::vector<unsigned char>(352, 0);
    std::vector<unsigned char> payload;

    template <typename T>
    void set(size_t offset, T value) {
        std::memcpy(header.data() + offset, &value, sizeof(T));
    }

    void set_defaults(int16_t nx, int16_t ny, int16_t nz, int16_t datatype, int16_t bitpix) {
        set<int32_t>(0, 348);
        set<int16_t>(40, 3);       // dim[0]
        set<int16_t>(42, nx);
        set<int16_t>(44, ny);
        set<int16_t>(46, nz);
        set<int16_t>(48, 1);
        set<int16_t>(50, 1);
        set<int16_t>(52, 1);
        set<int16_t>(54, 1);
        set<int16_t>(70, datatype);
        set<int16_t>(72, bitpix);
        set<float>(76, 1.0f);      // pixdim[0]
        set<float>(80, 1.0f);
        set<float>(84, 1.0f);
        set<float>(88, 1.0f);
        set<float>(108, 352.0f);   // vox_offset
        header[344] = 'n';
        header[345] = '+';
        header[346] = '1';
        header[347] = 0;
    }

    void set_identity_sform(float sx, float sy, float sz, float ox, float oy, float oz) {
        set<int16_t>(254, 1);  // sform_code
        set<float>(280, sx);
        set<float>(296 + 4, sy);
        set<float>(312 + 8, sz);
        set<float>(280 + 12, ox);
        set<float>(296 + 12, oy);
        set<float>(312 + 12, oz);
    }

    void write(const std::string& path) const {
        std::vector<unsigned char> all = header;
        all.insert(all.end(), payload.begin(), payload.end());
        write_bytes(path, all);
    }
};

ImageVolume sample_volume(uint64_t seed = 7) {
    Lcg rng(seed);
    ImageVolume v = make_volume({12, 10, 8}, {1.5, 2.0, 2.5}, {-10.25, 4.5, 7.75},
                                [&](int, int, int) { return 0.0; });
    for (double& d : v.data) d = rng.uniform(-1000, 1000);
    return v;
}

}  // namespace

TEST_CASE("read_nifti parses a plain float32 file with identity sform") {
    const std::string dir = fresh_dir("io");
    RawNifti raw;
    raw.set_defaults(64, 64, 64, 16, 32);
    raw.set_identity_sform(1, 1, 1, 0, 0, 0);
    raw.payload.resize(64 * 64 * 64 * 4);
    std::vector<float> values(64 * 64 * 64);
    for (size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(i % 311);
    std::memcpy(raw.payload.data(), values.data(), raw.payload.size());
    raw.write(dir + "/a.nii");

    const ImageVolume vol = read_nifti(dir + "/a.nii");
    CHECK(vol.geom.dims == std::array<int, 3>{64, 64, 64});
    CHECK(vol.geom.spacing.x == doctest::Approx(1.0));
    CHECK(vol.geom.direction.max_abs_diff(Mat3::identity()) < 1e-12);
    CHECK(vol.at(5, 0, 0) == doctest::Approx(5.0));
    CHECK(vol.at(0, 1, 0) == doctest::Approx(64.0));
}

TEST_CASE("read_nifti applies scl_slope and scl_inter") {
    const std::string dir = fresh_dir("io");
    RawNifti raw;
    raw.set_defaults(4, 4, 4, 4, 16);  // int16
    raw.set_identity_sform(1, 1, 1, 0, 0, 0);
    raw.set<float>(112, 2.0f);   // scl_slope
    raw.set<float>(116, 10.0f);  // scl_inter
    std::vector<int16_t> values(64, 5);
    raw.payload.resize(values.size() * 2);
    std::memcpy(raw.payload.data(), values.data(), raw.payload.size());
    raw.write(dir + "/scaled.nii");

    const ImageVolume vol = read_nifti(dir + "/scaled.nii");
    CHECK(vol.at(0, 0, 0) == doctest::Approx(20.0));
    CHECK(vol.at(3, 3, 3) == doctest::Approx(20.0));
}

TEST_CASE("write then read round-trips geometry and float64 data bit-exactly") {
    const std::string dir = fresh_dir("io");
    ImageVolume v = sample_volume();
    v.geom.direction = permuted_direction();

    for (const char* name : {"roundtrip.nii", "roundtrip.nii.gz"}) {
        const std::string path = dir + "/" + name;
        write_nifti(v, path);
        const ImageVolume r = read_nifti(path);
        CHECK(r.geom.dims == v.geom.dims);
        CHECK((r.geom.spacing - v.geom.spacing).max_abs() < 1e-6);
        CHECK((r.geom.origin - v.geom.origin).max_abs() < 1e-6);
        CHECK(r.geom.direction.max_abs_diff(v.geom.direction) < 1e-6);
        REQUIRE(r.data.size() == v.data.size());
        size_t mismatches = 0;
        for (size_t i = 0; i < v.data.size(); ++i)
            if (std::memcmp(&r.data[i], &v.data[i], 8) != 0) ++mismatches;
        CHECK(mismatches == 0);
    }
}

TEST_CASE("mask volumes are written as uint8 (datatype code 2)") {
    const std::string dir = fresh_dir("io");
    ImageVolume m = make_volume({6, 6, 6}, {1, 1, 1}, {0, 0, 0},
                                [](int i, int, int) { return i < 3 ? 1.0 : 0.0; },
                                VolumeKind::Mask);
    write_nifti(m, dir + "/mask.nii");
    const auto bytes = read_bytes(dir + "/mask.nii");
    int16_t datatype;
    std::memcpy(&datatype, bytes.data() + 70, 2);
    CHECK(datatype == 2);

    const ImageVolume r = read_nifti(dir + "/mask.nii", VolumeKind::Mask);
    CHECK(r.at(0, 0, 0) == 1.0);
    CHECK(r.at(5, 0, 0) == 0.0);
}

TEST_CASE("gz output begins with the gzip magic bytes") {
    const std::string dir = fresh_dir("io");
    write_nifti(sample_volume(), dir + "/z.nii.gz");
    const auto bytes = read_bytes(dir + "/z.nii.gz");
    REQUIRE(bytes.size() > 2);
    CHECK(bytes[0] == 0x1f);
    CHECK(bytes[1] == 0x8b);
}

TEST_CASE("gz output is byte-identical across writes") {
    const std::string dir = fresh_dir("io");
    const ImageVolume v = sample_volume();
    write_nifti(v, dir + "/a.nii.gz");
    write_nifti(v, dir + "/b.nii.gz");
    CHECK(read_bytes(dir + "/a.nii.gz") == read_bytes(dir + "/b.nii.gz"));
}

TEST_CASE("voxel_to_world evaluates the affine directly") {
    ImageVolume v = constant_volume({4, 4, 4}, {2, 2, 2}, 0.0);
    v.geom.origin = {10, 0, 0};
    const WorldPoint p = voxel_to_world(v, {1, 0, 0});
    CHECK(p.x == doctest::Approx(12.0));
    CHECK(p.y == doctest::Approx(0.0));
    const WorldPoint o = voxel_to_world(v, {0, 0, 0});
    CHECK((o - v.geom.origin).max_abs() < 1e-15);
}

TEST_CASE("world/voxel mappings invert each other over random points") {
    ImageVolume v = constant_volume({16, 16, 16}, {1.25, 2.0, 0.75}, 0.0);
    v.geom.origin = {-31.5, 12.25, 4.0};
    v.geom.direction = permuted_direction();
    Lcg rng(3);
    for (int n = 0; n < 1000; ++n) {
        const Vec3 idx{rng.uniform(-5, 20), rng.uniform(-5, 20), rng.uniform(-5, 20)};
        const Vec3 back = world_to_voxel(v, voxel_to_world(v, idx));
        CHECK((back - idx).max_abs() < 1e-9);
        const Vec3 p{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const Vec3 fwd = voxel_to_world(v, world_to_voxel(v, p));
        CHECK((fwd - p).max_abs() < 1e-9);
    }
}

TEST_CASE("sform wins over a conflicting qform") {
    const std::string dir = fresh_dir("io");
    RawNifti raw;
    raw.set_defaults(4, 4, 4, 2, 8);
    raw.set_identity_sform(2, 2, 2, 5, 5, 5);
    // conflicting qform: identity quaternion, different offsets
    raw.set<int16_t>(252, 1);      // qform_code
    raw.set<float>(268, -99.0f);   // qoffset_x
    raw.payload.assign(64, 1);
    raw.write(dir + "/conflict.nii");

    const ImageVolume vol = read_nifti(dir + "/conflict.nii");
    CHECK(vol.geom.origin.x == doctest::Approx(5.0));
    CHECK(vol.geom.spacing.x == doctest::Approx(2.0));

    // qform used when sform_code == 0
    RawNifti qonly;
    qonly.set_defaults(4, 4, 4, 2, 8);
    qonly.set<int16_t>(252, 1);
    qonly.set<float>(256, 0.0f);  // quatern_b
    qonly.set<float>(260, 0.0f);
    qonly.set<float>(264, 0.0f);
    qonly.set<float>(268, -99.0f);
    qonly.set<float>(80, 3.0f);  // pixdim[1]
    qonly.payload.assign(64, 1);
    qonly.write(dir + "/qonly.nii");
    const ImageVolume vq = read_nifti(dir + "/qonly.nii");
    CHECK(vq.geom.origin.x == doctest::Approx(-99.0));
    CHECK(vq.geom.spacing.x == doctest::Approx(3.0));
}

TEST_CASE("byte-swapped files are detected and read") {
    const std::string dir = fresh_dir("io");
    RawNifti raw;
    raw.set_defaults(3, 3, 3, 4, 16);
    raw.set_identity_sform(1, 1, 1, 0, 0, 0);
    std::vector<int16_t> values(27);
    for (size_t i = 0; i < values.size(); ++i) values[i] = static_cast<int16_t>(i * 3);
    raw.payload.resize(values.size() * 2);
    std::memcpy(raw.payload.data(), values.data(), raw.payload.size());

    // swap every multi-byte header field and the payload
    std::vector<unsigned char> swapped = raw.header;
    auto swap_at = [&](size_t off, size_t size, size_t count) {
        for (size_t c = 0; c < count; ++c)
            for (size_t a = 0, b = size - 1; a < b; ++a, --b)
                std::swap(swapped[off + c * size + a], swapped[off + c * size + b]);
    };
    swap_at(0, 4, 1);     // sizeof_hdr
    swap_at(40, 2, 8);    // dim
    swap_at(68, 2, 3);    // intent_code, datatype, bitpix
    swap_at(76, 4, 8);    // pixdim
    swap_at(108, 4, 3);   // vox_offset, scl_slope, scl_inter
    swap_at(252, 2, 2);   // qform, sform
    swap_at(256, 4, 6);   // quaternion block
    swap_at(280, 4, 12);  // srows
    std::vector<unsigned char> payload = raw.payload;
    for (size_t i = 0; i < payload.size(); i += 2) std::swap(payload[i], payload[i + 1]);
    std::vector<unsigned char> all = swapped;
    all.insert(all.end(), payload.begin(), payload.end());
    write_bytes(dir + "/swapped.nii", all);

    const ImageVolume vol = read_nifti(dir + "/swapped.nii");
    CHECK(vol.at(2, 0, 0) == doctest::Approx(6.0));
    CHECK(vol.at(0, 1, 0) == doctest::Approx(9.0));
}

TEST_CASE("mask reads binarize non-binary labels") {
    const std::string dir = fresh_dir("io");
    RawNifti raw;
    raw.set_defaults(4, 4, 4, 2, 8);
    raw.set_identity_sform(1, 1, 1, 0, 0, 0);
    raw.payload.assign(64, 0);
    for (size_t i = 0; i < 10; ++i) raw.payload[i] = 255;
    raw.write(dir + "/labels.nii");

    const ImageVolume m = read_nifti(dir + "/labels.nii", VolumeKind::Mask);
    CHECK(m.data[0] == 1.0);
    CHECK(m.data[20] == 0.0);
    m.validate();
}

TEST_CASE("reader error paths") {
    const std::string dir = fresh_dir("io");

    CHECK(thrown_code([&] { read_nifti(dir + "/missing.nii"); }) == ErrorCode::IoFailure);

    RawNifti bad_magic;
    bad_magic.set_defaults(4, 4, 4, 2, 8);
    bad_magic.header[344] = 'x';
    bad_magic.payload.assign(64, 0);
    bad_magic.write(dir + "/badmagic.nii");
    CHECK(thrown_code([&] { read_nifti(dir + "/badmagic.nii"); }) == ErrorCode::MalformedHeader);

    RawNifti bad_type;
    bad_type.set_defaults(4, 4, 4, 8, 32);  // int32: unsupported
    bad_type.set_identity_sform(1, 1, 1, 0, 0, 0);
    bad_type.payload.assign(64 * 4, 0);
    bad_type.write(dir + "/badtype.nii");
    CHECK(thrown_code([&] { read_nifti(dir + "/badtype.nii"); }) == ErrorCode::UnsupportedDatatype);

    RawNifti truncated;
    truncated.set_defaults(8, 8, 8, 16, 32);
    truncated.set_identity_sform(1, 1, 1, 0, 0, 0);
    truncated.payload.assign(16, 0);  // far too short
    truncated.write(dir + "/short.nii");
    CHECK(thrown_code([&] { read_nifti(dir + "/short.nii"); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("deformation fields round-trip as 3-component vector volumes") {
    const std::string dir = fresh_dir("io");
    DeformationField f;
    f.geom.dims = {6, 5, 4};
    f.geom.spacing = {2, 2, 2};
    f.geom.origin = {-5, -4, -3};
    f.u.resize(f.geom.voxel_count());
    Lcg rng(11);
    for (Vec3& u : f.u) u = {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)};

    write_deformation_field(f, dir + "/field.nii.gz");
    const DeformationField r = read_deformation_field(dir + "/field.nii.gz");
    REQUIRE(r.geom.dims == f.geom.dims);
    for (size_t i = 0; i < f.u.size(); ++i) CHECK((r.u[i] - f.u[i]).max_abs() == 0.0);

    // a scalar volume is not a field
    write_nifti(sample_volume(), dir + "/scalar.nii");
    CHECK(thrown_code([&] { read_deformation_field(dir + "/scalar.nii"); }) ==
          ErrorCode::MalformedField);
}
