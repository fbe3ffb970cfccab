// Integration coverage for the command line binary; the path comes in via
// REPEAT_BIN_PATH at compile time.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "repeat/deformation_analysis.hpp"
#include "repeat/nifti_io.hpp"
#include "repeat/phantom.hpp"

using namespace repeat;
using namespace testutil;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(REPEAT_BIN_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("phantom subcommand writes the pair, mask and truth file") {
    const std::string dir = fresh_dir("cli_phantom");
    const int rc = run_cli("phantom --kind scale --scale-factor 1.05 --dim 24 --spacing 4 "
                           "--noise-sigma 0 --out-dir " + dir);
    CHECK(rc == 0);
    for (const char* name : {"fixed.nii.gz", "moving.nii.gz", "liver_mask.nii.gz", "truth.json"})
        CHECK(std::filesystem::exists(dir + "/" + name));

    const nlohmann::json truth = nlohmann::json::parse(slurp(dir + "/truth.json"));
    CHECK(truth["kind"] == "scale");
    CHECK(std::abs(truth["delta_percent_true"].get<double>() - 15.7625) < 1e-6);

    const ImageVolume mask = read_nifti(dir + "/liver_mask.nii.gz", VolumeKind::Mask);
    size_t n = 0;
    for (double v : mask.data) n += (v == 1.0);
    CHECK(n > 100);
}

TEST_CASE("run subcommand completes on a small pair and honors the config file") {
    const std::string dir = fresh_dir("cli_run");
    REQUIRE(run_cli("phantom --kind identity --dim 24 --spacing 4 --out-dir " + dir) == 0);

    std::ofstream cfg(dir + "/pipeline.cfg");
    cfg << "levels = 2\n"
           "cp_spacing_coarsest = 32\n"
           "max_iters_per_level = 25\n"
           "resample_spacing = 4\n";
    cfg.close();

    const int rc = run_cli("run --fixed " + dir + "/fixed.nii.gz --moving " + dir +
                           "/moving.nii.gz --mask " + dir + "/liver_mask.nii.gz --config " + dir +
                           "/pipeline.cfg --out-dir " + dir + "/out --deterministic");
    CHECK(rc == 0);
    const nlohmann::json report = nlohmann::json::parse(slurp(dir + "/out/report.json"));
    CHECK(std::abs(report["delta_percent"].get<double>()) < 1.0);
    CHECK(std::filesystem::exists(dir + "/out/deformation_field.nii.gz"));
    CHECK(std::filesystem::exists(dir + "/out/jacobian.nii.gz"));
    CHECK(std::filesystem::exists(dir + "/out/overlay_axial.png"));
}

TEST_CASE("bad inputs exit with code 2 and machine-readable stderr") {
    const std::string dir = fresh_dir("cli_err");
    const std::string err_file = dir + "/err.json";
    const std::string cmd = std::string(REPEAT_BIN_PATH) + " run --fixed " + dir +
                            "/absent.nii --moving " + dir + "/absent.nii --mask " + dir +
                            "/absent.nii --out-dir " + dir + " 2> " + err_file + " > /dev/null";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 2);
    const nlohmann::json err = nlohmann::json::parse(slurp(err_file));
    CHECK(err["error"] == "IoFailure");
    CHECK(err.contains("message"));

    // config typo also exits 2
    std::ofstream cfg(dir + "/bad.cfg");
    cfg << "levles = 3\n";
    cfg.close();
    CHECK(run_cli("run --fixed x --moving y --mask z --config " + dir + "/bad.cfg") == 2);
}

TEST_CASE("jacobian subcommand reproduces the in-process computation bit-exactly") {
    const std::string dir = fresh_dir("cli_jac");

    // an affine displacement field: u = (A - I) x
    Mat3 A;
    A.m = {1.03, 0.01, 0.0, -0.02, 0.98, 0.01, 0.0, 0.02, 1.05};
    DeformationField field;
    field.geom.dims = {12, 12, 12};
    field.geom.spacing = {2, 2, 2};
    field.geom.origin = {-11, -11, -11};
    field.u.resize(field.geom.voxel_count());
    size_t v = 0;
    for (int k = 0; k < 12; ++k)
        for (int j = 0; j < 12; ++j)
            for (int i = 0; i < 12; ++i, ++v) {
                const WorldPoint x = field.geom.voxel_to_world({double(i), double(j), double(k)});
                field.u[v] = A * x - x;
            }
    write_deformation_field(field, dir + "/field.nii.gz");

    REQUIRE(run_cli("jacobian --field " + dir + "/field.nii.gz --out " + dir + "/jac.nii.gz") == 0);

    const ImageVolume from_cli = read_nifti(dir + "/jac.nii.gz");
    const JacobianField in_process = jacobian_determinant_field(field);
    REQUIRE(from_cli.data.size() == in_process.det.size());
    size_t diff = 0;
    for (size_t i = 0; i < from_cli.data.size(); ++i)
        if (std::memcmp(&from_cli.data[i], &in_process.det[i], sizeof(double)) != 0) ++diff;
    CHECK(diff == 0);
    for (double d : from_cli.data) CHECK(d == doctest::Approx(A.det()).epsilon(1e-9));

    // zero field -> all ones
    for (Vec3& u : field.u) u = {0, 0, 0};
    write_deformation_field(field, dir + "/zero.nii.gz");
    REQUIRE(run_cli("jacobian --field " + dir + "/zero.nii.gz --out " + dir + "/ones.nii.gz") == 0);
    const ImageVolume ones = read_nifti(dir + "/ones.nii.gz");
    for (double d : ones.data) CHECK(d == 1.0);

    // a scalar volume is rejected
    CHECK(run_cli("jacobian --field " + dir + "/jac.nii.gz --out " + dir + "/x.nii.gz") == 2);
}

TEST_CASE("overlay subcommand renders the mask contour around the bright ellipsoid") {
    const std::string dir = fresh_dir("cli_overlay");
    REQUIRE(run_cli("phantom --kind identity --dim 32 --spacing 4 --noise-sigma 0 --out-dir " +
                    dir) == 0);

    REQUIRE(run_cli("overlay --volume " + dir + "/fixed.nii.gz --mask " + dir +
                    "/liver_mask.nii.gz --axis z --slice 13 --out " + dir + "/ov.png") == 0);
    const DecodedPng png = decode_png_rgb8(dir + "/ov.png");
    CHECK(png.width == 32);
    CHECK(png.height == 32);

    size_t red = 0;
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x) {
            const uint8_t* px = png.at(x, y);
            red += (px[0] == 255 && px[1] == 48);
        }
    CHECK(red > 10);  // a visible contour ring

    // the contour encloses the bright liver: walking from the image center
    // outward along +x must cross a red pixel
    bool crossed = false;
    for (int x = png.width / 2; x < png.width; ++x) {
        const uint8_t* px = png.at(x, png.height / 2);
        if (px[0] == 255 && px[1] == 48) crossed = true;
    }
    CHECK(crossed);

    // no mask: pure grayscale
    REQUIRE(run_cli("overlay --volume " + dir + "/fixed.nii.gz --axis z --slice 13 --out " + dir +
                    "/gray.png") == 0);
    const DecodedPng gray = decode_png_rgb8(dir + "/gray.png");
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) {
            const uint8_t* px = gray.at(x, y);
            CHECK(px[0] == px[1]);
            CHECK(px[1] == px[2]);
        }

    // out-of-range slice exits 2
    CHECK(run_cli("overlay --volume " + dir + "/fixed.nii.gz --axis z --slice 99 --out " + dir +
                  "/bad.png") == 2);
}
