#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "slidefuse/curation.hpp"
#include "slidefuse/slide_io.hpp"

using namespace slidefuse;

namespace {

Raster filled_patch(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Raster p(256, 256, 3);
    for (std::size_t i = 0; i < p.data.size(); i += 3) {
        p.data[i] = r;
        p.data[i + 1] = g;
        p.data[i + 2] = b;
    }
    return p;
}

// overwrites the first n pixels (row-major) with the given color
void paint_first(Raster& p, long n, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (long i = 0; i < n; ++i) {
        p.data[i * 3] = r;
        p.data[i * 3 + 1] = g;
        p.data[i * 3 + 2] = b;
    }
}

}  // namespace

TEST_CASE("background filter thresholds are strict") {
    const long total = 256L * 256;
    const long at60 = total * 60 / 100;  // 39321.6 -> integer cut below the threshold

    auto white = filled_patch(255, 255, 255);
    auto [keep_white, frac_white] = filter_rgb_background(white);
    CHECK(!keep_white);
    CHECK(frac_white == 1.0);

    auto gray = filled_patch(128, 128, 128);
    auto [keep_gray, frac_gray] = filter_rgb_background(gray);
    CHECK(keep_gray);
    CHECK(frac_gray == 0.0);

    // 65536 * 0.6 is fractional, so the boundary pair is the largest count
    // at or below the threshold versus one pixel more
    auto boundary = filled_patch(128, 128, 128);
    paint_first(boundary, (total * 3) / 5, 255, 255, 255);
    auto [keep_at, frac_at] = filter_rgb_background(boundary);
    CHECK(frac_at <= 0.6);
    CHECK(keep_at);

    paint_first(boundary, (total * 3) / 5 + 1, 255, 255, 255);
    CHECK(double((total * 3) / 5 + 1) / double(total) > 0.6);
    auto [keep_over, frac_over] = filter_rgb_background(boundary);
    CHECK(!keep_over);

    // black counts too, and mixed white/black accumulate
    auto dark = filled_patch(10, 10, 10);
    auto [keep_dark, frac_dark] = filter_rgb_background(dark);
    CHECK(!keep_dark);
    CHECK(frac_dark == 1.0);

    // a saturated color with one bright channel is neither white nor black
    auto red = filled_patch(255, 0, 0);
    auto [keep_red, frac_red] = filter_rgb_background(red);
    CHECK(keep_red);
    CHECK(frac_red == 0.0);
}

TEST_CASE("hsv artifact filter thresholds are strict") {
    // bright desaturated pixel that is not all-channel white: s<=25, v>=230
    auto glass = filled_patch(229, 254, 229);
    auto [keep_glass, frac_glass] = filter_hsv_artifact(glass);
    CHECK(frac_glass == 1.0);
    CHECK(!keep_glass);

    auto red = filled_patch(255, 0, 0);
    auto [keep_red, frac_red] = filter_hsv_artifact(red);
    CHECK(keep_red);
    CHECK(frac_red == 0.0);

    const long total = 256L * 256;
    auto boundary = filled_patch(128, 30, 90);
    paint_first(boundary, (total * 19) / 20, 229, 254, 229);
    auto [keep_at, frac_at] = filter_hsv_artifact(boundary);
    CHECK(frac_at <= 0.95);
    CHECK(keep_at);
    paint_first(boundary, (total * 19) / 20 + 1, 229, 254, 229);
    CHECK(double((total * 19) / 20 + 1) / double(total) > 0.95);
    auto [keep_over, frac_over] = filter_hsv_artifact(boundary);
    CHECK(!keep_over);
}

TEST_CASE("pen filter thresholds are strict") {
    const auto stains = StainMatrix::hed_default();

    auto white = filled_patch(255, 255, 255);
    auto [keep_white, frac_white] = filter_pen_marking(white, stains);
    CHECK(keep_white);
    CHECK(frac_white == 0.0);

    // a pure-eosin pixel at unit concentration maps to intensity ~26
    auto eosin = filled_patch(217, 26, 198);
    auto [keep_eosin, frac_eosin] = filter_pen_marking(eosin, stains);
    CHECK(!keep_eosin);
    CHECK(frac_eosin == 1.0);

    const long total = 256L * 256;
    auto boundary = filled_patch(255, 255, 255);
    paint_first(boundary, (total * 4) / 5, 217, 26, 198);
    auto [keep_at, frac_at] = filter_pen_marking(boundary, stains);
    CHECK(frac_at <= 0.8);
    CHECK(keep_at);
    paint_first(boundary, (total * 4) / 5 + 1, 217, 26, 198);
    CHECK(double((total * 4) / 5 + 1) / double(total) > 0.8);
    auto [keep_over, frac_over] = filter_pen_marking(boundary, stains);
    CHECK(!keep_over);
}

TEST_CASE("curation applies filters in order with short-circuiting") {
    // slide with three patch columns: pink tissue, white, black
    const auto dir = std::filesystem::temp_directory_path() / "sf_cur_slide";
    std::filesystem::remove_all(dir);
    Raster img(768, 256, 3);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 768; ++x) {
            std::uint8_t r = 200, g = 120, b = 140;
            if (x >= 256 && x < 512) r = g = b = 255;
            if (x >= 512) r = g = b = 0;
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    BundleMetadata meta;
    meta.objective_power = 20.0;
    build_pyramid(img, {1}, "tri", meta, dir);
    const auto slide = open_bundle(dir);

    const std::vector<PatchCoord> coords = {{0, 0, 256, 1}, {256, 0, 256, 1}, {512, 0, 256, 1}};
    const auto report = curate(slide, coords, StainMatrix::hed_default());
    REQUIRE(report.patches.size() == 3);
    CHECK(report.patches[0].kept);
    CHECK(report.patches[0].reject_reason == RejectReason::none);
    CHECK(!report.patches[1].kept);
    CHECK(report.patches[1].reject_reason == RejectReason::rgb_background);
    CHECK(!report.patches[2].kept);
    // black fails the rgb filter before the pen filter can run
    CHECK(report.patches[2].reject_reason == RejectReason::rgb_background);
    CHECK(report.patches[2].eosin_low_frac == 0.0);

    // determinism and thread independence
    for (int threads : {1, 2, 7}) {
        CurationParams p;
        p.threads = threads;
        const auto again = curate(slide, coords, StainMatrix::hed_default(), p);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(again.patches[i].kept == report.patches[i].kept);
            CHECK(again.patches[i].reject_reason == report.patches[i].reject_reason);
            CHECK(again.patches[i].white_black_frac == report.patches[i].white_black_frac);
        }
    }

    // empty coordinate list
    CHECK(curate(slide, {}, StainMatrix::hed_default()).patches.empty());

    // jsonl report round trip is byte-stable
    const auto p1 = dir / "report1.jsonl";
    const auto p2 = dir / "report2.jsonl";
    write_report_jsonl(report, p1);
    write_report_jsonl(report, p2);
    std::ifstream a(p1), b(p2);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
}

TEST_CASE("out-of-bounds patches are reported, not fatal") {
    const auto dir = std::filesystem::temp_directory_path() / "sf_cur_oob";
    std::filesystem::remove_all(dir);
    Raster img(256, 256, 3, 128);
    build_pyramid(img, {1}, "oob", {}, dir);
    const auto slide = open_bundle(dir);
    const auto report =
        curate(slide, {{0, 0, 256, 1}, {999, 0, 256, 1}}, StainMatrix::hed_default());
    REQUIRE(report.patches.size() == 2);
    CHECK(report.patches[0].kept);
    CHECK(!report.patches[1].kept);
    CHECK(report.patches[1].reject_reason == RejectReason::read_error);
    CHECK(!report.patches[1].error.empty());
}
