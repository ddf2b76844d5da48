#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "slidefuse/slide_io.hpp"
#include "slidefuse/tissue_seg.hpp"

using namespace slidefuse;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Raster disc_image(int side, double radius, bool with_hole = false) {
    Raster img(side, side, 3);
    const double c = side / 2.0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double d2 = (x - c) * (x - c) + (y - c) * (y - c);
            const bool tissue = d2 <= radius * radius && !(with_hole && d2 <= 24.0 * 24.0);
            img.at(x, y, 0) = tissue ? 200 : 250;
            img.at(x, y, 1) = tissue ? 120 : 250;
            img.at(x, y, 2) = tissue ? 140 : 250;
        }
    return img;
}

PyramidSlide disc_slide(const std::string& name, int side, double radius,
                        double objective = 20.0, bool with_hole = false) {
    const auto dir = fresh_dir(name);
    BundleMetadata meta;
    meta.objective_power = objective;
    build_pyramid(disc_image(side, radius, with_hole), {1, 4, 16}, name, meta, dir);
    return open_bundle(dir);
}

}  // namespace

TEST_CASE("median filter against a brute-force oracle") {
    Raster img(5, 5, 1);
    const std::uint8_t vals[25] = {9, 2, 7, 4, 1,  3, 8, 5, 6, 0, 2, 9, 1,
                                   7, 4, 8, 0, 6,  3, 5, 1, 4, 9, 2, 7};
    std::copy(vals, vals + 25, img.data.begin());
    const auto filtered = median_filter(img, 3);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            std::vector<std::uint8_t> window;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    window.push_back(img.at(std::clamp(x + dx, 0, 4), std::clamp(y + dy, 0, 4)));
            std::sort(window.begin(), window.end());
            CHECK(filtered.at(x, y) == window[4]);
        }
}

TEST_CASE("median filter basics") {
    Raster flat(7, 7, 1, 42);
    CHECK(median_filter(flat, 3) == flat);
    CHECK(median_filter(flat, 1) == flat);

    Raster salt(9, 9, 1, 0);
    salt.at(4, 4, 0) = 255;
    const auto cleaned = median_filter(salt, 3);
    for (auto v : cleaned.data) CHECK(v == 0);

    CHECK_THROWS_AS(median_filter(flat, 4), ArgumentError);
    CHECK_THROWS_AS(median_filter(flat, 0), ArgumentError);
}

TEST_CASE("morphological closing fills small gaps") {
    Raster ones(8, 8, 1, 1);
    CHECK(morph_close(ones, 4, 4) == ones);
    Raster zeros(8, 8, 1, 0);
    CHECK(morph_close(zeros, 4, 4) == zeros);

    // two 3-wide blobs separated by a single-pixel column
    Raster gap(8, 8, 1, 0);
    for (int y = 2; y < 6; ++y) {
        for (int x = 0; x < 3; ++x) gap.at(x, y, 0) = 1;
        for (int x = 4; x < 7; ++x) gap.at(x, y, 0) = 1;
    }
    const auto closed = morph_close(gap, 4, 4);
    for (int y = 3; y < 5; ++y) CHECK(closed.at(3, y) == 1);
}

TEST_CASE("closing is extensive") {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 20; ++trial) {
        Raster m(12, 12, 1, 0);
        for (auto& v : m.data) v = coin(rng);
        const auto closed = morph_close(m, 3, 3);
        for (std::size_t i = 0; i < m.data.size(); ++i)
            if (m.data[i]) CHECK(closed.data[i] == 1);
    }
}

TEST_CASE("disc slide segments to a single contour") {
    const auto slide = disc_slide("sf_seg_disc", 2048, 900.0);
    SegmentationParams params;
    const auto mask = segment_tissue(slide, params);
    CHECK(mask.level_factor == 16);
    CHECK(mask.mask.width == 128);
    REQUIRE(mask.contours.size() == 1);
    CHECK(mask.contours[0].holes.empty());

    // interior and exterior probes well away from the boundary
    CHECK(mask.mask.at(64, 64) == 1);
    CHECK(mask.mask.at(2, 2) == 0);

    // determinism across thread counts
    for (int threads : {1, 2, 3, 8}) {
        SegmentationParams p = params;
        p.threads = threads;
        const auto again = segment_tissue(slide, p);
        CHECK(again.mask == mask.mask);
        CHECK(again.contours.size() == mask.contours.size());
    }
}

TEST_CASE("all-white slide yields an empty mask") {
    const auto dir = fresh_dir("sf_seg_white");
    Raster white(1024, 1024, 3, 250);
    build_pyramid(white, {1, 4, 16}, "white", {}, dir);
    const auto slide = open_bundle(dir);
    const auto mask = segment_tissue(slide, {});
    CHECK(mask.contours.empty());
    for (auto v : mask.mask.data) CHECK(v == 0);
    CHECK(enumerate_patches(mask, slide).empty());
}

TEST_CASE("small interior holes are filled") {
    const auto slide = disc_slide("sf_seg_hole", 2048, 900.0, 20.0, true);
    // hole radius 24 px at level 0 is ~7 mask pixels, far below 4 patch-areas
    const auto mask = segment_tissue(slide, {});
    REQUIRE(mask.contours.size() == 1);
    CHECK(mask.contours[0].holes.empty());
    CHECK(mask.mask.at(64, 64) == 1);  // hole center filled
}

TEST_CASE("full-tissue slide enumerates the complete grid") {
    const auto dir = fresh_dir("sf_seg_full");
    Raster pink(1024, 1024, 3);
    for (std::size_t i = 0; i < pink.data.size(); i += 3) {
        pink.data[i] = 200;
        pink.data[i + 1] = 120;
        pink.data[i + 2] = 140;
    }
    BundleMetadata meta;
    meta.objective_power = 20.0;
    build_pyramid(pink, {1, 4, 16}, "full", meta, dir);
    const auto slide = open_bundle(dir);
    const auto mask = segment_tissue(slide, {});
    const auto coords = enumerate_patches(mask, slide);
    REQUIRE(coords.size() == 16);
    std::size_t k = 0;
    for (long y = 0; y < 1024; y += 256)
        for (long x = 0; x < 1024; x += 256) {
            CHECK(coords[k] == PatchCoord{x, y, 256, 1});
            ++k;
        }
}

TEST_CASE("40X slides patch on a 512-pixel stride") {
    const auto dir = fresh_dir("sf_seg_40x");
    Raster pink(2048, 2048, 3);
    for (std::size_t i = 0; i < pink.data.size(); i += 3) {
        pink.data[i] = 200;
        pink.data[i + 1] = 120;
        pink.data[i + 2] = 140;
    }
    BundleMetadata meta;
    meta.objective_power = 40.0;
    build_pyramid(pink, {1, 4, 16}, "forty", meta, dir);
    const auto slide = open_bundle(dir);
    const auto coords = enumerate_patches(segment_tissue(slide, {}), slide);
    REQUIRE(coords.size() == 16);
    for (const auto& c : coords) CHECK(c.read_downsample == 2);
    CHECK(coords[15] == PatchCoord{1536, 1536, 256, 2});
}

TEST_CASE("patch centers lie on tissue and runs are repeatable") {
    const auto slide = disc_slide("sf_seg_centers", 2048, 830.0);
    const auto mask = segment_tissue(slide, {});
    const auto coords = enumerate_patches(mask, slide);
    CHECK(!coords.empty());
    for (const auto& c : coords) {
        const long cx = (c.x + 128 * c.read_downsample) / mask.level_factor;
        const long cy = (c.y + 128 * c.read_downsample) / mask.level_factor;
        CHECK(mask.mask.at(int(cx), int(cy)) == 1);
    }
    CHECK(enumerate_patches(segment_tissue(slide, {}), slide) == coords);
}

TEST_CASE("lowering the saturation threshold never shrinks the mask") {
    const auto slide = disc_slide("sf_seg_mono", 2048, 700.0);
    SegmentationParams loose, tight;
    loose.sat_threshold = 8;
    tight.sat_threshold = 60;
    loose.min_contour_area = tight.min_contour_area = 0.0;
    loose.min_hole_area = tight.min_hole_area = 0.0;
    const auto big = segment_tissue(slide, loose).mask;
    const auto small = segment_tissue(slide, tight).mask;
    for (std::size_t i = 0; i < big.data.size(); ++i)
        if (small.data[i]) CHECK(big.data[i] == 1);
}
