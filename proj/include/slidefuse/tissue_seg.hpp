#pragma once

#include <vector>

#include "slidefuse/slide_io.hpp"

namespace slidefuse {

struct Point {
    int x, y;
    bool operator==(const Point&) const = default;
};

using Polygon = std::vector<Point>;  // closed: last pixel adjacent to first

struct Contour {
    Polygon outer;
    std::vector<Polygon> holes;
};

struct TissueMask {
    int level = 0;           // pyramid level the mask lives on
    int level_factor = 1;    // downsample of that level
    Raster mask;             // 1-channel, 1 = tissue
    std::vector<Contour> contours;
};

// Level-0 top-left of a candidate patch. read_downsample is 2 for 40X
// slides so patches always cover 20X-equivalent tissue.
struct PatchCoord {
    long x = 0;
    long y = 0;
    int patch_size = 256;
    int read_downsample = 1;
    bool operator==(const PatchCoord&) const = default;
};

struct SegmentationParams {
    int sat_threshold = 8;
    int median_kernel = 7;
    int close_kernel_w = 4;
    int close_kernel_h = 4;
    double min_contour_area = 16.0;  // in patch-areas at mask level
    double min_hole_area = 4.0;      // in patch-areas at mask level
    double target_downsample = 16.0;
    bool four_corner_test = false;   // default is the center-point rule
    int threads = 1;                 // result is independent of this
};

// k x k median with clamped borders; k must be odd.
Raster median_filter(const Raster& channel, int k);

// Dilation then erosion with a w x h all-ones structuring element,
// clamped borders. Mask values are 0/1.
Raster morph_close(const Raster& binary, int kernel_w, int kernel_h);

TissueMask segment_tissue(const PyramidSlide& slide, const SegmentationParams& params);

std::vector<PatchCoord> enumerate_patches(const TissueMask& mask, const PyramidSlide& slide,
                                          const SegmentationParams& params = {});

}  // namespace slidefuse
