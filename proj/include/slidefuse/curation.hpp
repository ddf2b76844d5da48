#pragma once

#include <string>
#include <vector>

#include "slidefuse/colorops.hpp"
#include "slidefuse/tissue_seg.hpp"

namespace slidefuse {

enum class RejectReason { none, rgb_background, hsv_artifact, pen_marking, read_error };

const char* to_string(RejectReason r);

struct PatchDecision {
    PatchCoord coord;
    bool kept = false;
    RejectReason reject_reason = RejectReason::none;
    double white_black_frac = 0.0;
    double hsv_frac = 0.0;
    double eosin_low_frac = 0.0;  // only filled when the pen filter ran
    std::string error;            // set when reject_reason == read_error
};

struct CurationReport {
    std::string slide_id;
    std::vector<PatchDecision> patches;
};

// All thresholds are strict: a patch exactly at the boundary is kept.
struct CurationParams {
    int white_intensity = 230;   // all channels >= this counts as white
    int black_intensity = 25;    // all channels <= this counts as black
    double rgb_frac = 0.60;
    int hsv_s_max = 25;          // S <= this ...
    int hsv_v_min = 230;         // ... and V >= this counts as artifact
    double hsv_frac = 0.95;
    int eosin_intensity_max = 50;
    double eosin_frac = 0.80;
    int threads = 1;             // result is independent of this
};

std::pair<bool, double> filter_rgb_background(const Raster& patch, const CurationParams& p = {});
std::pair<bool, double> filter_hsv_artifact(const Raster& patch, const CurationParams& p = {});
std::pair<bool, double> filter_pen_marking(const Raster& patch, const StainMatrix& stains,
                                           const CurationParams& p = {});

// Reads each patch at 20X equivalence and applies the three filters in
// order (rgb, hsv, pen) with short-circuiting. Report order follows the
// input coordinate order.
CurationReport curate(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                      const StainMatrix& stains, const CurationParams& params = {});

// JSON-lines, one record per patch.
void write_report_jsonl(const CurationReport& report, const std::filesystem::path& path);

// Reads a patch at 20X equivalence: a native 256-pixel read for 20X
// slides, a 512-pixel read resized down for 40X slides.
Raster read_patch(const PyramidSlide& slide, const PatchCoord& coord);

}  // namespace slidefuse
