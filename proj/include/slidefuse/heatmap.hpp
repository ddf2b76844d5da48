#pragma once

#include <array>
#include <vector>

#include "slidefuse/tissue_seg.hpp"

namespace slidefuse {

enum class ScoreNormalization { percentile_rank, min_max };

struct ColorStop {
    double t;
    std::array<int, 3> rgb;
};

struct HeatmapParams {
    double overlay_alpha = 0.5;
    ScoreNormalization normalization = ScoreNormalization::percentile_rank;
    double output_level_downsample = 16.0;
    // cool-to-warm diverging map
    std::vector<ColorStop> colormap_stops = {{0.0, {59, 76, 192}},
                                             {0.5, {221, 221, 221}},
                                             {1.0, {180, 4, 38}}};
};

// percentile_rank: (rank - 0.5)/N with average ranks for ties.
// min_max: affine to [0,1]; a constant vector maps to all 0.5.
std::vector<double> normalize_scores(const std::vector<double>& attention,
                                     ScoreNormalization mode);

// Piecewise-linear through the control points, round half away from zero.
std::array<std::uint8_t, 3> colormap(double t, const HeatmapParams& params = {});

// Alpha-blends colormap(normalized score) over the patch footprints on
// the slide image at the output level; uncovered area stays unblended.
Raster render_heatmap(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                      const std::vector<double>& attention, const HeatmapParams& params);

// render_heatmap plus PNG output and a sidecar JSON of the params used.
void write_heatmap(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                   const std::vector<double>& attention, const HeatmapParams& params,
                   const std::filesystem::path& png_path);

}  // namespace slidefuse
