#include "slidefuse/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace slidefuse {

std::vector<double> normalize_scores(const std::vector<double>& attention,
                                     ScoreNormalization mode) {
    const std::size_t n = attention.size();
    if (n == 0) throw ArgumentError("normalize_scores: empty input");
    std::vector<double> out(n);
    if (mode == ScoreNormalization::min_max) {
        const auto [mn, mx] = std::minmax_element(attention.begin(), attention.end());
        if (*mn == *mx) {
            std::fill(out.begin(), out.end(), 0.5);
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = (attention[i] - *mn) / (*mx - *mn);
        }
        return out;
    }
    // percentile rank with average ranks for ties
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return attention[a] < attention[b]; });
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && attention[idx[j + 1]] == attention[idx[i]]) ++j;
        const double avg_rank = (double(i + 1) + double(j + 1)) / 2.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k) out[idx[k]] = (avg_rank - 0.5) / double(n);
        i = j + 1;
    }
    return out;
}

std::array<std::uint8_t, 3> colormap(double t, const HeatmapParams& params) {
    const auto& stops = params.colormap_stops;
    if (stops.size() < 2) throw ArgumentError("colormap: need at least two control points");
    t = std::clamp(t, 0.0, 1.0);
    std::size_t hi = 1;
    while (hi + 1 < stops.size() && t > stops[hi].t) ++hi;
    const auto& a = stops[hi - 1];
    const auto& b = stops[hi];
    const double span = b.t - a.t;
    const double w = span > 0.0 ? (t - a.t) / span : 0.0;
    std::array<std::uint8_t, 3> rgb;
    for (int c = 0; c < 3; ++c) {
        const double v = a.rgb[c] + w * (b.rgb[c] - a.rgb[c]);
        rgb[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
    return rgb;
}

Raster render_heatmap(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                      const std::vector<double>& attention, const HeatmapParams& params) {
    if (coords.size() != attention.size())
        throw ArgumentError("render_heatmap: coords and attention lengths differ");
    const int level = slide.best_level_for(params.output_level_downsample);
    const auto& lv = slide.levels()[level];
    Raster base = slide.read_region(level, 0, 0, lv.width, lv.height);
    if (coords.empty()) return base;

    const std::vector<double> norm = normalize_scores(attention, params.normalization);
    const double alpha = std::clamp(params.overlay_alpha, 0.0, 1.0);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto& c = coords[i];
        const auto rgb = colormap(norm[i], params);
        const long x0 = c.x / lv.factor, y0 = c.y / lv.factor;
        const long span = static_cast<long>(c.patch_size) * c.read_downsample / lv.factor;
        for (long y = y0; y < std::min<long>(y0 + span, base.height); ++y)
            for (long x = x0; x < std::min<long>(x0 + span, base.width); ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    const double blended =
                        alpha * rgb[ch] + (1.0 - alpha) * base.at(int(x), int(y), ch);
                    base.at(int(x), int(y), ch) =
                        static_cast<std::uint8_t>(std::floor(blended + 0.5));
                }
    }
    return base;
}

void write_heatmap(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                   const std::vector<double>& attention, const HeatmapParams& params,
                   const std::filesystem::path& png_path) {
    write_png(render_heatmap(slide, coords, attention, params), png_path);
    nlohmann::json stops = nlohmann::json::array();
    for (const auto& s : params.colormap_stops)
        stops.push_back({{"t", s.t}, {"rgb", s.rgb}});
    nlohmann::json j{
        {"overlay_alpha", params.overlay_alpha},
        {"normalization",
         params.normalization == ScoreNormalization::percentile_rank ? "percentile-rank"
                                                                     : "min-max"},
        {"output_level_downsample", params.output_level_downsample},
        {"colormap_stops", stops},
        {"n_patches", coords.size()}};
    std::filesystem::path sidecar = png_path;
    sidecar.replace_extension(".json");
    std::ofstream out(sidecar);
    out << j.dump(2) << "\n";
}

}  // namespace slidefuse
