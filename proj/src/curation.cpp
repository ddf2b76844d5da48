#include "slidefuse/curation.hpp"

#include <fstream>

#include <json.hpp>

#include "slidefuse/parallel.hpp"

namespace slidefuse {

const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "none";
        case RejectReason::rgb_background: return "rgb_background";
        case RejectReason::hsv_artifact: return "hsv_artifact";
        case RejectReason::pen_marking: return "pen_marking";
        case RejectReason::read_error: return "read_error";
    }
    return "?";
}

std::pair<bool, double> filter_rgb_background(const Raster& patch, const CurationParams& p) {
    if (patch.channels != 3) throw ArgumentError("filter_rgb_background: 3-channel patch expected");
    long count = 0;
    const long total = static_cast<long>(patch.width) * patch.height;
    for (long i = 0; i < total; ++i) {
        const std::uint8_t r = patch.data[i * 3], g = patch.data[i * 3 + 1],
                           b = patch.data[i * 3 + 2];
        const bool white = r >= p.white_intensity && g >= p.white_intensity && b >= p.white_intensity;
        const bool black = r <= p.black_intensity && g <= p.black_intensity && b <= p.black_intensity;
        if (white || black) ++count;
    }
    const double frac = total ? double(count) / total : 0.0;
    return {frac <= p.rgb_frac, frac};
}

std::pair<bool, double> filter_hsv_artifact(const Raster& patch, const CurationParams& p) {
    if (patch.channels != 3) throw ArgumentError("filter_hsv_artifact: 3-channel patch expected");
    long count = 0;
    const long total = static_cast<long>(patch.width) * patch.height;
    for (long i = 0; i < total; ++i) {
        const Hsv hsv =
            rgb_to_hsv(patch.data[i * 3], patch.data[i * 3 + 1], patch.data[i * 3 + 2]);
        if (hsv.s <= p.hsv_s_max && hsv.v >= p.hsv_v_min) ++count;
    }
    const double frac = total ? double(count) / total : 0.0;
    return {frac <= p.hsv_frac, frac};
}

std::pair<bool, double> filter_pen_marking(const Raster& patch, const StainMatrix& stains,
                                           const CurationParams& p) {
    if (patch.channels != 3) throw ArgumentError("filter_pen_marking: 3-channel patch expected");
    long count = 0;
    const long total = static_cast<long>(patch.width) * patch.height;
    for (long i = 0; i < total; ++i) {
        const Eigen::Vector3d od =
            rgb_to_od(patch.data[i * 3], patch.data[i * 3 + 1], patch.data[i * 3 + 2]);
        const double c_e = stains.deconvolve(od)[1];
        if (eosin_intensity(c_e) <= p.eosin_intensity_max) ++count;
    }
    const double frac = total ? double(count) / total : 0.0;
    return {frac <= p.eosin_frac, frac};
}

Raster read_patch(const PyramidSlide& slide, const PatchCoord& coord) {
    const int rd = coord.read_downsample;
    const int level = slide.best_level_for(rd);
    const int f = slide.levels()[level].factor;
    const long span = static_cast<long>(coord.patch_size) * rd;  // level-0 extent
    const int side = static_cast<int>(span / f);
    Raster region = slide.read_region(level, coord.x / f, coord.y / f, side, side);
    if (side == coord.patch_size) return region;
    return resize_area(region, coord.patch_size, coord.patch_size);
}

CurationReport curate(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                      const StainMatrix& stains, const CurationParams& params) {
    CurationReport report;
    report.slide_id = slide.slide_id();
    report.patches.resize(coords.size());
    parallel_for(coords.size(), params.threads, [&](std::size_t i) {
        PatchDecision d;
        d.coord = coords[i];
        try {
            const Raster patch = read_patch(slide, coords[i]);
            bool keep;
            std::tie(keep, d.white_black_frac) = filter_rgb_background(patch, params);
            if (!keep) {
                d.reject_reason = RejectReason::rgb_background;
            } else {
                std::tie(keep, d.hsv_frac) = filter_hsv_artifact(patch, params);
                if (!keep) {
                    d.reject_reason = RejectReason::hsv_artifact;
                } else {
                    std::tie(keep, d.eosin_low_frac) = filter_pen_marking(patch, stains, params);
                    if (!keep) d.reject_reason = RejectReason::pen_marking;
                }
            }
            d.kept = keep;
        } catch (const std::exception& e) {
            d.kept = false;
            d.reject_reason = RejectReason::read_error;
            d.error = e.what();
        }
        report.patches[i] = std::move(d);
    });
    return report;
}

void write_report_jsonl(const CurationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("write_report_jsonl: cannot open " + path.string());
    for (const auto& d : report.patches) {
        nlohmann::json j{{"slide_id", report.slide_id},
                         {"x", d.coord.x},
                         {"y", d.coord.y},
                         {"patch_size", d.coord.patch_size},
                         {"read_downsample", d.coord.read_downsample},
                         {"kept", d.kept},
                         {"reject_reason", to_string(d.reject_reason)},
                         {"white_black_frac", d.white_black_frac},
                         {"hsv_frac", d.hsv_frac},
                         {"eosin_low_frac", d.eosin_low_frac}};
        if (!d.error.empty()) j["error"] = d.error;
        out << j.dump() << "\n";
    }
}

}  // namespace slidefuse
