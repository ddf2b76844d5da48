#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slidefuse/raster.hpp"

namespace slidefuse {

// Multi-resolution slide backed by a pyramid-bundle directory
// (manifest.json + one PNG per level).
class PyramidSlide {
public:
    struct Level {
        int factor;  // downsample relative to level 0; level 0 has factor 1
        int width;
        int height;
        std::filesystem::path raster_path;
    };

    const std::string& slide_id() const { return slide_id_; }
    const std::vector<Level>& levels() const { return levels_; }
    std::optional<double> objective_power() const { return objective_power_; }
    std::optional<double> mpp() const { return mpp_; }

    // 40X slides are patched at 20X equivalence by reading at downsample 2.
    int read_downsample() const {
        return (objective_power_ && *objective_power_ == 40.0) ? 2 : 1;
    }

    // Finest level whose factor does not exceed target; level 0 always
    // qualifies. Callers resize from there when the factor is inexact.
    int best_level_for(double target_downsample) const;

    Raster read_region(int level, long x, long y, int w, int h) const;

    friend PyramidSlide open_bundle(const std::filesystem::path& dir);

private:
    std::string slide_id_;
    std::vector<Level> levels_;
    std::optional<double> objective_power_;
    std::optional<double> mpp_;
    // Level rasters are loaded once at open; reads afterwards are pure.
    std::vector<Raster> rasters_;
};

PyramidSlide open_bundle(const std::filesystem::path& dir);

struct BundleMetadata {
    std::optional<double> objective_power;
    std::optional<double> mpp;
};

// Writes a pyramid bundle. Each level is the box-average of level 0 by
// its factor, rounded half away from zero per channel. Factors must
// start at 1 and be strictly increasing.
void build_pyramid(const Raster& flat, const std::vector<int>& factors,
                   const std::string& slide_id, const BundleMetadata& meta,
                   const std::filesystem::path& out_dir);

// Area-average resize of an RGB/gray raster to the target size.
Raster resize_area(const Raster& src, int out_w, int out_h);

}  // namespace slidefuse
