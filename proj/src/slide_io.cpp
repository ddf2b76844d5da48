#include "slidefuse/slide_io.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace slidefuse {

int PyramidSlide::best_level_for(double target_downsample) const {
    int best = 0;
    for (int i = 0; i < static_cast<int>(levels_.size()); ++i)
        if (levels_[i].factor <= target_downsample) best = i;
    return best;
}

Raster PyramidSlide::read_region(int level, long x, long y, int w, int h) const {
    if (level < 0 || level >= static_cast<int>(levels_.size()))
        throw BoundsError("read_region: level out of range");
    const Raster& src = rasters_[level];
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > src.width || y + h > src.height)
        throw BoundsError("read_region: region outside level bounds");
    Raster out(w, h, src.channels);
    const std::size_t stride = static_cast<std::size_t>(src.width) * src.channels;
    const std::size_t row_bytes = static_cast<std::size_t>(w) * src.channels;
    for (int r = 0; r < h; ++r) {
        const std::uint8_t* p = src.data.data() + (y + r) * stride + x * src.channels;
        std::copy(p, p + row_bytes, out.data.begin() + static_cast<std::size_t>(r) * row_bytes);
    }
    return out;
}

PyramidSlide open_bundle(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw NotFoundError("open_bundle: missing manifest: " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("open_bundle: manifest parse error: " + std::string(e.what()));
    }

    PyramidSlide slide;
    try {
        slide.slide_id_ = j.at("slide_id").get<std::string>();
        if (j.contains("objective_power") && !j["objective_power"].is_null())
            slide.objective_power_ = j["objective_power"].get<double>();
        if (j.contains("mpp") && !j["mpp"].is_null())
            slide.mpp_ = j["mpp"].get<double>();
        for (const auto& jl : j.at("levels")) {
            PyramidSlide::Level lv;
            lv.factor = jl.at("factor").get<int>();
            lv.width = jl.at("width").get<int>();
            lv.height = jl.at("height").get<int>();
            lv.raster_path = dir / jl.at("path").get<std::string>();
            slide.levels_.push_back(lv);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("open_bundle: manifest schema error: " + std::string(e.what()));
    }

    if (slide.levels_.empty()) throw FormatError("open_bundle: no levels");
    if (slide.levels_[0].factor != 1) throw FormatError("open_bundle: level 0 must have factor 1");
    for (std::size_t i = 1; i < slide.levels_.size(); ++i)
        if (slide.levels_[i].factor <= slide.levels_[i - 1].factor)
            throw FormatError("open_bundle: level factors must be strictly increasing");
    if (slide.objective_power_ &&
        *slide.objective_power_ != 20.0 && *slide.objective_power_ != 40.0)
        throw FormatError("open_bundle: objective_power must be 20 or 40");
    const int w0 = slide.levels_[0].width;
    const int h0 = slide.levels_[0].height;
    for (const auto& lv : slide.levels_) {
        if (std::abs(lv.width - double(w0) / lv.factor) > 1.0 ||
            std::abs(lv.height - double(h0) / lv.factor) > 1.0)
            throw FormatError("open_bundle: level " + std::to_string(lv.factor) +
                              " dimensions inconsistent with level 0 (tolerance 1 px)");
    }

    for (const auto& lv : slide.levels_) {
        Raster r = read_png(lv.raster_path);
        if (r.width != lv.width || r.height != lv.height)
            throw FormatError("open_bundle: raster size mismatch for " + lv.raster_path.string());
        slide.rasters_.push_back(std::move(r));
    }
    return slide;
}

namespace {

// Box-average downsample by an integer factor, half-away-from-zero rounding.
Raster downsample_box(const Raster& src, int factor) {
    const int ow = src.width / factor;
    const int oh = src.height / factor;
    Raster out(ow, oh, src.channels);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < src.channels; ++c) {
                long sum = 0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        sum += src.at(x * factor + dx, y * factor + dy, c);
                const double avg = double(sum) / (double(factor) * factor);
                out.at(x, y, c) = static_cast<std::uint8_t>(std::floor(avg + 0.5));
            }
    return out;
}

}  // namespace

void build_pyramid(const Raster& flat, const std::vector<int>& factors,
                   const std::string& slide_id, const BundleMetadata& meta,
                   const std::filesystem::path& out_dir) {
    if (flat.channels != 3) throw ArgumentError("build_pyramid: level 0 must be 3-channel");
    if (factors.empty() || factors[0] != 1)
        throw ArgumentError("build_pyramid: factors must start at 1");
    for (std::size_t i = 1; i < factors.size(); ++i)
        if (factors[i] <= factors[i - 1])
            throw ArgumentError("build_pyramid: factors must be strictly increasing");

    std::filesystem::create_directories(out_dir);
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t k = 0; k < factors.size(); ++k) {
        const Raster level = factors[k] == 1 ? flat : downsample_box(flat, factors[k]);
        const std::string name = "level_" + std::to_string(k) + ".png";
        write_png(level, out_dir / name);
        levels.push_back({{"factor", factors[k]},
                          {"width", level.width},
                          {"height", level.height},
                          {"path", name}});
    }
    nlohmann::json j{{"slide_id", slide_id}, {"levels", levels}};
    j["objective_power"] =
        meta.objective_power ? nlohmann::json(*meta.objective_power) : nlohmann::json(nullptr);
    j["mpp"] = meta.mpp ? nlohmann::json(*meta.mpp) : nlohmann::json(nullptr);
    std::ofstream out(out_dir / "manifest.json");
    out << j.dump(2) << "\n";
}

Raster resize_area(const Raster& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw ArgumentError("resize_area: bad target size");
    if (out_w == src.width && out_h == src.height) return src;
    Raster out(out_w, out_h, src.channels);
    const double sx = double(src.width) / out_w;
    const double sy = double(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        for (int x = 0; x < out_w; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            for (int c = 0; c < src.channels; ++c) {
                double acc = 0.0, area = 0.0;
                for (int yy = int(std::floor(y0)); yy < int(std::ceil(y1)); ++yy) {
                    const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                    for (int xx = int(std::floor(x0)); xx < int(std::ceil(x1)); ++xx) {
                        const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                        const int cy = std::min(yy, src.height - 1);
                        const int cx = std::min(xx, src.width - 1);
                        acc += wx * wy * src.at(cx, cy, c);
                        area += wx * wy;
                    }
                }
                out.at(x, y, c) = static_cast<std::uint8_t>(std::floor(acc / area + 0.5));
            }
        }
    }
    return out;
}

}  // namespace slidefuse
