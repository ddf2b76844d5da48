#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "slidefuse/errors.hpp"

namespace slidefuse {

// 8-bit row-major image, 1 (gray) or 3 (RGB) channels.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Raster() = default;
    Raster(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 0 || h < 0 || (c != 1 && c != 3))
            throw ArgumentError("Raster: bad dimensions");
    }

    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool operator==(const Raster&) const = default;
};

// Lossless PNG codec (8-bit gray or RGB only).
void write_png(const Raster& img, const std::filesystem::path& path);
Raster read_png(const std::filesystem::path& path);

}  // namespace slidefuse
