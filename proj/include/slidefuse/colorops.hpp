#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>

#include "slidefuse/errors.hpp"

namespace slidefuse {

struct Hsv {
    std::uint8_t h, s, v;
};

// Hexcone HSV with all three channels scaled to 0-255 (hue covers the
// full circle in 256 steps).
inline Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int mx = std::max({r, g, b});
    const int mn = std::min({r, g, b});
    const int delta = mx - mn;
    Hsv out{0, 0, static_cast<std::uint8_t>(mx)};
    if (mx > 0) out.s = static_cast<std::uint8_t>((255 * delta + mx / 2) / mx);
    if (delta > 0) {
        double hue;  // degrees
        if (mx == r)
            hue = 60.0 * std::fmod((g - b) / double(delta) + 6.0, 6.0);
        else if (mx == g)
            hue = 60.0 * ((b - r) / double(delta) + 2.0);
        else
            hue = 60.0 * ((r - g) / double(delta) + 4.0);
        out.h = static_cast<std::uint8_t>(std::lround(hue * 255.0 / 360.0) % 256);
    }
    return out;
}

// Optical density: od = -log10(max(I,1)/255). Clamping at 1 keeps black
// pixels finite.
inline Eigen::Vector3d rgb_to_od(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto od = [](std::uint8_t v) {
        return -std::log10(std::max<int>(v, 1) / 255.0);
    };
    return {od(r), od(g), od(b)};
}

// Unit optical-density directions for Hematoxylin, Eosin, DAB plus the
// precomputed inverse used by deconvolve().
class StainMatrix {
public:
    // Rows are normalized to unit length on construction.
    explicit StainMatrix(const Eigen::Matrix3d& rows) {
        Eigen::Matrix3d m = rows;
        for (int i = 0; i < 3; ++i) {
            const double n = m.row(i).norm();
            if (n <= 0.0) throw ArgumentError("StainMatrix: zero stain vector");
            m.row(i) /= n;
        }
        stains_ = m;
        const Eigen::FullPivLU<Eigen::Matrix3d> lu(m.transpose());
        if (!lu.isInvertible()) throw ArgumentError("StainMatrix: singular stain matrix");
        inverse_ = lu.inverse();
    }

    // Ruifrok-Johnston H&E-DAB standard vectors.
    static StainMatrix hed_default() {
        Eigen::Matrix3d m;
        m << 0.65, 0.70, 0.29,   // Hematoxylin
             0.07, 0.99, 0.11,   // Eosin
             0.27, 0.57, 0.78;   // DAB
        return StainMatrix(m);
    }

    static StainMatrix load_json(const std::filesystem::path& path);

    const Eigen::Matrix3d& rows() const { return stains_; }

    // Solves od = c_h*s_H + c_e*s_E + c_d*s_D. Concentrations may come
    // out negative on noisy pixels and are not clamped.
    Eigen::Vector3d deconvolve(const Eigen::Vector3d& od) const { return inverse_ * od; }

private:
    Eigen::Matrix3d stains_;   // rows: H, E, DAB
    Eigen::Matrix3d inverse_;  // maps od -> concentrations
};

// Transmittance mapping back to an 8-bit scale; negative concentrations
// clamp to full brightness.
inline std::uint8_t eosin_intensity(double c_e) {
    const double t = 255.0 * std::pow(10.0, -std::max(c_e, 0.0));
    const double r = std::floor(t + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace slidefuse
