#include "slidefuse/tissue_seg.hpp"

#include <algorithm>
#include <cmath>

#include "slidefuse/colorops.hpp"

namespace slidefuse {

Raster median_filter(const Raster& channel, int k) {
    if (channel.channels != 1) throw ArgumentError("median_filter: single-channel input expected");
    if (k < 1 || k % 2 == 0) throw ArgumentError("median_filter: kernel must be odd and >= 1");
    if (k == 1) return channel;
    const int r = k / 2;
    Raster out(channel.width, channel.height, 1);
    std::vector<std::uint8_t> window;
    window.reserve(static_cast<std::size_t>(k) * k);
    for (int y = 0; y < channel.height; ++y) {
        for (int x = 0; x < channel.width; ++x) {
            window.clear();
            for (int dy = -r; dy <= r; ++dy) {
                const int cy = std::clamp(y + dy, 0, channel.height - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int cx = std::clamp(x + dx, 0, channel.width - 1);
                    window.push_back(channel.at(cx, cy));
                }
            }
            auto mid = window.begin() + window.size() / 2;
            std::nth_element(window.begin(), mid, window.end());
            out.at(x, y, 0) = *mid;
        }
    }
    return out;
}

Raster morph_close(const Raster& binary, int kernel_w, int kernel_h) {
    if (binary.channels != 1) throw ArgumentError("morph_close: single-channel input expected");
    if (kernel_w < 1 || kernel_h < 1) throw ArgumentError("morph_close: kernel dims must be >= 1");
    // Anchor at floor(center); even kernels are asymmetric like OpenCV's.
    const int ax = kernel_w / 2, ay = kernel_h / 2;
    auto apply = [&](const Raster& src, bool dilate) {
        Raster out(src.width, src.height, 1);
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x) {
                std::uint8_t acc = dilate ? 0 : 1;
                for (int dy = -ay; dy < kernel_h - ay; ++dy) {
                    const int cy = std::clamp(y + dy, 0, src.height - 1);
                    for (int dx = -ax; dx < kernel_w - ax; ++dx) {
                        const int cx = std::clamp(x + dx, 0, src.width - 1);
                        const std::uint8_t v = src.at(cx, cy) ? 1 : 0;
                        acc = dilate ? std::max(acc, v) : std::min(acc, v);
                    }
                }
                out.at(x, y, 0) = acc;
            }
        return out;
    };
    return apply(apply(binary, true), false);
}

namespace {

// 8-connected labeling of foreground (value != 0). Labels start at 1.
std::vector<int> label_components(const Raster& mask, bool foreground, bool eight_conn,
                                  int& n_labels) {
    const int w = mask.width, h = mask.height;
    std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
    auto match = [&](int x, int y) { return (mask.at(x, y) != 0) == foreground; };
    n_labels = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!match(x, y) || labels[y * static_cast<std::size_t>(w) + x]) continue;
            ++n_labels;
            stack.push_back({x, y});
            labels[y * static_cast<std::size_t>(w) + x] = n_labels;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (!eight_conn && dx != 0 && dy != 0) continue;
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        auto& l = labels[ny * static_cast<std::size_t>(w) + nx];
                        if (l == 0 && match(nx, ny)) {
                            l = n_labels;
                            stack.push_back({nx, ny});
                        }
                    }
            }
        }
    return labels;
}

// Moore-neighbor boundary trace of the component containing `start`
// (its top-left pixel). Returns the closed outer boundary.
Polygon trace_boundary(const Raster& mask, const std::vector<int>& labels, int label,
                       Point start) {
    const int w = mask.width, h = mask.height;
    auto is_set = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < w && y < h &&
               labels[y * static_cast<std::size_t>(w) + x] == label;
    };
    // clockwise Moore neighborhood starting from W
    static const int dx8[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    static const int dy8[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    Polygon poly{start};
    Point cur = start;
    int backtrack = 0;  // came from W (start is a top-left pixel)
    for (;;) {
        int i = (backtrack + 1) % 8;
        bool found = false;
        for (int step = 0; step < 8; ++step, i = (i + 1) % 8) {
            const int nx = cur.x + dx8[i], ny = cur.y + dy8[i];
            if (is_set(nx, ny)) {
                // direction of cur as seen from the neighbor
                backtrack = (i + 4) % 8;
                cur = {nx, ny};
                found = true;
                break;
            }
        }
        if (!found) break;  // isolated pixel
        if (cur == start) break;
        poly.push_back(cur);
        if (poly.size() > static_cast<std::size_t>(4) * w * h) break;  // safety
    }
    return poly;
}

}  // namespace

TissueMask segment_tissue(const PyramidSlide& slide, const SegmentationParams& params) {
    const int level = slide.best_level_for(params.target_downsample);
    const auto& lv = slide.levels()[level];
    const Raster rgb = slide.read_region(level, 0, 0, lv.width, lv.height);

    Raster sat(lv.width, lv.height, 1);
    for (int y = 0; y < lv.height; ++y)
        for (int x = 0; x < lv.width; ++x) {
            const Hsv hsv = rgb_to_hsv(rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2));
            sat.at(x, y, 0) = hsv.s;
        }

    Raster mask(lv.width, lv.height, 1);
    const Raster smoothed = median_filter(sat, params.median_kernel);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        mask.data[i] = smoothed.data[i] > params.sat_threshold ? 1 : 0;
    mask = morph_close(mask, params.close_kernel_w, params.close_kernel_h);

    // Patch footprint measured at mask level.
    const double patch_side = 256.0 * slide.read_downsample() / lv.factor;
    const double patch_area = patch_side * patch_side;
    const double min_area_px = params.min_contour_area * patch_area;
    const double min_hole_px = params.min_hole_area * patch_area;

    const int w = mask.width, h = mask.height;
    int n_fg = 0;
    std::vector<int> fg = label_components(mask, true, true, n_fg);
    std::vector<long> fg_area(n_fg + 1, 0);
    for (int l : fg)
        if (l) ++fg_area[l];
    // drop small components
    std::vector<bool> keep_fg(n_fg + 1, false);
    for (int l = 1; l <= n_fg; ++l) keep_fg[l] = fg_area[l] >= min_area_px;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = fg[y * static_cast<std::size_t>(w) + x];
            if (l && !keep_fg[l]) mask.at(x, y, 0) = 0;
        }

    // Background components not touching the border are holes; small
    // holes are filled into their surrounding component.
    int n_bg = 0;
    std::vector<int> bg = label_components(mask, false, false, n_bg);
    std::vector<long> bg_area(n_bg + 1, 0);
    std::vector<bool> touches_border(n_bg + 1, false);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = bg[y * static_cast<std::size_t>(w) + x];
            if (!l) continue;
            ++bg_area[l];
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) touches_border[l] = true;
        }
    std::vector<bool> fill_hole(n_bg + 1, false);
    for (int l = 1; l <= n_bg; ++l)
        fill_hole[l] = !touches_border[l] && bg_area[l] < min_hole_px;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = bg[y * static_cast<std::size_t>(w) + x];
            if (l && fill_hole[l]) mask.at(x, y, 0) = 1;
        }

    // Relabel the final mask and trace contours.
    TissueMask result;
    result.level = level;
    result.level_factor = lv.factor;
    int n_final = 0;
    std::vector<int> lab = label_components(mask, true, true, n_final);
    std::vector<Point> first_px(n_final + 1, {-1, -1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = lab[y * static_cast<std::size_t>(w) + x];
            if (l && first_px[l].x < 0) first_px[l] = {x, y};
        }
    result.contours.resize(n_final);
    for (int l = 1; l <= n_final; ++l)
        result.contours[l - 1].outer = trace_boundary(mask, lab, l, first_px[l]);

    // Remaining holes, attached to their parent contour.
    int n_hole = 0;
    std::vector<int> hole_lab = label_components(mask, false, false, n_hole);
    std::vector<bool> hole_border(n_hole + 1, false);
    std::vector<Point> hole_first(n_hole + 1, {-1, -1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = hole_lab[y * static_cast<std::size_t>(w) + x];
            if (!l) continue;
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) hole_border[l] = true;
            if (hole_first[l].x < 0) hole_first[l] = {x, y};
        }
    for (int l = 1; l <= n_hole; ++l) {
        if (hole_border[l]) continue;
        const Point p = hole_first[l];  // pixel above belongs to the parent
        const int parent = lab[(p.y - 1) * static_cast<std::size_t>(w) + p.x];
        if (parent == 0) continue;
        Polygon boundary = trace_boundary(mask, hole_lab, l, p);
        result.contours[parent - 1].holes.push_back(std::move(boundary));
    }

    result.mask = std::move(mask);
    return result;
}

std::vector<PatchCoord> enumerate_patches(const TissueMask& mask, const PyramidSlide& slide,
                                          const SegmentationParams& params) {
    const int rd = slide.read_downsample();
    const long stride = 256L * rd;
    const long w0 = slide.levels()[0].width;
    const long h0 = slide.levels()[0].height;
    const int f = mask.level_factor;

    auto tissue_at = [&](long lx, long ly) {
        const int mx = std::clamp<long>(lx / f, 0, mask.mask.width - 1);
        const int my = std::clamp<long>(ly / f, 0, mask.mask.height - 1);
        return mask.mask.at(static_cast<int>(mx), static_cast<int>(my)) != 0;
    };

    std::vector<PatchCoord> out;
    for (long y = 0; y + stride <= h0; y += stride)
        for (long x = 0; x + stride <= w0; x += stride) {
            bool keep;
            if (params.four_corner_test) {
                keep = tissue_at(x, y) && tissue_at(x + stride - 1, y) &&
                       tissue_at(x, y + stride - 1) && tissue_at(x + stride - 1, y + stride - 1);
            } else {
                keep = tissue_at(x + stride / 2, y + stride / 2);
            }
            if (keep) out.push_back({x, y, 256, rd});
        }
    return out;
}

}  // namespace slidefuse
