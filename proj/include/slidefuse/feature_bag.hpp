#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "slidefuse/tissue_seg.hpp"

namespace slidefuse {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-slide bag of patch feature vectors, rows aligned with coords.
struct PatchBag {
    std::string slide_id;
    std::string extractor_tag;  // "baseline-v1" or "external"
    FeatureMatrix features;     // N x D
    std::vector<PatchCoord> coords;

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    bool trainable() const { return n() >= 1; }
};

inline constexpr int kBaselineFeatureDim = 1024;

// Deterministic stand-in for deep features: 256-bin normalized H, S, V
// histograms plus a 16x16 grayscale box thumbnail in [0,1].
Eigen::VectorXf extract_baseline_features(const Raster& patch);

PatchBag extract_baseline_bag(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                              int threads = 1);

void write_bag(const PatchBag& bag, const std::filesystem::path& path);
PatchBag read_bag(const std::filesystem::path& path);

// Raw float32 row-major matrix (N x D) + JSON-lines coords.
PatchBag import_external_features(const std::filesystem::path& matrix_path, int dim,
                                  const std::filesystem::path& coords_path,
                                  const std::string& slide_id);

}  // namespace slidefuse
