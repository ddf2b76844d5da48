// Acceptance suite: one pass/fail line per criterion, exit code = number
// of failed criteria.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slidefuse/config.hpp"
#include "slidefuse/curation.hpp"
#include "slidefuse/evaluation.hpp"
#include "slidefuse/fixtures.hpp"
#include "slidefuse/heatmap.hpp"
#include "slidefuse/tree_shap.hpp"

using namespace slidefuse;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define REQUIRE_TRUE(cond)                                                              \
    do {                                                                                \
        if (!(cond)) throw CheckFailure(std::string("failed: ") + #cond + " (line " +   \
                                        std::to_string(__LINE__) + ")");                \
    } while (0)

#define REQUIRE_NEAR(a, b, tol)                                                          \
    do {                                                                                 \
        const double a_ = (a), b_ = (b);                                                 \
        if (!(std::abs(a_ - b_) <= (tol)))                                               \
            throw CheckFailure(std::string("failed: |") + #a + " - " + #b + "| = " +     \
                               std::to_string(std::abs(a_ - b_)) + " > " + #tol +        \
                               " (line " + std::to_string(__LINE__) + ")");              \
    } while (0)

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Raster filled_patch(int side, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Raster p(side, side, 3);
    for (std::size_t i = 0; i < p.data.size(); i += 3) {
        p.data[i] = r;
        p.data[i + 1] = g;
        p.data[i + 2] = b;
    }
    return p;
}

void paint_first(Raster& p, long n, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (long i = 0; i < n; ++i) {
        p.data[i * 3] = r;
        p.data[i * 3 + 1] = g;
        p.data[i * 3 + 2] = b;
    }
}

// filter cascade in curation order; returns the first rejection reason
RejectReason classify(const Raster& patch, const StainMatrix& stains) {
    if (!filter_rgb_background(patch).first) return RejectReason::rgb_background;
    if (!filter_hsv_artifact(patch).first) return RejectReason::hsv_artifact;
    if (!filter_pen_marking(patch, stains).first) return RejectReason::pen_marking;
    return RejectReason::none;
}

// ---------------------------------------------------------------------------

void criterion_1_curation_boundaries() {
    // 240x240 = 57600 pixels makes the 60/95/80 percent fractions exact
    const int side = 240;
    const long total = long(side) * side;
    const auto stains = StainMatrix::hed_default();

    // white/black background at exactly 60 percent over a gray body
    auto rgb = filled_patch(side, 128, 128, 128);
    paint_first(rgb, total * 60 / 100, 255, 255, 255);
    REQUIRE_TRUE(filter_rgb_background(rgb).second == 0.60);
    REQUIRE_TRUE(classify(rgb, stains) == RejectReason::none);
    paint_first(rgb, total * 60 / 100 + 1, 255, 255, 255);
    REQUIRE_TRUE(classify(rgb, stains) == RejectReason::rgb_background);

    // bright desaturated pixels at exactly 95 percent over a colored body
    auto hsv = filled_patch(side, 128, 30, 90);
    paint_first(hsv, total * 95 / 100, 229, 254, 229);
    REQUIRE_TRUE(filter_hsv_artifact(hsv).second == 0.95);
    REQUIRE_TRUE(classify(hsv, stains) == RejectReason::none);
    paint_first(hsv, total * 95 / 100 + 1, 229, 254, 229);
    REQUIRE_TRUE(classify(hsv, stains) == RejectReason::hsv_artifact);

    // low-eosin-intensity pixels at exactly 80 percent over white
    auto pen = filled_patch(side, 255, 255, 255);
    paint_first(pen, total * 80 / 100, 217, 26, 198);
    REQUIRE_TRUE(filter_pen_marking(pen, stains).second == 0.80);
    REQUIRE_TRUE(classify(pen, stains) == RejectReason::none);
    paint_first(pen, total * 80 / 100 + 1, 217, 26, 198);
    REQUIRE_TRUE(classify(pen, stains) == RejectReason::pen_marking);
}

void criterion_2_stain_round_trip() {
    const auto stains = StainMatrix::hed_default();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(0.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector3d c(d(rng), d(rng), d(rng));
        const Eigen::Vector3d od = stains.rows().transpose() * c;
        REQUIRE_TRUE((stains.deconvolve(od) - c).cwiseAbs().maxCoeff() < 1e-9);
    }

    // 8-bit path: quantize to pixel intensities and back. Dense stains
    // saturate the 8-bit sensor (channels below intensity 26 carry
    // quantization error above the tolerance), so the pixel-level check
    // covers the displayable gamut.
    std::uniform_real_distribution<double> light(0.0, 0.6);
    long in_gamut = 0;
    double worst8 = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector3d c(light(rng), light(rng), light(rng));
        const Eigen::Vector3d od = stains.rows().transpose() * c;
        std::uint8_t px[3];
        bool displayable = true;
        for (int ch = 0; ch < 3; ++ch) {
            const double v = std::floor(255.0 * std::pow(10.0, -od[ch]) + 0.5);
            px[ch] = std::uint8_t(std::clamp(v, 0.0, 255.0));
            if (px[ch] < 26) displayable = false;
        }
        if (!displayable) continue;
        ++in_gamut;
        const Eigen::Vector3d back = stains.deconvolve(rgb_to_od(px[0], px[1], px[2]));
        worst8 = std::max(worst8, (back - c).cwiseAbs().maxCoeff());
    }
    REQUIRE_TRUE(in_gamut >= 500);
    REQUIRE_TRUE(worst8 < 0.02);
}

void criterion_3_segmentation_oracle() {
    const int side = 2048;
    const double radius = 830.0;
    const auto dir = fresh_dir("sf_acc_seg");
    Raster img(side, side, 3);
    const double c = side / 2.0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const bool tissue = (x - c) * (x - c) + (y - c) * (y - c) <= radius * radius;
            img.at(x, y, 0) = tissue ? 200 : 250;
            img.at(x, y, 1) = tissue ? 120 : 250;
            img.at(x, y, 2) = tissue ? 140 : 250;
        }
    BundleMetadata meta;
    meta.objective_power = 20.0;
    build_pyramid(img, {1, 4, 16}, "acc-disc", meta, dir);
    const auto slide = open_bundle(dir);

    const auto mask = segment_tissue(slide, {});
    REQUIRE_TRUE(mask.contours.size() == 1);
    REQUIRE_TRUE(mask.contours[0].holes.empty());

    // hand-computed center-point membership on the ideal disc; every grid
    // center is at least 75 level-0 pixels from the disc boundary
    std::vector<PatchCoord> expected;
    for (long y = 0; y < side; y += 256)
        for (long x = 0; x < side; x += 256) {
            const double dx = double(x + 128) - c, dy = double(y + 128) - c;
            const double dist = std::sqrt(dx * dx + dy * dy);
            REQUIRE_TRUE(std::abs(dist - radius) > 75.0);
            if (dist <= radius) expected.push_back({x, y, 256, 1});
        }
    REQUIRE_TRUE(expected.size() == 32);

    const auto coords = enumerate_patches(mask, slide);
    REQUIRE_TRUE(coords == expected);

    for (int threads : {1, 2, 3, 8}) {
        SegmentationParams p;
        p.threads = threads;
        const auto again = segment_tissue(slide, p);
        REQUIRE_TRUE(again.mask == mask.mask);
        REQUIRE_TRUE(enumerate_patches(again, slide) == expected);
    }
}

void criterion_4_mil_gradient_check() {
    const mil::MilDims dims{16, 12, 8};
    auto model = mil::init_model<double>(dims, 41);
    mil::Mat<double> x(6, 16);
    std::mt19937_64 rng(42);
    std::normal_distribution<double> d(0.0, 1.0);
    for (int r = 0; r < 6; ++r)
        for (int col = 0; col < 16; ++col) x(r, col) = d(rng);
    mil::MilHyper hyper;
    hyper.top_k = 3;
    const double eps = 1e-4;
    for (int label : {0, 1}) {
        mil::MilModelT<double> grad;
        mil::loss_and_gradients(model, x, label, hyper, grad);
        auto tensors = model.tensors();
        auto gtensors = grad.tensors();
        for (std::size_t t = 0; t < tensors.size(); ++t) {
            auto& W = *tensors[t];
            double worst = 0.0;
            for (Eigen::Index i = 0; i < W.size(); ++i) {
                const double keep = W(i);
                W(i) = keep + eps;
                const double up = mil::compute_loss(model, x, label, hyper).total;
                W(i) = keep - eps;
                const double dn = mil::compute_loss(model, x, label, hyper).total;
                W(i) = keep;
                const double fd = (up - dn) / (2.0 * eps);
                const double an = (*gtensors[t])(i);
                worst = std::max(worst,
                                 std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-6));
            }
            REQUIRE_TRUE(worst < 1e-4);
        }
    }
}

void criterion_5_mil_attention() {
    // softmax and permutation invariants
    const mil::MilDims dims{32, 16, 8};
    const auto probe = mil::init_model<double>(dims, 6);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    mil::Mat<double> bag(9, 32);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 32; ++c) bag(r, c) = noise(rng);
    const auto out = mil::forward(probe, bag);
    REQUIRE_NEAR(out.attention.sum(), 1.0, 1e-6);
    mil::Mat<double> reversed(9, 32);
    for (int r = 0; r < 9; ++r) reversed.row(r) = bag.row(8 - r);
    const auto rev = mil::forward(probe, reversed);
    REQUIRE_TRUE(rev.logits[0] == out.logits[0] && rev.logits[1] == out.logits[1]);
    const auto single = mil::forward(probe, mil::Mat<double>(bag.topRows(1)));
    REQUIRE_TRUE(single.attention.size() == 1 && single.attention[0] == 1.0);

    // separable synthetic cohort: 200 bags, positives carry 3 signal rows
    const int n_bags = 200, bag_size = 16, dim = 32, n_signal = 3;
    std::vector<PatchBag> bags(n_bags);
    for (int i = 0; i < n_bags; ++i) {
        std::mt19937_64 brng(1000 + i);
        std::normal_distribution<double> bd(0.0, 1.0);
        auto& b = bags[i];
        b.slide_id = "bag" + std::to_string(i);
        b.extractor_tag = "external";
        b.features.resize(bag_size, dim);
        const int signal = i % 2 == 1 ? n_signal : 0;
        for (int r = 0; r < bag_size; ++r) {
            const double shift = r < signal ? 2.0 : 0.0;
            for (int c = 0; c < dim; ++c) b.features(r, c) = float(bd(brng) + shift);
            b.coords.push_back({long(r) * 256, 0, 256, 1});
        }
    }
    std::vector<mil::MilExample> train, val, test;
    for (int i = 0; i < n_bags; ++i) {
        auto& dst = i < 160 ? train : (i < 180 ? val : test);
        dst.push_back({&bags[i], i % 2});
    }
    mil::MilHyper hyper;
    hyper.epochs = 10;
    hyper.early_stop_patience = 10;
    hyper.seed = 3;
    const auto result = mil::train_mil(train, val, hyper);

    int correct = 0, attn_ok = 0, pos_correct = 0;
    for (const auto& ex : test) {
        const auto o = mil::forward(result.model, *ex.bag);
        const int pred = o.probability_long >= 0.5f ? 1 : 0;
        if (pred == ex.label) ++correct;
        if (ex.label == 1 && pred == 1) {
            ++pos_correct;
            std::vector<float> sig, rest;
            for (int r = 0; r < bag_size; ++r)
                (r < n_signal ? sig : rest).push_back(o.attention[r]);
            std::nth_element(sig.begin(), sig.begin() + sig.size() / 2, sig.end());
            std::nth_element(rest.begin(), rest.begin() + rest.size() / 2, rest.end());
            if (sig[sig.size() / 2] > rest[rest.size() / 2]) ++attn_ok;
        }
    }
    REQUIRE_TRUE(double(correct) / double(test.size()) >= 0.95);
    REQUIRE_TRUE(pos_correct > 0);
    REQUIRE_TRUE(double(attn_ok) / double(pos_correct) >= 0.90);
}

// --- criterion 6 helpers ---------------------------------------------------

struct OracleNode {
    bool is_leaf = true;
    double leaf_weight = 0.0;
    int feature = -1;
    gbdt::SplitKind kind = gbdt::SplitKind::numeric;
    double threshold = 0.0;
    bool default_left = true;
    std::unique_ptr<OracleNode> left, right;
};

double oracle_gain(double gl, double hl, double gr, double hr, double lambda) {
    const double g = gl + gr, h = hl + hr;
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
}

// independent exhaustive best split over all features, midpoints /
// one-vs-rest codes, missing mass on both sides (ties keep it left,
// lower threshold then lower feature index win gain ties)
struct OracleSplit {
    int feature;
    gbdt::SplitKind kind;
    double threshold;
    bool default_left;
    double gain;  // gamma-adjusted
};

std::optional<OracleSplit> oracle_best_split(const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                                             const Eigen::MatrixXd& x,
                                             const std::vector<gbdt::FeatureKind>& kinds,
                                             const std::vector<int>& rows,
                                             const gbdt::GbdtHyper& hyper) {
    std::optional<OracleSplit> best;
    for (int f = 0; f < int(kinds.size()); ++f) {
        double gm = 0.0, hm = 0.0;
        std::vector<int> present;
        for (int r : rows) {
            if (std::isnan(x(r, f))) {
                gm += g[r];
                hm += h[r];
            } else {
                present.push_back(r);
            }
        }
        std::set<double> values;
        for (int r : present) values.insert(x(r, f));
        std::vector<double> thresholds;
        if (kinds[f] == gbdt::FeatureKind::numeric) {
            std::vector<double> v(values.begin(), values.end());
            for (std::size_t i = 0; i + 1 < v.size(); ++i)
                thresholds.push_back((v[i] + v[i + 1]) / 2.0);
        } else {
            thresholds.assign(values.begin(), values.end());
        }
        for (double thr : thresholds) {
            for (bool miss_left : {true, false}) {
                double gl = miss_left ? gm : 0.0, hl = miss_left ? hm : 0.0;
                double gr = miss_left ? 0.0 : gm, hr = miss_left ? 0.0 : hm;
                for (int r : present) {
                    const bool left = kinds[f] == gbdt::FeatureKind::numeric ? x(r, f) < thr
                                                                             : x(r, f) == thr;
                    (left ? gl : gr) += g[r];
                    (left ? hl : hr) += h[r];
                }
                if (hl < hyper.min_child_weight || hr < hyper.min_child_weight) continue;
                const double gain = oracle_gain(gl, hl, gr, hr, hyper.lambda) - hyper.gamma;
                if (!best || gain > best->gain) {
                    best = {f,
                            kinds[f] == gbdt::FeatureKind::numeric
                                ? gbdt::SplitKind::numeric
                                : gbdt::SplitKind::categorical,
                            thr, miss_left, gain};
                }
            }
        }
    }
    if (!best || best->gain <= 0.0) return std::nullopt;
    return best;
}

std::unique_ptr<OracleNode> oracle_grow(const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                                        const Eigen::MatrixXd& x,
                                        const std::vector<gbdt::FeatureKind>& kinds,
                                        const std::vector<int>& rows,
                                        const gbdt::GbdtHyper& hyper, int depth) {
    auto node = std::make_unique<OracleNode>();
    double G = 0.0, H = 0.0;
    for (int r : rows) {
        G += g[r];
        H += h[r];
    }
    std::optional<OracleSplit> split;
    if (depth < hyper.max_depth) split = oracle_best_split(g, h, x, kinds, rows, hyper);
    if (!split) {
        node->leaf_weight = -G / (H + hyper.lambda);
        return node;
    }
    node->is_leaf = false;
    node->feature = split->feature;
    node->kind = split->kind;
    node->threshold = split->threshold;
    node->default_left = split->default_left;
    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
        const double v = x(r, split->feature);
        bool left;
        if (std::isnan(v))
            left = split->default_left;
        else
            left = split->kind == gbdt::SplitKind::numeric ? v < split->threshold
                                                           : v == split->threshold;
        (left ? left_rows : right_rows).push_back(r);
    }
    node->left = oracle_grow(g, h, x, kinds, left_rows, hyper, depth + 1);
    node->right = oracle_grow(g, h, x, kinds, right_rows, hyper, depth + 1);
    return node;
}

void compare_tree(const gbdt::Tree& tree, int idx, const OracleNode& node) {
    const auto& n = tree.nodes[size_t(idx)];
    REQUIRE_TRUE(n.is_leaf == node.is_leaf);
    if (n.is_leaf) {
        REQUIRE_NEAR(n.leaf_weight, node.leaf_weight, 1e-9);
        return;
    }
    REQUIRE_TRUE(n.feature == node.feature);
    REQUIRE_TRUE(n.kind == node.kind);
    REQUIRE_TRUE(n.threshold == node.threshold);
    REQUIRE_TRUE(n.default_left == node.default_left);
    compare_tree(tree, n.left, *node.left);
    compare_tree(tree, n.right, *node.right);
}

void criterion_6_gbdt_oracle() {
    std::mt19937_64 rng(66);
    std::uniform_int_distribution<int> vals(0, 3);
    std::bernoulli_distribution missing(0.15);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 4 + int(rng() % 5);  // 4..8 rows
        const int nf = 1 + int(rng() % 3);  // 1..3 features
        Eigen::MatrixXd x(n, nf);
        std::vector<gbdt::FeatureKind> kinds;
        for (int f = 0; f < nf; ++f)
            kinds.push_back(f == 2 ? gbdt::FeatureKind::categorical
                                   : gbdt::FeatureKind::numeric);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < nf; ++f)
                x(i, f) = missing(rng) ? std::nan("") : double(vals(rng));
            labels[i] = int(rng() % 2);
        }
        labels[0] = 0;
        labels[1] = 1;

        gbdt::GbdtHyper hyper;
        hyper.max_depth = 2;
        hyper.subsample = 1.0;
        hyper.min_child_weight = 0.0;
        hyper.gamma = trial % 2 ? 0.1 : 0.0;
        hyper.n_rounds = 1;
        const auto res = gbdt::train_gbdt(x, kinds, labels, hyper);
        REQUIRE_TRUE(res.model.trees.size() == 1);

        // first-round statistics: p = base_score for every row
        Eigen::VectorXd g(n), h(n);
        for (int i = 0; i < n; ++i) {
            g[i] = hyper.base_score - labels[i];
            h[i] = hyper.base_score * (1.0 - hyper.base_score);
        }
        std::vector<int> rows(n);
        std::iota(rows.begin(), rows.end(), 0);
        const auto oracle = oracle_grow(g, h, x, kinds, rows, hyper, 0);
        compare_tree(res.model.trees[0], 0, *oracle);
    }

    // monotone training loss over 50 rounds with full subsampling
    std::normal_distribution<double> nd(0.0, 1.0);
    const int n = 40;
    Eigen::MatrixXd x(n, 3);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < 3; ++f) x(i, f) = nd(rng);
        labels[i] = x(i, 0) - 0.4 * x(i, 2) + 0.2 * nd(rng) > 0.0 ? 1 : 0;
    }
    gbdt::GbdtHyper hyper;
    hyper.subsample = 1.0;
    hyper.gamma = 0.0;
    hyper.min_child_weight = 0.0;
    hyper.n_rounds = 50;
    const auto res = gbdt::train_gbdt(
        x, {gbdt::FeatureKind::numeric, gbdt::FeatureKind::numeric, gbdt::FeatureKind::numeric},
        labels, hyper);
    REQUIRE_TRUE(res.history.size() >= 2);
    for (std::size_t i = 1; i < res.history.size(); ++i)
        REQUIRE_TRUE(res.history[i].train_loss <= res.history[i - 1].train_loss + 1e-9);
}

void criterion_7_hyperparameters() {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int n = 30;
    Eigen::MatrixXd x(n, 2);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = nd(rng);
        x(i, 1) = nd(rng);
        labels[i] = x(i, 0) > 0.0 ? 1 : 0;
    }
    gbdt::GbdtHyper hyper;  // defaults are the published values
    hyper.n_rounds = 5;
    const auto res = gbdt::train_gbdt(
        x, {gbdt::FeatureKind::numeric, gbdt::FeatureKind::numeric}, labels, hyper);
    const auto dir = fresh_dir("sf_acc_hyper");
    gbdt::dump_model_json(res.model, {"f0", "f1"}, dir / "model.json");
    std::ifstream in(dir / "model.json");
    nlohmann::json j;
    in >> j;
    REQUIRE_TRUE(j.at("hyper").at("eta") == 0.1);
    REQUIRE_TRUE(j.at("hyper").at("gamma") == 0.5);
    REQUIRE_TRUE(j.at("hyper").at("max_depth") == 6);
    REQUIRE_TRUE(j.at("hyper").at("subsample") == 0.6);
    REQUIRE_TRUE(j.at("hyper").at("min_child_weight") == 2);
    REQUIRE_TRUE(j.at("hyper").at("lambda") == 1);
}

void criterion_8_tree_shap() {
    using namespace slidefuse::shap;
    auto make_stump = [](int feature, double thr, double wl, double wr) {
        gbdt::Tree t;
        t.nodes.resize(3);
        t.nodes[0].is_leaf = false;
        t.nodes[0].feature = feature;
        t.nodes[0].threshold = thr;
        t.nodes[0].left = 1;
        t.nodes[0].right = 2;
        t.nodes[0].gain = 1.0;
        t.nodes[1].leaf_weight = wl;
        t.nodes[2].leaf_weight = wr;
        return t;
    };

    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 1.0);

    // trained depth-3 model on 6 features plus hand-built models
    const int n = 40, nf = 6;
    Eigen::MatrixXd x(n, nf);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < nf; ++f) x(i, f) = nd(rng);
        labels[i] = x(i, 0) + x(i, 1) * x(i, 2) > 0.0 ? 1 : 0;
    }
    gbdt::GbdtHyper hyper;
    hyper.max_depth = 3;
    hyper.subsample = 1.0;
    hyper.gamma = 0.1;
    hyper.min_child_weight = 0.0;
    hyper.n_rounds = 4;
    auto trained =
        gbdt::train_gbdt(x, std::vector<gbdt::FeatureKind>(nf, gbdt::FeatureKind::numeric),
                         labels, hyper)
            .model;

    gbdt::GbdtModel additive;
    additive.kinds.assign(3, gbdt::FeatureKind::numeric);
    additive.hyper.eta = 1.0;
    additive.trees.push_back(make_stump(0, 0.0, -1.0, 1.0));
    additive.trees.push_back(make_stump(1, 0.5, 2.0, -0.5));

    // training rows as background so every tree node keeps nonzero cover
    std::vector<Eigen::VectorXd> bg6, bg3;
    for (int i = 0; i < n; ++i) bg6.push_back(x.row(i).transpose());
    for (int i = 0; i < 12; ++i) {
        Eigen::VectorXd v3(3);
        for (int f = 0; f < 3; ++f) v3[f] = nd(rng);
        bg3.push_back(v3);
    }

    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd rec(nf);
        for (int f = 0; f < nf; ++f) rec[f] = nd(rng);
        const auto res = shap_values(trained, rec, bg6);
        REQUIRE_NEAR(res.base_value + res.phi.sum(), gbdt::predict_margin(trained, rec), 1e-6);
        const auto slow = brute_force_shapley(trained, rec, bg6);
        REQUIRE_TRUE((res.phi - slow).cwiseAbs().maxCoeff() < 1e-6);

        const auto inter = shap_interaction_values(trained, rec, bg6);
        REQUIRE_TRUE((inter - inter.transpose()).cwiseAbs().maxCoeff() < 1e-9);
        REQUIRE_TRUE((inter.rowwise().sum() - res.phi).cwiseAbs().maxCoeff() < 1e-6);
    }

    Eigen::VectorXd rec3(3);
    rec3 << 0.7, -0.4, 0.2;
    const auto res = shap_values(additive, rec3, bg3);
    REQUIRE_NEAR(res.base_value + res.phi.sum(), gbdt::predict_margin(additive, rec3), 1e-6);
    const auto inter = shap_interaction_values(additive, rec3, bg3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) REQUIRE_TRUE(std::abs(inter(i, j)) < 1e-6);
}

void criterion_9_auc_oracle() {
    REQUIRE_TRUE(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75);
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> score(0, 19);  // coarse grid forces ties
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 2 + int(rng() % 199);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = score(rng) / 20.0;
            y[i] = int(rng() % 2);
        }
        y[0] = 1;
        y[1] = 0;
        // brute-force pairwise counting in exact half-unit arithmetic
        long twice_wins = 0, n_pos = 0, n_neg = 0;
        for (int i = 0; i < n; ++i) {
            if (!y[i]) continue;
            for (int j = 0; j < n; ++j) {
                if (y[j]) continue;
                if (s[i] > s[j])
                    twice_wins += 2;
                else if (s[i] == s[j])
                    twice_wins += 1;
            }
        }
        for (int i = 0; i < n; ++i) (y[i] ? n_pos : n_neg)++;
        REQUIRE_TRUE(auc(s, y) == double(twice_wins) / (2.0 * double(n_pos) * double(n_neg)));
    }
}

void criterion_10_split_harness(const std::filesystem::path& fixture_dir) {
    const auto cohort = eval::load_cohort(fixture_dir / "cohort.csv");
    REQUIRE_TRUE(cohort.size() == 188);
    long shorts = 0, longs = 0;
    for (const auto& c : cohort) {
        REQUIRE_TRUE(c.label != eval::Label::Excluded);
        (c.label == eval::Label::Short ? shorts : longs)++;
    }
    REQUIRE_TRUE(shorts == 94 && longs == 94);

    std::set<std::string> long_ids, all;
    for (const auto& c : cohort) {
        all.insert(c.case_id);
        if (c.label == eval::Label::Long) long_ids.insert(c.case_id);
    }
    const auto folds = eval::monte_carlo_splits(cohort, 10, 7);
    REQUIRE_TRUE(folds.size() == 10);
    for (const auto& f : folds) {
        REQUIRE_TRUE(f.train.size() == 152);
        REQUIRE_TRUE(f.val.size() == 18);
        REQUIRE_TRUE(f.test.size() == 18);
        std::set<std::string> seen;
        for (const auto* part : {&f.train, &f.val, &f.test}) {
            long part_longs = 0;
            for (const auto& id : *part) {
                REQUIRE_TRUE(seen.insert(id).second);
                if (long_ids.count(id)) ++part_longs;
            }
            // balanced cohort: each partition within one case of half
            REQUIRE_TRUE(std::abs(2 * part_longs - long(part->size())) <= 1);
        }
        REQUIRE_TRUE(seen == all);
    }
    const auto again = eval::monte_carlo_splits(cohort, 10, 7);
    for (int f = 0; f < 10; ++f) {
        REQUIRE_TRUE(again[f].train == folds[f].train);
        REQUIRE_TRUE(again[f].val == folds[f].val);
        REQUIRE_TRUE(again[f].test == folds[f].test);
    }
}

void criterion_11_labels() {
    REQUIRE_TRUE(eval::assign_label(8.0, eval::VitalStatus::deceased) == eval::Label::Short);
    REQUIRE_TRUE(eval::assign_label(14.0, eval::VitalStatus::deceased) == eval::Label::Long);
    REQUIRE_TRUE(eval::assign_label(10.0, eval::VitalStatus::deceased) == eval::Label::Excluded);
}

void criterion_12_fusion(const std::filesystem::path& fixture_dir) {
    REQUIRE_TRUE(fuse(0.4, 0.6) == 0.5);
    for (double p : {0.0, 0.25, 0.7, 1.0}) REQUIRE_TRUE(fuse(p, p) == p);

    // clinical separates perfectly, imaging bags are pure noise
    eval::ExperimentConfig config;
    config.cohort_manifest = fixture_dir / "cohort.csv";
    config.bags_dir = fixture_dir / "bags";
    config.output_dir = fixture_dir / "out";
    config.seed = 7;
    config.mil_hyper.epochs = 3;
    config.mil_hyper.early_stop_patience = 3;
    const auto result = eval::run_experiment(config);
    const double imaging = result.imaging.mean().test_auc;
    const double fusion = result.fusion.mean().test_auc;
    REQUIRE_TRUE(fusion >= imaging);
}

void criterion_13_end_to_end(const std::filesystem::path& fixture_dir) {
    auto run_once = [&](const std::filesystem::path& out) {
        eval::ExperimentConfig config;
        config.cohort_manifest = fixture_dir / "cohort.csv";
        config.bags_dir = fixture_dir / "bags";
        config.output_dir = out;
        config.seed = 7;
        config.mil_hyper.epochs = 3;
        config.mil_hyper.early_stop_patience = 3;
        eval::run_experiment(config);
        eval::subgroup_run(config, "sex");  // writes table_subgroups.csv
    };
    const auto out1 = fresh_dir("sf_acc_e2e_run1");
    const auto out2 = fresh_dir("sf_acc_e2e_run2");
    run_once(out1);
    run_once(out2);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        REQUIRE_TRUE(in.good());
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    for (const char* name :
         {"table_imaging.csv", "table_clinical.csv", "table_fusion.csv", "table_subgroups.csv"}) {
        const auto a = slurp(out1 / name);
        REQUIRE_TRUE(!a.empty());
        // 10 fold rows + mean under the header
        if (std::string(name) != "table_subgroups.csv")
            REQUIRE_TRUE(std::count(a.begin(), a.end(), '\n') == 12);
        REQUIRE_TRUE(a == slurp(out2 / name));
    }
}

}  // namespace

int main() {
    // shared fixtures (no image bundle needed here)
    const auto fx_standard = fresh_dir("sf_acc_fixture_std");
    const auto fx_perfect = fresh_dir("sf_acc_fixture_perfect");
    {
        fixtures::FixtureOptions opt;
        opt.out_dir = fx_standard;
        opt.with_bundle = false;
        fixtures::make_fixtures(opt);
        opt.out_dir = fx_perfect;
        opt.clinical_perfect = true;
        fixtures::make_fixtures(opt);
    }

    struct Criterion {
        const char* name;
        std::function<void()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"curation boundary thresholds", criterion_1_curation_boundaries},
        {"stain deconvolution round trip", criterion_2_stain_round_trip},
        {"tissue segmentation disc oracle", criterion_3_segmentation_oracle},
        {"MIL gradient check", criterion_4_mil_gradient_check},
        {"MIL attention invariants and separable cohort", criterion_5_mil_attention},
        {"GBDT exhaustive-tree oracle", criterion_6_gbdt_oracle},
        {"published GBDT hyperparameters in model dump", criterion_7_hyperparameters},
        {"TreeSHAP local accuracy, oracle equality, interactions", criterion_8_tree_shap},
        {"AUC pairwise-counting oracle", criterion_9_auc_oracle},
        {"188-case split harness", [&] { criterion_10_split_harness(fx_standard); }},
        {"survival labeling boundaries", criterion_11_labels},
        {"fusion identities and directional sanity", [&] { criterion_12_fusion(fx_perfect); }},
        {"end-to-end report determinism", [&] { criterion_13_end_to_end(fx_standard); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string verdict = "PASS";
        std::string detail;
        try {
            criteria[i].fn();
        } catch (const std::exception& e) {
            verdict = "FAIL";
            detail = e.what();
            ++failures;
        }
        std::cout << "criterion " << (i + 1) << " [" << verdict << "] " << criteria[i].name;
        if (!detail.empty()) std::cout << " -- " << detail;
        std::cout << std::endl;
    }
    return failures;
}
