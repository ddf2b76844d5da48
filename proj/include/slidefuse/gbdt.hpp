#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "slidefuse/errors.hpp"

namespace slidefuse::gbdt {

enum class FeatureKind { numeric, categorical };

struct GbdtHyper {
    double eta = 0.1;
    double gamma = 0.5;
    int max_depth = 6;
    double subsample = 0.6;
    double min_child_weight = 2.0;
    double lambda = 1.0;
    int n_rounds = 100;
    int early_stop_patience = 10;
    double base_score = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (eta <= 0.0 || eta > 1.0) throw ArgumentError("GbdtHyper: eta must be in (0,1]");
        if (subsample <= 0.0 || subsample > 1.0)
            throw ArgumentError("GbdtHyper: subsample must be in (0,1]");
        if (lambda < 0.0) throw ArgumentError("GbdtHyper: lambda must be >= 0");
        if (gamma < 0.0) throw ArgumentError("GbdtHyper: gamma must be >= 0");
        if (base_score <= 0.0 || base_score >= 1.0)
            throw ArgumentError("GbdtHyper: base_score must be in (0,1)");
    }
};

enum class SplitKind { numeric, categorical };

struct Node {
    bool is_leaf = true;
    double leaf_weight = 0.0;  // unscaled -G/(H+lambda); eta applied at prediction
    int feature = -1;
    SplitKind kind = SplitKind::numeric;
    // numeric: x < threshold goes left; categorical: x == threshold goes left
    double threshold = 0.0;
    bool default_left = true;  // routing for missing values
    int left = -1;
    int right = -1;
    double gain = 0.0;    // pre-pruning gain (gamma not subtracted)
    double sum_g = 0.0;
    double sum_h = 0.0;
    double cover = 0.0;   // training rows reaching this node
};

struct Tree {
    std::vector<Node> nodes;  // node 0 is the root
};

struct GbdtModel {
    std::vector<Tree> trees;
    std::vector<FeatureKind> kinds;
    GbdtHyper hyper;

    double base_margin() const {
        return std::log(hyper.base_score / (1.0 - hyper.base_score));
    }
};

struct SplitInfo {
    int feature = -1;
    SplitKind kind = SplitKind::numeric;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;      // after subtracting gamma
    double gain_pre = 0.0;  // before subtracting gamma
    double g_left = 0.0, h_left = 0.0, g_right = 0.0, h_right = 0.0;
};

// Second-order split gain, maximized over midpoints of sorted distinct
// values (numeric) or one-vs-rest equality (categorical). Missing rows
// are tried on both sides and the better side becomes the default.
// Returns nullopt when the best gamma-adjusted gain is <= 0 or no
// candidate satisfies min_child_weight on both children. Ties prefer
// the lower threshold / category code.
std::optional<SplitInfo> best_split_feature(const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                                            const Eigen::VectorXd& column, FeatureKind kind,
                                            const std::vector<int>& rows,
                                            const GbdtHyper& hyper, int feature_index);

// Best split across all features; ties prefer the lower feature index.
std::optional<SplitInfo> best_split(const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                                    const Eigen::MatrixXd& x,
                                    const std::vector<FeatureKind>& kinds,
                                    const std::vector<int>& rows, const GbdtHyper& hyper);

struct GbdtRound {
    int round;
    double train_loss;
    double eval_auc;  // NaN when no eval set was given
};

struct GbdtTrainResult {
    GbdtModel model;
    std::vector<GbdtRound> history;
    int best_round = -1;
};

// Binary logistic boosting: g = p - y, h = p(1-p), seeded Bernoulli row
// subsampling per round, greedy depth-first tree growth, early stopping
// on eval AUC when an eval set is supplied.
GbdtTrainResult train_gbdt(const Eigen::MatrixXd& x, const std::vector<FeatureKind>& kinds,
                           const std::vector<int>& labels, const GbdtHyper& hyper,
                           const Eigen::MatrixXd* eval_x = nullptr,
                           const std::vector<int>* eval_labels = nullptr);

double predict_margin(const GbdtModel& model, const Eigen::VectorXd& row);
double predict_prob(const GbdtModel& model, const Eigen::VectorXd& row);

// Leaf index the row lands in for one tree.
int route_to_leaf(const Tree& tree, const Eigen::VectorXd& row);

// Pre-pruning gain summed per feature, descending; ties by feature index.
std::vector<std::pair<int, double>> feature_gain_importance(const GbdtModel& model);

// Full textual tree dump (JSON) including the hyperparameters used.
void dump_model_json(const GbdtModel& model, const std::vector<std::string>& feature_names,
                     const std::filesystem::path& path);
GbdtModel load_model_json(const std::filesystem::path& path);

}  // namespace slidefuse::gbdt
