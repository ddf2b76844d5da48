#pragma once

#include <Eigen/Dense>
#include <vector>

#include "slidefuse/gbdt.hpp"

namespace slidefuse::shap {

enum class Conditioning { path_dependent, interventional };

struct ShapResult {
    Eigen::VectorXd phi;  // per-feature attribution in margin (log-odds) space
    double base_value;    // mean margin over the background set
};

// Exact path-dependent TreeSHAP. Per-tree conditional expectations use
// cover statistics recomputed from the background set, so base_value
// plus the attributions reproduces the record's margin.
ShapResult shap_values(const gbdt::GbdtModel& model, const Eigen::VectorXd& record,
                       const std::vector<Eigen::VectorXd>& background);

// SHAP interaction values: off-diagonal entries from conditioned
// TreeSHAP runs, diagonal as the main effect remainder. Symmetric; row
// sums equal shap_values' phi.
Eigen::MatrixXd shap_interaction_values(const gbdt::GbdtModel& model,
                                        const Eigen::VectorXd& record,
                                        const std::vector<Eigen::VectorXd>& background);

// Exponential-time oracle: exact Shapley formula over all feature
// subsets. "Feature absent" means path-dependent cover-weighted
// averaging or interventional marginalization over the background,
// depending on the mode.
Eigen::VectorXd brute_force_shapley(const gbdt::GbdtModel& model, const Eigen::VectorXd& record,
                                    const std::vector<Eigen::VectorXd>& background,
                                    Conditioning mode = Conditioning::path_dependent);

// Brute-force Shapley interaction index under the same conventions.
Eigen::MatrixXd brute_force_interactions(const gbdt::GbdtModel& model,
                                         const Eigen::VectorXd& record,
                                         const std::vector<Eigen::VectorXd>& background,
                                         Conditioning mode = Conditioning::path_dependent);

}  // namespace slidefuse::shap
