#include "slidefuse/tree_shap.hpp"

#include <bit>
#include <cmath>

namespace slidefuse::shap {

namespace {

using gbdt::GbdtModel;
using gbdt::Node;
using gbdt::SplitKind;
using gbdt::Tree;

bool goes_left(const Node& node, double v) {
    if (std::isnan(v)) return node.default_left;
    if (node.kind == SplitKind::numeric) return v < node.threshold;
    return v == node.threshold;
}

// Background rows reaching each node of one tree.
std::vector<double> background_cover(const Tree& tree,
                                     const std::vector<Eigen::VectorXd>& background) {
    std::vector<double> cover(tree.nodes.size(), 0.0);
    for (const auto& row : background) {
        int i = 0;
        cover[0] += 1.0;
        while (!tree.nodes[i].is_leaf) {
            i = goes_left(tree.nodes[i], row[tree.nodes[i].feature]) ? tree.nodes[i].left
                                                                     : tree.nodes[i].right;
            cover[i] += 1.0;
        }
    }
    return cover;
}

struct PathElement {
    int feature_index;
    double zero_fraction;
    double one_fraction;
    double pweight;
};

void extend_path(PathElement* unique_path, int unique_depth, double zero_fraction,
                 double one_fraction, int feature_index) {
    unique_path[unique_depth] = {feature_index, zero_fraction, one_fraction,
                                 unique_depth == 0 ? 1.0 : 0.0};
    for (int i = unique_depth - 1; i >= 0; --i) {
        unique_path[i + 1].pweight +=
            one_fraction * unique_path[i].pweight * (i + 1) / double(unique_depth + 1);
        unique_path[i].pweight =
            zero_fraction * unique_path[i].pweight * (unique_depth - i) / double(unique_depth + 1);
    }
}

void unwind_path(PathElement* unique_path, int unique_depth, int path_index) {
    const double one_fraction = unique_path[path_index].one_fraction;
    const double zero_fraction = unique_path[path_index].zero_fraction;
    double next_one_portion = unique_path[unique_depth].pweight;
    for (int i = unique_depth - 1; i >= 0; --i) {
        if (one_fraction != 0.0) {
            const double tmp = unique_path[i].pweight;
            unique_path[i].pweight =
                next_one_portion * (unique_depth + 1) / double((i + 1) * one_fraction);
            next_one_portion = tmp - unique_path[i].pweight * zero_fraction *
                                         (unique_depth - i) / double(unique_depth + 1);
        } else {
            unique_path[i].pweight = (unique_path[i].pweight * (unique_depth + 1)) /
                                     (zero_fraction * (unique_depth - i));
        }
    }
    for (int i = path_index; i < unique_depth; ++i) {
        unique_path[i].feature_index = unique_path[i + 1].feature_index;
        unique_path[i].zero_fraction = unique_path[i + 1].zero_fraction;
        unique_path[i].one_fraction = unique_path[i + 1].one_fraction;
    }
}

double unwound_path_sum(const PathElement* unique_path, int unique_depth, int path_index) {
    const double one_fraction = unique_path[path_index].one_fraction;
    const double zero_fraction = unique_path[path_index].zero_fraction;
    double next_one_portion = unique_path[unique_depth].pweight;
    double total = 0.0;
    if (one_fraction != 0.0) {
        for (int i = unique_depth - 1; i >= 0; --i) {
            const double tmp = next_one_portion / double((i + 1) * one_fraction);
            total += tmp;
            next_one_portion = unique_path[i].pweight - tmp * zero_fraction * (unique_depth - i);
        }
    } else {
        for (int i = unique_depth - 1; i >= 0; --i)
            total += unique_path[i].pweight / (zero_fraction * (unique_depth - i));
    }
    return total * (unique_depth + 1);
}

// Lundberg's recursive path algorithm; condition = +1/-1 restricts the
// traversal to the world where condition_feature is known present/absent
// (used for interaction values), 0 is the plain run.
void tree_shap_recursive(const Tree& tree, const std::vector<double>& cover, double leaf_scale,
                         const Eigen::VectorXd& x, Eigen::VectorXd& phi, int node_index,
                         int unique_depth, PathElement* parent_unique_path,
                         double parent_zero_fraction, double parent_one_fraction,
                         int parent_feature_index, int condition, int condition_feature,
                         double condition_fraction) {
    if (condition_fraction == 0.0) return;
    const Node& node = tree.nodes[node_index];

    PathElement* unique_path = parent_unique_path + unique_depth + 1;
    std::copy(parent_unique_path, parent_unique_path + unique_depth + 1, unique_path);
    if (condition == 0 || condition_feature != parent_feature_index)
        extend_path(unique_path, unique_depth, parent_zero_fraction, parent_one_fraction,
                    parent_feature_index);

    if (node.is_leaf) {
        for (int i = 1; i <= unique_depth; ++i) {
            const double w = unwound_path_sum(unique_path, unique_depth, i);
            const PathElement& el = unique_path[i];
            phi[el.feature_index] += w * (el.one_fraction - el.zero_fraction) *
                                     leaf_scale * node.leaf_weight * condition_fraction;
        }
        return;
    }

    const int split_index = node.feature;
    const int hot_index = goes_left(node, x[split_index]) ? node.left : node.right;
    const int cold_index = hot_index == node.left ? node.right : node.left;
    const double w = cover[node_index];
    const double hot_zero_fraction = cover[hot_index] / w;
    const double cold_zero_fraction = cover[cold_index] / w;
    double incoming_zero_fraction = 1.0;
    double incoming_one_fraction = 1.0;

    // undo any earlier split on the same feature so it can be redone here
    int path_index = 0;
    for (; path_index <= unique_depth; ++path_index)
        if (unique_path[path_index].feature_index == split_index) break;
    if (path_index != unique_depth + 1) {
        incoming_zero_fraction = unique_path[path_index].zero_fraction;
        incoming_one_fraction = unique_path[path_index].one_fraction;
        unwind_path(unique_path, unique_depth, path_index);
        unique_depth -= 1;
    }

    double hot_condition_fraction = condition_fraction;
    double cold_condition_fraction = condition_fraction;
    if (condition > 0 && split_index == condition_feature) {
        cold_condition_fraction = 0.0;
        unique_depth -= 1;
    } else if (condition < 0 && split_index == condition_feature) {
        hot_condition_fraction *= hot_zero_fraction;
        cold_condition_fraction *= cold_zero_fraction;
        unique_depth -= 1;
    }

    tree_shap_recursive(tree, cover, leaf_scale, x, phi, hot_index, unique_depth + 1, unique_path,
                        hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction,
                        split_index, condition, condition_feature, hot_condition_fraction);
    tree_shap_recursive(tree, cover, leaf_scale, x, phi, cold_index, unique_depth + 1, unique_path,
                        cold_zero_fraction * incoming_zero_fraction, 0.0, split_index, condition,
                        condition_feature, cold_condition_fraction);
}

int tree_depth(const Tree& tree, int node, int depth) {
    if (tree.nodes[node].is_leaf) return depth;
    return std::max(tree_depth(tree, tree.nodes[node].left, depth + 1),
                    tree_depth(tree, tree.nodes[node].right, depth + 1));
}

void tree_shap(const Tree& tree, const std::vector<double>& cover, double leaf_scale,
               const Eigen::VectorXd& x, Eigen::VectorXd& phi, int condition,
               int condition_feature) {
    const int d = tree_depth(tree, 0, 0) + 2;
    std::vector<PathElement> buffer(static_cast<std::size_t>(d) * (d + 1));
    tree_shap_recursive(tree, cover, leaf_scale, x, phi, 0, 0, buffer.data(), 1.0, 1.0, -1,
                        condition, condition_feature, 1.0);
}

void check_inputs(const GbdtModel& model, const Eigen::VectorXd& record,
                  const std::vector<Eigen::VectorXd>& background) {
    const auto nf = static_cast<Eigen::Index>(model.kinds.size());
    if (record.size() != nf) throw ArgumentError("shap: record feature count mismatch");
    if (background.empty()) throw ArgumentError("shap: background set must be non-empty");
    for (const auto& b : background)
        if (b.size() != nf) throw ArgumentError("shap: background feature count mismatch");
}

}  // namespace

ShapResult shap_values(const GbdtModel& model, const Eigen::VectorXd& record,
                       const std::vector<Eigen::VectorXd>& background) {
    check_inputs(model, record, background);
    ShapResult out;
    out.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.kinds.size()));
    double base = model.base_margin() * background.size();
    for (const auto& b : background) base += predict_margin(model, b) - model.base_margin();
    out.base_value = base / double(background.size());
    for (const auto& tree : model.trees) {
        const auto cover = background_cover(tree, background);
        tree_shap(tree, cover, model.hyper.eta, record, out.phi, 0, -1);
    }
    return out;
}

Eigen::MatrixXd shap_interaction_values(const GbdtModel& model, const Eigen::VectorXd& record,
                                        const std::vector<Eigen::VectorXd>& background) {
    check_inputs(model, record, background);
    const int nf = static_cast<int>(model.kinds.size());
    Eigen::MatrixXd inter = Eigen::MatrixXd::Zero(nf, nf);
    const Eigen::VectorXd phi = shap_values(model, record, background).phi;

    std::vector<bool> used(nf, false);
    for (const auto& t : model.trees)
        for (const auto& nd : t.nodes)
            if (!nd.is_leaf) used[nd.feature] = true;

    std::vector<std::pair<const Tree*, std::vector<double>>> covers;
    for (const auto& tree : model.trees)
        covers.push_back({&tree, background_cover(tree, background)});

    for (int j = 0; j < nf; ++j) {
        if (!used[j]) continue;
        Eigen::VectorXd on = Eigen::VectorXd::Zero(nf);
        Eigen::VectorXd off = Eigen::VectorXd::Zero(nf);
        for (const auto& [tree, cover] : covers) {
            tree_shap(*tree, cover, model.hyper.eta, record, on, +1, j);
            tree_shap(*tree, cover, model.hyper.eta, record, off, -1, j);
        }
        for (int i = 0; i < nf; ++i)
            if (i != j) inter(i, j) = (on[i] - off[i]) / 2.0;
    }
    for (int i = 0; i < nf; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < nf; ++j)
            if (j != i) row_sum += inter(i, j);
        inter(i, i) = phi[i] - row_sum;
    }
    return inter;
}

namespace {

// Conditional expectation of the model margin given the feature subset
// `mask` is fixed at the record's values.
double subset_value(const GbdtModel& model, const Eigen::VectorXd& x,
                    const std::vector<Eigen::VectorXd>& background,
                    const std::vector<std::vector<double>>& covers, std::uint32_t mask,
                    Conditioning mode) {
    if (mode == Conditioning::interventional) {
        double acc = 0.0;
        for (const auto& b : background) {
            Eigen::VectorXd z = b;
            for (int f = 0; f < x.size(); ++f)
                if (mask & (1u << f)) z[f] = x[f];
            acc += predict_margin(model, z);
        }
        return acc / double(background.size());
    }
    double total = model.base_margin();
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const Tree& tree = model.trees[t];
        const auto& cover = covers[t];
        // recursive cover-weighted expectation
        auto expvalue = [&](auto&& self, int node) -> double {
            const Node& nd = tree.nodes[node];
            if (nd.is_leaf) return nd.leaf_weight;
            if (mask & (1u << nd.feature))
                return self(self, goes_left(nd, x[nd.feature]) ? nd.left : nd.right);
            const double wl = cover[nd.left], wr = cover[nd.right];
            if (wl + wr == 0.0) return 0.0;
            return (wl * self(self, nd.left) + wr * self(self, nd.right)) / (wl + wr);
        };
        total += model.hyper.eta * expvalue(expvalue, 0);
    }
    return total;
}

std::vector<double> subset_table(const GbdtModel& model, const Eigen::VectorXd& x,
                                 const std::vector<Eigen::VectorXd>& background,
                                 Conditioning mode) {
    const int nf = static_cast<int>(model.kinds.size());
    if (nf > 20) throw ArgumentError("brute_force_shapley: too many features");
    std::vector<std::vector<double>> covers;
    for (const auto& tree : model.trees) covers.push_back(background_cover(tree, background));
    std::vector<double> v(1u << nf);
    for (std::uint32_t mask = 0; mask < v.size(); ++mask)
        v[mask] = subset_value(model, x, background, covers, mask, mode);
    return v;
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

}  // namespace

Eigen::VectorXd brute_force_shapley(const GbdtModel& model, const Eigen::VectorXd& record,
                                    const std::vector<Eigen::VectorXd>& background,
                                    Conditioning mode) {
    check_inputs(model, record, background);
    const int nf = static_cast<int>(model.kinds.size());
    const auto v = subset_table(model, record, background, mode);
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(nf);
    const double mfact = factorial(nf);
    for (int i = 0; i < nf; ++i) {
        for (std::uint32_t mask = 0; mask < v.size(); ++mask) {
            if (mask & (1u << i)) continue;
            const int s = std::popcount(mask);
            const double weight = factorial(s) * factorial(nf - s - 1) / mfact;
            phi[i] += weight * (v[mask | (1u << i)] - v[mask]);
        }
    }
    return phi;
}

Eigen::MatrixXd brute_force_interactions(const GbdtModel& model, const Eigen::VectorXd& record,
                                         const std::vector<Eigen::VectorXd>& background,
                                         Conditioning mode) {
    check_inputs(model, record, background);
    const int nf = static_cast<int>(model.kinds.size());
    const auto v = subset_table(model, record, background, mode);
    Eigen::MatrixXd inter = Eigen::MatrixXd::Zero(nf, nf);
    for (int i = 0; i < nf; ++i)
        for (int j = i + 1; j < nf; ++j) {
            double acc = 0.0;
            for (std::uint32_t mask = 0; mask < v.size(); ++mask) {
                if (mask & (1u << i)) continue;
                if (mask & (1u << j)) continue;
                const int s = std::popcount(mask);
                const double weight =
                    factorial(s) * factorial(nf - s - 2) / (2.0 * factorial(nf - 1));
                acc += weight * (v[mask | (1u << i) | (1u << j)] - v[mask | (1u << i)] -
                                 v[mask | (1u << j)] + v[mask]);
            }
            inter(i, j) = acc;
            inter(j, i) = acc;
        }
    const Eigen::VectorXd phi = brute_force_shapley(model, record, background, mode);
    for (int i = 0; i < nf; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < nf; ++j)
            if (j != i) row_sum += inter(i, j);
        inter(i, i) = phi[i] - row_sum;
    }
    return inter;
}

}  // namespace slidefuse::shap
