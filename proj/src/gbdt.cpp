#include "slidefuse/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "slidefuse/metrics.hpp"

namespace slidefuse::gbdt {

namespace {

double split_gain(double gl, double hl, double gr, double hr, double lambda) {
    const double g = gl + gr, h = hl + hr;
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
}

struct Candidate {
    double gain_pre;
    bool default_left;
    double gl, hl, gr, hr;
    bool valid = false;
};

// Evaluates one partition of the present rows; missing mass goes to the
// better side (ties keep it left).
Candidate eval_partition(double gl_present, double hl_present, double gr_present,
                         double hr_present, double g_miss, double h_miss,
                         const GbdtHyper& hyper) {
    Candidate best;
    for (int miss_left = 1; miss_left >= 0; --miss_left) {
        const double gl = gl_present + (miss_left ? g_miss : 0.0);
        const double hl = hl_present + (miss_left ? h_miss : 0.0);
        const double gr = gr_present + (miss_left ? 0.0 : g_miss);
        const double hr = hr_present + (miss_left ? 0.0 : h_miss);
        if (hl < hyper.min_child_weight || hr < hyper.min_child_weight) continue;
        const double gain = split_gain(gl, hl, gr, hr, hyper.lambda);
        if (!best.valid || gain > best.gain_pre) {
            best = {gain, miss_left == 1, gl, hl, gr, hr, true};
        }
    }
    return best;
}

}  // namespace

std::optional<SplitInfo> best_split_feature(const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                                            const Eigen::VectorXd& column, FeatureKind kind,
                                            const std::vector<int>& rows,
                                            const GbdtHyper& hyper, int feature_index) {
    for (int r : rows)
        if (h[r] < 0.0) throw ArgumentError("best_split: negative hessian");

    double g_miss = 0.0, h_miss = 0.0;
    std::vector<int> present;
    present.reserve(rows.size());
    for (int r : rows) {
        if (std::isnan(column[r])) {
            g_miss += g[r];
            h_miss += h[r];
        } else {
            present.push_back(r);
        }
    }
    if (present.empty()) return std::nullopt;

    SplitInfo best;
    bool have = false;
    auto consider = [&](const Candidate& c, double threshold) {
        if (!c.valid) return;
        // strict improvement keeps the lowest-threshold winner on ties
        if (!have || c.gain_pre > best.gain_pre) {
            best.feature = feature_index;
            best.kind = kind == FeatureKind::numeric ? SplitKind::numeric : SplitKind::categorical;
            best.threshold = threshold;
            best.default_left = c.default_left;
            best.gain_pre = c.gain_pre;
            best.gain = c.gain_pre - hyper.gamma;
            best.g_left = c.gl;
            best.h_left = c.hl;
            best.g_right = c.gr;
            best.h_right = c.hr;
            have = true;
        }
    };

    if (kind == FeatureKind::numeric) {
        std::sort(present.begin(), present.end(),
                  [&](int a, int b) { return column[a] < column[b]; });
        double gl = 0.0, hl = 0.0;
        double g_tot = 0.0, h_tot = 0.0;
        for (int r : present) {
            g_tot += g[r];
            h_tot += h[r];
        }
        for (std::size_t i = 0; i + 1 < present.size(); ++i) {
            gl += g[present[i]];
            hl += h[present[i]];
            const double v0 = column[present[i]], v1 = column[present[i + 1]];
            if (v0 == v1) continue;
            consider(eval_partition(gl, hl, g_tot - gl, h_tot - hl, g_miss, h_miss, hyper),
                     (v0 + v1) / 2.0);
        }
    } else {
        std::set<double> codes;
        for (int r : present) codes.insert(column[r]);
        if (codes.size() < 2 && g_miss == 0.0 && h_miss == 0.0) return std::nullopt;
        for (double code : codes) {  // one-vs-rest, ascending code order
            double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
            for (int r : present) {
                if (column[r] == code) {
                    gl += g[r];
                    hl += h[r];
                } else {
                    gr += g[r];
                    hr += h[r];
                }
            }
            consider(eval_partition(gl, hl, gr, hr, g_miss, h_miss, hyper), code);
        }
    }
    if (!have || best.gain <= 0.0) return std::nullopt;
    return best;
}

std::optional<SplitInfo> best_split(const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                                    const Eigen::MatrixXd& x,
                                    const std::vector<FeatureKind>& kinds,
                                    const std::vector<int>& rows, const GbdtHyper& hyper) {
    std::optional<SplitInfo> best;
    for (int f = 0; f < static_cast<int>(kinds.size()); ++f) {
        auto cand = best_split_feature(g, h, x.col(f), kinds[f], rows, hyper, f);
        if (!cand) continue;
        // lower feature index wins ties
        if (!best || cand->gain_pre > best->gain_pre) best = cand;
    }
    return best;
}

namespace {

bool goes_left(const Node& node, double v) {
    if (std::isnan(v)) return node.default_left;
    if (node.kind == SplitKind::numeric) return v < node.threshold;
    return v == node.threshold;
}

void grow(Tree& tree, int node_idx, int depth, const Eigen::VectorXd& g,
          const Eigen::VectorXd& h, const Eigen::MatrixXd& x,
          const std::vector<FeatureKind>& kinds, const std::vector<int>& rows,
          const GbdtHyper& hyper) {
    Node& node = tree.nodes[node_idx];
    node.sum_g = 0.0;
    node.sum_h = 0.0;
    for (int r : rows) {
        node.sum_g += g[r];
        node.sum_h += h[r];
    }
    node.cover = static_cast<double>(rows.size());
    node.leaf_weight = -node.sum_g / (node.sum_h + hyper.lambda);
    if (depth >= hyper.max_depth) return;

    auto split = best_split(g, h, x, kinds, rows, hyper);
    if (!split) return;

    std::vector<int> left_rows, right_rows;
    Node probe;
    probe.kind = split->kind;
    probe.threshold = split->threshold;
    probe.default_left = split->default_left;
    for (int r : rows)
        (goes_left(probe, x(r, split->feature)) ? left_rows : right_rows).push_back(r);
    if (left_rows.empty() || right_rows.empty()) return;

    node.is_leaf = false;
    node.feature = split->feature;
    node.kind = split->kind;
    node.threshold = split->threshold;
    node.default_left = split->default_left;
    node.gain = split->gain_pre;
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int ri = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node_idx].left = li;
    tree.nodes[node_idx].right = ri;
    grow(tree, li, depth + 1, g, h, x, kinds, left_rows, hyper);
    grow(tree, ri, depth + 1, g, h, x, kinds, right_rows, hyper);
}

double tree_value(const Tree& tree, const Eigen::VectorXd& row) {
    int i = 0;
    while (!tree.nodes[i].is_leaf)
        i = goes_left(tree.nodes[i], row[tree.nodes[i].feature]) ? tree.nodes[i].left
                                                                 : tree.nodes[i].right;
    return tree.nodes[i].leaf_weight;
}

}  // namespace

int route_to_leaf(const Tree& tree, const Eigen::VectorXd& row) {
    int i = 0;
    while (!tree.nodes[i].is_leaf)
        i = goes_left(tree.nodes[i], row[tree.nodes[i].feature]) ? tree.nodes[i].left
                                                                 : tree.nodes[i].right;
    return i;
}

GbdtTrainResult train_gbdt(const Eigen::MatrixXd& x, const std::vector<FeatureKind>& kinds,
                           const std::vector<int>& labels, const GbdtHyper& hyper,
                           const Eigen::MatrixXd* eval_x, const std::vector<int>* eval_labels) {
    hyper.validate();
    const int n = static_cast<int>(x.rows());
    if (n < 2 || static_cast<std::size_t>(n) != labels.size())
        throw ArgumentError("train_gbdt: need >= 2 aligned rows");
    if (static_cast<std::size_t>(x.cols()) != kinds.size())
        throw ArgumentError("train_gbdt: kinds/columns mismatch");
    const long n_pos = std::count(labels.begin(), labels.end(), 1);
    if (n_pos == 0 || n_pos == n) throw ArgumentError("train_gbdt: both classes required");

    GbdtTrainResult result;
    result.model.kinds = kinds;
    result.model.hyper = hyper;
    const double base = result.model.base_margin();

    Eigen::VectorXd margin = Eigen::VectorXd::Constant(n, base);
    Eigen::VectorXd eval_margin;
    if (eval_x) eval_margin = Eigen::VectorXd::Constant(eval_x->rows(), base);

    double best_eval = -1.0;
    int since_best = 0;
    for (int round = 0; round < hyper.n_rounds; ++round) {
        Eigen::VectorXd g(n), h(n);
        for (int i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-margin[i]));
            g[i] = p - labels[i];
            h[i] = p * (1.0 - p);
        }

        std::vector<int> rows;
        if (hyper.subsample >= 1.0) {
            rows.resize(n);
            std::iota(rows.begin(), rows.end(), 0);
        } else {
            std::mt19937_64 rng(hyper.seed + static_cast<std::uint64_t>(round));
            std::bernoulli_distribution pick(hyper.subsample);
            for (int i = 0; i < n; ++i)
                if (pick(rng)) rows.push_back(i);
            if (rows.empty()) rows.push_back(static_cast<int>(rng() % n));
        }

        Tree tree;
        tree.nodes.emplace_back();
        grow(tree, 0, 0, g, h, x, kinds, rows, hyper);
        for (int i = 0; i < n; ++i) margin[i] += hyper.eta * tree_value(tree, x.row(i));
        result.model.trees.push_back(std::move(tree));

        auto softplus = [](double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); };
        double train_loss = 0.0;
        for (int i = 0; i < n; ++i)
            train_loss += softplus(labels[i] ? -margin[i] : margin[i]);
        train_loss /= n;

        double eval_auc_val = std::numeric_limits<double>::quiet_NaN();
        if (eval_x && eval_labels) {
            const auto& t = result.model.trees.back();
            for (Eigen::Index i = 0; i < eval_x->rows(); ++i)
                eval_margin[i] += hyper.eta * tree_value(t, eval_x->row(i));
            std::vector<double> scores(eval_margin.data(), eval_margin.data() + eval_margin.size());
            eval_auc_val = auc(scores, *eval_labels);
            if (eval_auc_val > best_eval) {
                best_eval = eval_auc_val;
                result.best_round = round;
                since_best = 0;
            } else if (++since_best >= hyper.early_stop_patience) {
                result.history.push_back({round, train_loss, eval_auc_val});
                break;
            }
        } else {
            result.best_round = round;
        }
        result.history.push_back({round, train_loss, eval_auc_val});
    }
    if (eval_x && result.best_round >= 0)
        result.model.trees.resize(static_cast<std::size_t>(result.best_round) + 1);
    return result;
}

double predict_margin(const GbdtModel& model, const Eigen::VectorXd& row) {
    double m = model.base_margin();
    for (const auto& t : model.trees) m += model.hyper.eta * tree_value(t, row);
    return m;
}

double predict_prob(const GbdtModel& model, const Eigen::VectorXd& row) {
    return 1.0 / (1.0 + std::exp(-predict_margin(model, row)));
}

std::vector<std::pair<int, double>> feature_gain_importance(const GbdtModel& model) {
    std::vector<double> totals(model.kinds.size(), 0.0);
    for (const auto& t : model.trees)
        for (const auto& nd : t.nodes)
            if (!nd.is_leaf) totals[nd.feature] += nd.gain;
    std::vector<std::pair<int, double>> out;
    for (int f = 0; f < static_cast<int>(totals.size()); ++f)
        if (totals[f] > 0.0) out.push_back({f, totals[f]});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
}

void dump_model_json(const GbdtModel& model, const std::vector<std::string>& feature_names,
                     const std::filesystem::path& path) {
    nlohmann::json j;
    j["hyper"] = {{"eta", model.hyper.eta},
                  {"gamma", model.hyper.gamma},
                  {"max_depth", model.hyper.max_depth},
                  {"subsample", model.hyper.subsample},
                  {"min_child_weight", model.hyper.min_child_weight},
                  {"lambda", model.hyper.lambda},
                  {"n_rounds", model.hyper.n_rounds},
                  {"early_stop_patience", model.hyper.early_stop_patience},
                  {"base_score", model.hyper.base_score},
                  {"seed", model.hyper.seed}};
    j["feature_names"] = feature_names;
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : model.kinds)
        kinds.push_back(k == FeatureKind::numeric ? "numeric" : "categorical");
    j["feature_kinds"] = kinds;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& nd : t.nodes) {
            nlohmann::json n;
            if (nd.is_leaf) {
                n = {{"leaf", nd.leaf_weight}, {"cover", nd.cover}};
            } else {
                n = {{"feature", nd.feature},
                     {"kind", nd.kind == SplitKind::numeric ? "numeric" : "categorical"},
                     {"threshold", nd.threshold},
                     {"default_left", nd.default_left},
                     {"left", nd.left},
                     {"right", nd.right},
                     {"gain", nd.gain},
                     {"cover", nd.cover}};
            }
            n["sum_g"] = nd.sum_g;
            n["sum_h"] = nd.sum_h;
            nodes.push_back(n);
        }
        trees.push_back({{"nodes", nodes}});
    }
    j["trees"] = trees;
    std::ofstream out(path);
    if (!out) throw NotFoundError("dump_model_json: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

GbdtModel load_model_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("load_model_json: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_model_json: parse error: " + std::string(e.what()));
    }
    GbdtModel model;
    const auto& hj = j.at("hyper");
    model.hyper.eta = hj.at("eta").get<double>();
    model.hyper.gamma = hj.at("gamma").get<double>();
    model.hyper.max_depth = hj.at("max_depth").get<int>();
    model.hyper.subsample = hj.at("subsample").get<double>();
    model.hyper.min_child_weight = hj.at("min_child_weight").get<double>();
    model.hyper.lambda = hj.at("lambda").get<double>();
    model.hyper.n_rounds = hj.at("n_rounds").get<int>();
    model.hyper.early_stop_patience = hj.at("early_stop_patience").get<int>();
    model.hyper.base_score = hj.at("base_score").get<double>();
    model.hyper.seed = hj.at("seed").get<std::uint64_t>();
    for (const auto& k : j.at("feature_kinds"))
        model.kinds.push_back(k.get<std::string>() == "numeric" ? FeatureKind::numeric
                                                                : FeatureKind::categorical);
    for (const auto& tj : j.at("trees")) {
        Tree t;
        for (const auto& nj : tj.at("nodes")) {
            Node nd;
            if (nj.contains("leaf")) {
                nd.leaf_weight = nj.at("leaf").get<double>();
            } else {
                nd.is_leaf = false;
                nd.feature = nj.at("feature").get<int>();
                nd.kind = nj.at("kind").get<std::string>() == "numeric" ? SplitKind::numeric
                                                                        : SplitKind::categorical;
                nd.threshold = nj.at("threshold").get<double>();
                nd.default_left = nj.at("default_left").get<bool>();
                nd.left = nj.at("left").get<int>();
                nd.right = nj.at("right").get<int>();
                nd.gain = nj.at("gain").get<double>();
            }
            nd.cover = nj.value("cover", 0.0);
            nd.sum_g = nj.value("sum_g", 0.0);
            nd.sum_h = nj.value("sum_h", 0.0);
            t.nodes.push_back(nd);
        }
        model.trees.push_back(std::move(t));
    }
    return model;
}

}  // namespace slidefuse::gbdt
