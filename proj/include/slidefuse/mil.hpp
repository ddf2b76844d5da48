#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "slidefuse/errors.hpp"
#include "slidefuse/feature_bag.hpp"
#include "slidefuse/metrics.hpp"

namespace slidefuse::mil {

// Class 0 = short survivor, class 1 = long survivor.
inline constexpr int kShort = 0;
inline constexpr int kLong = 1;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct MilDims {
    int input = 1024;
    int hidden = 512;
    int attn = 256;
    bool operator==(const MilDims&) const = default;
};

struct MilHyper {
    double bag_loss_weight = 0.7;     // c1
    double instance_loss_weight = 0.3;  // c2
    int top_k = 8;
    double learning_rate = 2e-4;
    double weight_decay = 1e-5;
    int epochs = 50;
    int early_stop_patience = 20;
    std::uint64_t seed = 1;

    void validate() const {
        if (std::abs(bag_loss_weight + instance_loss_weight - 1.0) > 1e-12)
            throw ArgumentError("MilHyper: loss weights must sum to 1");
        if (top_k < 1) throw ArgumentError("MilHyper: top_k must be >= 1");
        if (learning_rate <= 0.0) throw ArgumentError("MilHyper: learning_rate must be > 0");
    }
};

template <typename S>
struct DenseLayer {
    Mat<S> W;  // out x in
    Mat<S> b;  // out x 1
};

// Gated attention MIL with a two-class bag head and one instance head
// per class on the 512-d embeddings.
template <typename S>
struct MilModelT {
    MilDims dims;
    DenseLayer<S> fc1;         // input -> hidden, relu
    DenseLayer<S> attn_V;      // hidden -> attn, tanh
    DenseLayer<S> attn_U;      // hidden -> attn, sigmoid
    DenseLayer<S> attn_w;      // attn -> 1
    DenseLayer<S> classifier;  // hidden -> 2
    DenseLayer<S> inst_head[2];  // hidden -> 2, one per class

    std::vector<Mat<S>*> tensors() {
        return {&fc1.W,        &fc1.b,        &attn_V.W,      &attn_V.b,
                &attn_U.W,     &attn_U.b,     &attn_w.W,      &attn_w.b,
                &classifier.W, &classifier.b, &inst_head[0].W, &inst_head[0].b,
                &inst_head[1].W, &inst_head[1].b};
    }
    std::vector<const Mat<S>*> tensors() const {
        auto* self = const_cast<MilModelT*>(this);
        std::vector<const Mat<S>*> out;
        for (auto* t : self->tensors()) out.push_back(t);
        return out;
    }
    static const std::vector<std::string>& tensor_names() {
        static const std::vector<std::string> names = {
            "fc1.W",        "fc1.b",        "attn_V.W",  "attn_V.b",  "attn_U.W",
            "attn_U.b",     "attn_w.W",     "attn_w.b",  "classifier.W",
            "classifier.b", "inst0.W",      "inst0.b",   "inst1.W",   "inst1.b"};
        return names;
    }

    template <typename T>
    MilModelT<T> cast() const {
        MilModelT<T> out;
        out.dims = dims;
        auto src = tensors();
        auto dst = out.tensors();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<T>();
        return out;
    }
};

using MilModel = MilModelT<float>;

// Fan-in-scaled uniform init (U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// mt19937_64), zero biases.
template <typename S>
MilModelT<S> init_model(const MilDims& dims, std::uint64_t seed) {
    if (dims.input < 1 || dims.hidden < 1 || dims.attn < 1)
        throw ArgumentError("init_model: dims must be positive");
    MilModelT<S> m;
    m.dims = dims;
    auto shape = [&](DenseLayer<S>& l, int out, int in) {
        l.W.resize(out, in);
        l.b = Mat<S>::Zero(out, 1);
    };
    shape(m.fc1, dims.hidden, dims.input);
    shape(m.attn_V, dims.attn, dims.hidden);
    shape(m.attn_U, dims.attn, dims.hidden);
    shape(m.attn_w, 1, dims.attn);
    shape(m.classifier, 2, dims.hidden);
    shape(m.inst_head[0], 2, dims.hidden);
    shape(m.inst_head[1], 2, dims.hidden);

    std::mt19937_64 rng(seed);
    for (Mat<S>* t : m.tensors()) {
        if (t->cols() == 1) continue;  // biases stay zero
        const double bound = 1.0 / std::sqrt(double(t->cols()));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index r = 0; r < t->rows(); ++r)
            for (Eigen::Index c = 0; c < t->cols(); ++c) (*t)(r, c) = static_cast<S>(dist(rng));
    }
    return m;
}

template <typename S>
struct BagOutputT {
    Vec<S> logits;       // 2
    S probability_long;  // softmax(logits)[kLong]
    Vec<S> attention;    // N, sums to 1
    Mat<S> embeddings;   // N x hidden
};

using BagOutput = BagOutputT<float>;

namespace detail {

// Cross-instance reductions run in descending-attention-logit order so
// permuting bag rows leaves the sums (and hence the logits) unchanged.
template <typename S>
std::vector<Eigen::Index> value_order(const Vec<S>& e) {
    std::vector<Eigen::Index> idx(e.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return e[a] > e[b]; });
    return idx;
}

template <typename S>
struct ForwardCache {
    Mat<S> x;       // N x input (copy of the bag rows)
    Mat<S> z1;      // N x hidden, pre-relu
    Mat<S> h;       // N x hidden
    Mat<S> t;       // N x attn
    Mat<S> u;       // N x attn
    Vec<S> e;       // N attention logits
    Vec<S> a;       // N softmax attention
    Vec<S> slide;   // hidden, attention-pooled embedding
    Vec<S> logits;  // 2
    std::vector<Eigen::Index> order;  // reduction order
};

template <typename S>
ForwardCache<S> forward_cache(const MilModelT<S>& model, const Mat<S>& x) {
    const Eigen::Index n = x.rows();
    if (n < 1) throw ArgumentError("forward: empty bag");
    if (x.cols() != model.dims.input) throw ArgumentError("forward: feature dim mismatch");

    ForwardCache<S> c;
    c.x = x;
    c.z1 = (x * model.fc1.W.transpose()).rowwise() + model.fc1.b.col(0).transpose();
    c.h = c.z1.cwiseMax(S(0));
    c.t = ((c.h * model.attn_V.W.transpose()).rowwise() + model.attn_V.b.col(0).transpose())
              .array()
              .tanh();
    c.u = (S(1) / (S(1) + (-((c.h * model.attn_U.W.transpose()).rowwise() +
                             model.attn_U.b.col(0).transpose()))
                              .array()
                              .exp()));
    c.e.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        c.e[i] = (c.t.row(i).cwiseProduct(c.u.row(i)) * model.attn_w.W.row(0).transpose())(0) +
                 model.attn_w.b(0, 0);

    c.order = value_order(c.e);
    const S mx = c.e[c.order.front()];
    S z = S(0);
    for (Eigen::Index i : c.order) z += std::exp(c.e[i] - mx);
    c.a.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) c.a[i] = std::exp(c.e[i] - mx) / z;

    c.slide = Vec<S>::Zero(model.dims.hidden);
    for (Eigen::Index i : c.order) c.slide += c.a[i] * c.h.row(i).transpose();
    c.logits = model.classifier.W * c.slide + model.classifier.b.col(0);
    return c;
}

template <typename S>
S logsumexp2(S a, S b) {
    const S m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Indices used by the instance branch: top-k and bottom-k by attention,
// ties broken by row index. k clamps to floor(N/2); an N=1 bag trains
// with its single row as the positive only.
template <typename S>
void select_instances(const Vec<S>& a, int top_k, std::vector<Eigen::Index>& pos,
                      std::vector<Eigen::Index>& neg) {
    const Eigen::Index n = a.size();
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index p, Eigen::Index q) {
        return a[p] != a[q] ? a[p] > a[q] : p < q;
    });
    if (n == 1) {
        pos = {idx[0]};
        neg = {};
        return;
    }
    const int k = std::max<int>(1, std::min<long>(top_k, n / 2));
    pos.assign(idx.begin(), idx.begin() + k);
    neg.assign(idx.end() - k, idx.end());
}

}  // namespace detail

template <typename S>
BagOutputT<S> forward(const MilModelT<S>& model, const Mat<S>& x) {
    auto c = detail::forward_cache(model, x);
    BagOutputT<S> out;
    out.logits = c.logits;
    out.probability_long =
        std::exp(c.logits[kLong] - detail::logsumexp2(c.logits[0], c.logits[1]));
    out.attention = c.a;
    out.embeddings = c.h;
    return out;
}

inline BagOutput forward(const MilModel& model, const PatchBag& bag) {
    return forward(model, Mat<float>(bag.features));
}

struct LossParts {
    double total = 0.0;
    double bag_ce = 0.0;
    double instance_svm = 0.0;
};

namespace detail {

// Smooth top-1 SVM (multiclass margin with softmax smoothing, margin 1,
// temperature 1) on one 2-logit instance prediction.
template <typename S>
S smooth_svm_loss(const Vec<S>& q, int target) {
    const S l0 = q[0] + (target != 0 ? S(1) : S(0));
    const S l1 = q[1] + (target != 1 ? S(1) : S(0));
    return logsumexp2(l0, l1) - q[target];
}

template <typename S>
struct LossCache {
    ForwardCache<S> fwd;
    std::vector<Eigen::Index> pos, neg;
    int label = 0;
};

template <typename S>
LossParts loss_with_cache(const MilModelT<S>& model, LossCache<S>& cache, int label,
                          const MilHyper& hyper) {
    const auto& c = cache.fwd;
    cache.label = label;
    LossParts parts;
    parts.bag_ce = double(logsumexp2(c.logits[0], c.logits[1]) - c.logits[label]);

    select_instances(c.a, hyper.top_k, cache.pos, cache.neg);
    const auto& head = model.inst_head[label];
    S inst = S(0);
    long n_sel = 0;
    for (Eigen::Index i : cache.pos) {
        Vec<S> q = head.W * c.h.row(i).transpose() + head.b.col(0);
        inst += smooth_svm_loss(q, 1);
        ++n_sel;
    }
    for (Eigen::Index i : cache.neg) {
        Vec<S> q = head.W * c.h.row(i).transpose() + head.b.col(0);
        inst += smooth_svm_loss(q, 0);
        ++n_sel;
    }
    parts.instance_svm = double(inst) / double(n_sel);
    parts.total = hyper.bag_loss_weight * parts.bag_ce +
                  hyper.instance_loss_weight * parts.instance_svm;
    return parts;
}

}  // namespace detail

// Loss of one bag under the current model; pure (used by the
// finite-difference oracle as well as training).
template <typename S>
LossParts compute_loss(const MilModelT<S>& model, const Mat<S>& x, int label,
                       const MilHyper& hyper) {
    detail::LossCache<S> cache{detail::forward_cache(model, x), {}, {}, 0};
    return detail::loss_with_cache(model, cache, label, hyper);
}

// Reverse-mode gradients of the total loss for every parameter tensor.
template <typename S>
LossParts loss_and_gradients(const MilModelT<S>& model, const Mat<S>& x, int label,
                             const MilHyper& hyper, MilModelT<S>& grad) {
    detail::LossCache<S> cache{detail::forward_cache(model, x), {}, {}, 0};
    const LossParts parts = detail::loss_with_cache(model, cache, label, hyper);
    const auto& c = cache.fwd;
    const Eigen::Index n = c.x.rows();
    const S c1 = S(hyper.bag_loss_weight), c2 = S(hyper.instance_loss_weight);

    grad = model;
    for (auto* t : grad.tensors()) t->setZero();

    // bag cross-entropy -> classifier
    Vec<S> p(2);
    const S lse = detail::logsumexp2(c.logits[0], c.logits[1]);
    p[0] = std::exp(c.logits[0] - lse);
    p[1] = std::exp(c.logits[1] - lse);
    Vec<S> dlogits = p * c1;
    dlogits[label] -= c1;
    grad.classifier.W += dlogits * c.slide.transpose();
    grad.classifier.b.col(0) += dlogits;
    Vec<S> dM = model.classifier.W.transpose() * dlogits;

    Mat<S> dh = Mat<S>::Zero(n, model.dims.hidden);
    Vec<S> da = Vec<S>::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        da[i] = dM.dot(c.h.row(i).transpose());
        dh.row(i) += c.a[i] * dM.transpose();
    }

    // instance branch (selection treated as constant)
    const long n_sel = long(cache.pos.size() + cache.neg.size());
    const auto& head = model.inst_head[label];
    auto& ghead = grad.inst_head[label];
    auto add_instance = [&](Eigen::Index i, int target) {
        Vec<S> q = head.W * c.h.row(i).transpose() + head.b.col(0);
        const S l0 = q[0] + (target != 0 ? S(1) : S(0));
        const S l1 = q[1] + (target != 1 ? S(1) : S(0));
        const S m = detail::logsumexp2(l0, l1);
        Vec<S> dq(2);
        dq[0] = std::exp(l0 - m);
        dq[1] = std::exp(l1 - m);
        dq[target] -= S(1);
        dq *= c2 / S(n_sel);
        ghead.W += dq * c.h.row(i);
        ghead.b.col(0) += dq;
        dh.row(i) += (head.W.transpose() * dq).transpose();
    };
    for (Eigen::Index i : cache.pos) add_instance(i, 1);
    for (Eigen::Index i : cache.neg) add_instance(i, 0);

    // softmax attention
    S dot = S(0);
    for (Eigen::Index i : c.order) dot += c.a[i] * da[i];
    Vec<S> de(n);
    for (Eigen::Index i = 0; i < n; ++i) de[i] = c.a[i] * (da[i] - dot);

    // gated attention head
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ti = c.t.row(i), ui = c.u.row(i);
        grad.attn_w.W.row(0) += de[i] * ti.cwiseProduct(ui);
        grad.attn_w.b(0, 0) += de[i];
        Vec<S> dt = de[i] * model.attn_w.W.row(0).transpose().cwiseProduct(ui.transpose());
        Vec<S> du = de[i] * model.attn_w.W.row(0).transpose().cwiseProduct(ti.transpose());
        Vec<S> dzv = dt.cwiseProduct((S(1) - ti.array().square()).matrix().transpose());
        Vec<S> dzu = du.cwiseProduct(
            (ui.array() * (S(1) - ui.array())).matrix().transpose());
        grad.attn_V.W += dzv * c.h.row(i);
        grad.attn_V.b.col(0) += dzv;
        grad.attn_U.W += dzu * c.h.row(i);
        grad.attn_U.b.col(0) += dzu;
        dh.row(i) += (model.attn_V.W.transpose() * dzv).transpose() +
                     (model.attn_U.W.transpose() * dzu).transpose();
    }

    // relu + fc1
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec<S> dz1 = dh.row(i).transpose();
        for (Eigen::Index j = 0; j < dz1.size(); ++j)
            if (c.z1(i, j) <= S(0)) dz1[j] = S(0);
        grad.fc1.W += dz1 * c.x.row(i);
        grad.fc1.b.col(0) += dz1;
    }
    return parts;
}

// Adam with decoupled weight decay.
template <typename S>
struct AdamState {
    MilModelT<S> m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState zero_like(const MilModelT<S>& model) {
        AdamState s;
        s.m = model;
        s.v = model;
        for (auto* t : s.m.tensors()) t->setZero();
        for (auto* t : s.v.tensors()) t->setZero();
        return s;
    }
};

template <typename S>
LossParts train_step(MilModelT<S>& model, const Mat<S>& x, int label, const MilHyper& hyper,
                     AdamState<S>& state) {
    MilModelT<S> grad;
    const LossParts parts = loss_and_gradients(model, x, label, hyper, grad);
    if (!std::isfinite(parts.total))
        throw TrainingError("train_step: non-finite loss (bag_ce=" +
                            std::to_string(parts.bag_ce) +
                            ", instance_svm=" + std::to_string(parts.instance_svm) + ")");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    auto tm = model.tensors();
    auto tg = grad.tensors();
    auto tmm = state.m.tensors();
    auto tvv = state.v.tensors();
    for (std::size_t i = 0; i < tm.size(); ++i) {
        auto& W = *tm[i];
        auto& G = *tg[i];
        auto& M = *tmm[i];
        auto& V = *tvv[i];
        M = S(state.beta1) * M + S(1.0 - state.beta1) * G;
        V = S(state.beta2) * V + (S(1.0 - state.beta2) * G.array().square()).matrix();
        const auto mhat = (M.array() / S(bc1));
        const auto vhat = (V.array() / S(bc2));
        W.array() -= S(hyper.learning_rate) * mhat / (vhat.sqrt() + S(state.eps));
        W.array() -= S(hyper.learning_rate * hyper.weight_decay) * W.array();
    }
    return parts;
}

struct MilExample {
    const PatchBag* bag;
    int label;  // 0 short, 1 long
};

struct EpochRecord {
    int epoch;
    double train_loss;
    double val_auc;
};

struct TrainResult {
    MilModel model;
    std::vector<EpochRecord> history;
    double best_val_auc = 0.0;
    int best_epoch = -1;
};

// One bag per optimizer step; seeded shuffle per epoch; keeps the
// best-validation-AUC parameters; stops after `early_stop_patience`
// epochs without improvement.
TrainResult train_mil(const std::vector<MilExample>& train_set,
                      const std::vector<MilExample>& val_set, const MilHyper& hyper);

struct Checkpoint {
    MilModel model;
    MilHyper hyper;
};

void save_checkpoint(const MilModel& model, const MilHyper& hyper,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::filesystem::path& path);

}  // namespace slidefuse::mil
