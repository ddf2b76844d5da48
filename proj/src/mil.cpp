#include "slidefuse/mil.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace slidefuse::mil {

TrainResult train_mil(const std::vector<MilExample>& train_set,
                      const std::vector<MilExample>& val_set, const MilHyper& hyper) {
    hyper.validate();
    if (train_set.empty() || val_set.empty())
        throw ArgumentError("train_mil: train and validation sets must be non-empty");
    for (const auto& ex : train_set)
        if (!ex.bag->trainable()) throw ArgumentError("train_mil: empty bag in training set");

    const int input_dim = static_cast<int>(train_set.front().bag->dim());
    MilDims dims;
    dims.input = input_dim;

    TrainResult result;
    result.model = init_model<float>(dims, hyper.seed);
    if (hyper.epochs == 0) return result;

    auto val_auc = [&](const MilModel& m) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& ex : val_set) {
            scores.push_back(forward(m, *ex.bag).probability_long);
            labels.push_back(ex.label);
        }
        return auc(scores, labels);
    };

    MilModel model = result.model;
    auto state = AdamState<float>::zero_like(model);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best = -1.0;
    int since_best = 0;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::mt19937_64 rng(hyper.seed + 0x9e3779b97f4a7c15ULL * (epoch + 1));
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t i : order) {
            const auto& ex = train_set[i];
            loss_sum +=
                train_step(model, Mat<float>(ex.bag->features), ex.label, hyper, state).total;
        }
        const double v = val_auc(model);
        result.history.push_back({epoch, loss_sum / double(train_set.size()), v});
        if (v > best) {
            best = v;
            since_best = 0;
            result.model = model;
            result.best_val_auc = v;
            result.best_epoch = epoch;
        } else if (++since_best >= hyper.early_stop_patience) {
            break;
        }
    }
    return result;
}

namespace {

constexpr char kMagic[4] = {'A', 'M', 'I', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("load_checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const MilModel& model, const MilHyper& hyper,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NotFoundError("save_checkpoint: cannot open " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, model.dims.input);
    put<std::uint32_t>(out, model.dims.hidden);
    put<std::uint32_t>(out, model.dims.attn);
    put<double>(out, hyper.bag_loss_weight);
    put<double>(out, hyper.instance_loss_weight);
    put<std::uint32_t>(out, hyper.top_k);
    put<double>(out, hyper.learning_rate);
    put<double>(out, hyper.weight_decay);
    put<std::uint32_t>(out, hyper.epochs);
    put<std::uint32_t>(out, hyper.early_stop_patience);
    put<std::uint64_t>(out, hyper.seed);
    for (const Mat<float>* t : model.tensors()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rows()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->cols()));
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(sizeof(float) * t->size()));
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("load_checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("load_checkpoint: bad magic in " + path.string());
    if (get<std::uint32_t>(in) != kVersion)
        throw FormatError("load_checkpoint: unsupported version");
    Checkpoint cp;
    MilDims dims;
    dims.input = static_cast<int>(get<std::uint32_t>(in));
    dims.hidden = static_cast<int>(get<std::uint32_t>(in));
    dims.attn = static_cast<int>(get<std::uint32_t>(in));
    cp.hyper.bag_loss_weight = get<double>(in);
    cp.hyper.instance_loss_weight = get<double>(in);
    cp.hyper.top_k = static_cast<int>(get<std::uint32_t>(in));
    cp.hyper.learning_rate = get<double>(in);
    cp.hyper.weight_decay = get<double>(in);
    cp.hyper.epochs = static_cast<int>(get<std::uint32_t>(in));
    cp.hyper.early_stop_patience = static_cast<int>(get<std::uint32_t>(in));
    cp.hyper.seed = get<std::uint64_t>(in);
    cp.model = init_model<float>(dims, 0);
    for (Mat<float>* t : cp.model.tensors()) {
        const auto rows = get<std::uint32_t>(in);
        const auto cols = get<std::uint32_t>(in);
        if (rows != t->rows() || cols != t->cols())
            throw FormatError("load_checkpoint: tensor shape mismatch");
        in.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(sizeof(float) * t->size()));
        if (!in) throw FormatError("load_checkpoint: truncated tensor data");
    }
    return cp;
}

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("write_history_csv: cannot open " + path.string());
    out << "epoch,train_loss,val_auc\n";
    char buf[64];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", r.epoch, r.train_loss, r.val_auc);
        out << buf;
    }
}

}  // namespace slidefuse::mil
