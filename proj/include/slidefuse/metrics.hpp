#pragma once

#include <vector>

#include "slidefuse/errors.hpp"

namespace slidefuse {

// Rank-statistic AUC: fraction of (positive, negative) pairs ordered
// correctly, ties counted as half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ArgumentError("auc: length mismatch");
    long n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw ArgumentError("auc: both classes required");
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / (double(n_pos) * double(n_neg));
}

// p >= threshold classifies as the positive class.
inline double accuracy(const std::vector<double>& probabilities, const std::vector<int>& labels,
                       double threshold = 0.5) {
    if (probabilities.size() != labels.size()) throw ArgumentError("accuracy: length mismatch");
    if (probabilities.empty()) throw ArgumentError("accuracy: empty input");
    long correct = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i)
        if ((probabilities[i] >= threshold ? 1 : 0) == labels[i]) ++correct;
    return double(correct) / double(probabilities.size());
}

// Equal-weight late fusion of two probabilities.
inline double fuse(double p_imaging, double p_clinical) {
    if (p_imaging < 0.0 || p_imaging > 1.0 || p_clinical < 0.0 || p_clinical > 1.0)
        throw ArgumentError("fuse: probabilities must be in [0,1]");
    return (p_imaging + p_clinical) / 2.0;
}

}  // namespace slidefuse
