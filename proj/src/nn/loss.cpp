#include "noboxlab/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

double cross_entropy(const Tensor& logits, const LabelVector& labels,
                     Tensor* dlogits) {
    require_ndim(logits, 2, "cross entropy logits");
    const std::size_t N = logits.dim(0), C = logits.dim(1);
    if (labels.labels.size() != N)
        throw ShapeError("cross entropy: " + std::to_string(N) + " rows vs " +
                         std::to_string(labels.labels.size()) + " labels");
    if (dlogits) *dlogits = Tensor({N, C});
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t y = labels.labels[i];
        if (y >= C) throw DomainError("cross entropy: label outside logit columns");
        double mx = logits.at2(i, 0);
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, logits.at2(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) sum += std::exp(logits.at2(i, j) - mx);
        double lse = mx + std::log(sum);
        total += lse - logits.at2(i, y);
        if (dlogits) {
            for (std::size_t j = 0; j < C; ++j)
                dlogits->at2(i, j) =
                    std::exp(logits.at2(i, j) - lse) / static_cast<double>(N);
            dlogits->at2(i, y) -= 1.0 / static_cast<double>(N);
        }
    }
    return total / static_cast<double>(N);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    require_ndim(logits, 2, "argmax logits");
    const std::size_t N = logits.dim(0), C = logits.dim(1);
    std::vector<std::size_t> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < C; ++j)
            if (logits.at2(i, j) > logits.at2(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

double accuracy(const Tensor& logits, const LabelVector& labels) {
    std::vector<std::size_t> pred = argmax_rows(logits);
    if (pred.size() != labels.labels.size())
        throw ShapeError("accuracy: prediction/label length mismatch");
    if (pred.empty()) throw DomainError("accuracy undefined on empty batch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}
