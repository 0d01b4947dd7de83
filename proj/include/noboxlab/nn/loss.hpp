#pragma once

#include "noboxlab/core/tensor.hpp"
#include "noboxlab/data/dataset.hpp"

namespace noboxlab {

// Mean softmax cross-entropy (natural log) of logits [N, n] against labels.
// When dlogits is non-null it receives (softmax - onehot)/N.
double cross_entropy(const Tensor& logits, const LabelVector& labels,
                     Tensor* dlogits = nullptr);

// Row-wise argmax with ties broken toward the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, const LabelVector& labels);

}
