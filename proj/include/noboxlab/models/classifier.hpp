#pragma once

#include "noboxlab/core/tensor.hpp"
#include "noboxlab/data/dataset.hpp"

namespace noboxlab {

// Anything that maps image batches to class logits and can expose the
// gradient of its cross-entropy loss with respect to the input pixels.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::size_t n_classes() const = 0;
    virtual const ImageShape& input_size() const = 0;
    virtual Tensor logits(const Tensor& x) = 0;
    // dCE/dx at (x, labels); loss_out (optional) receives the loss value.
    virtual Tensor input_gradient(const Tensor& x, const LabelVector& labels,
                                  double* loss_out = nullptr) = 0;
};

}
