#include "noboxlab/core/tensor.hpp"

#include <sstream>

namespace noboxlab {

std::size_t shape_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_count(shape_), fill) {}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

Tensor& Tensor::add_(const Tensor& o) {
    if (!same_shape(o))
        throw ShapeError("tensor add: shape mismatch " + shape_str() + " vs " + o.shape_str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::scale_(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const std::string& what) {
    if (t.shape() != shape) {
        Tensor want(shape);
        throw ShapeError(what + ": expected shape " + want.shape_str() + ", got " + t.shape_str());
    }
}

void require_ndim(const Tensor& t, std::size_t ndim, const std::string& what) {
    if (t.ndim() != ndim) {
        std::ostringstream os;
        os << what << ": expected " << ndim << "-d tensor, got " << t.shape_str();
        throw ShapeError(os.str());
    }
}

}
