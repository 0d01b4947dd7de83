#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

// Dense double tensor, row-major. Images use NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, double fill);

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // NCHW accessors.
    double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(double v);
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    // Elementwise in-place helpers.
    Tensor& add_(const Tensor& o);
    Tensor& scale_(double s);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_count(const std::vector<std::size_t>& shape);

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const std::string& what);
void require_ndim(const Tensor& t, std::size_t ndim, const std::string& what);

}
