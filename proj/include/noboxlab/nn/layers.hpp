#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "noboxlab/core/rng.hpp"
#include "noboxlab/core/tensor.hpp"

namespace noboxlab {

// A named slice of trainable state: n doubles of weight plus the matching
// gradient accumulator.
struct ParamView {
    std::string name;
    double* w = nullptr;
    double* g = nullptr;
    std::size_t n = 0;
};

// Differentiable op. forward(x, train) caches whatever backward needs when
// train is true; backward(dy) returns dL/dx and accumulates parameter
// gradients in place.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual std::vector<ParamView> params() { return {}; }
    void zero_grad();
};

// 2-d convolution over NCHW input, square kernel, symmetric zero padding.
// Weight layout: [out_ch][in_ch*k*k] row-major; bias [out_ch].
class Conv2d : public Layer {
public:
    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t ksize,
           std::size_t stride, std::size_t padding);

    void init_he(Rng& rng);   // normal(0, sqrt(2/fan_in)) weights, zero bias
    void init_zero();         // exact zeros, for identity-at-start output heads

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<ParamView> params() override;

    std::size_t in_channels() const { return in_ch_; }
    std::size_t out_channels() const { return out_ch_; }

private:
    void im2col(const Tensor& x, std::size_t n, std::size_t out_h, std::size_t out_w,
                std::vector<double>& cols) const;

    std::size_t in_ch_, out_ch_, k_, stride_, pad_;
    std::vector<double> w_, b_, gw_, gb_;
    Tensor cached_x_;
    mutable std::vector<double> colbuf_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;

private:
    Tensor cached_x_;
};

// Fully connected: [N, in] -> [N, out]. Weight [out][in] row-major, bias [out].
class Linear : public Layer {
public:
    Linear(std::size_t in, std::size_t out);

    void init_he(Rng& rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<ParamView> params() override;

    std::vector<double>& weight() { return w_; }
    std::vector<double>& bias() { return b_; }
    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

private:
    std::size_t in_, out_;
    std::vector<double> w_, b_, gw_, gb_;
    Tensor cached_x_;
};

// [N, C, H, W] -> [N, C] mean over spatial positions.
class GlobalAvgPool : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;

private:
    std::vector<std::size_t> cached_shape_;
};

// [N, C, H, W] -> [N, C, 2H, 2W] by pixel replication.
class NearestUpsample2x : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;

private:
    std::vector<std::size_t> cached_shape_;
};

// y = relu(x + conv2(relu(conv1(x)))), channel-preserving.
class ResBlock : public Layer {
public:
    explicit ResBlock(std::size_t channels);

    void init_he(Rng& rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<ParamView> params() override;

private:
    Conv2d conv1_, conv2_;
    ReLU relu1_;
    Tensor cached_sum_;  // pre-activation x + conv2(...)
};

// Ordered pipeline of named layers; parameter names gain "<name>." prefixes.
class Sequential : public Layer {
public:
    void add(const std::string& name, std::unique_ptr<Layer> layer);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& dy) override;
    std::vector<ParamView> params() override;

    std::size_t size() const { return items_.size(); }
    Layer& layer(std::size_t i) { return *items_[i].second; }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer>>> items_;
};

// Channel concatenation of two NCHW tensors with matching N, H, W.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits dy of concat_channels(a, b) back into the two operand gradients.
std::pair<Tensor, Tensor> split_channels(const Tensor& dy, std::size_t a_channels);

// Prefixes every view name with "<prefix>.".
std::vector<ParamView> prefix_params(const std::string& prefix,
                                     std::vector<ParamView> views);

std::size_t param_count(const std::vector<ParamView>& views);

}
