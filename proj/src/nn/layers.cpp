#include "noboxlab/nn/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void Layer::zero_grad() {
    for (ParamView& p : params())
        std::fill(p.g, p.g + p.n, 0.0);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t ksize,
               std::size_t stride, std::size_t padding)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride), pad_(padding),
      w_(out_ch * in_ch * ksize * ksize, 0.0), b_(out_ch, 0.0),
      gw_(w_.size(), 0.0), gb_(b_.size(), 0.0) {
    if (stride_ == 0) throw DomainError("conv2d: stride must be positive");
}

void Conv2d::init_he(Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(in_ch_ * k_ * k_));
    for (double& v : w_) v = std * rng.normal();
    std::fill(b_.begin(), b_.end(), 0.0);
}

void Conv2d::init_zero() {
    std::fill(w_.begin(), w_.end(), 0.0);
    std::fill(b_.begin(), b_.end(), 0.0);
}

void Conv2d::im2col(const Tensor& x, std::size_t n, std::size_t out_h,
                    std::size_t out_w, std::vector<double>& cols) const {
    const std::size_t H = x.dim(2), W = x.dim(3);
    const std::size_t R = in_ch_ * k_ * k_;
    cols.assign(R * out_h * out_w, 0.0);
    // Column-major R x (out_h*out_w): column q holds the receptive field of
    // output position q.
    for (std::size_t c = 0; c < in_ch_; ++c) {
        for (std::size_t kh = 0; kh < k_; ++kh) {
            for (std::size_t kw = 0; kw < k_; ++kw) {
                std::size_t r = (c * k_ + kh) * k_ + kw;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    // ih = oh*stride + kh - pad, computed in signed space.
                    long ih = static_cast<long>(oh * stride_ + kh) - static_cast<long>(pad_);
                    if (ih < 0 || ih >= static_cast<long>(H)) continue;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        long iw = static_cast<long>(ow * stride_ + kw) - static_cast<long>(pad_);
                        if (iw < 0 || iw >= static_cast<long>(W)) continue;
                        std::size_t q = oh * out_w + ow;
                        cols[q * R + r] =
                            x.at4(n, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
                    }
                }
            }
        }
    }
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
    require_ndim(x, 4, "conv2d input");
    if (x.dim(1) != in_ch_)
        throw ShapeError("conv2d: expected " + std::to_string(in_ch_) +
                         " input channels, got " + std::to_string(x.dim(1)));
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (H + 2 * pad_ < k_ || W + 2 * pad_ < k_)
        throw ShapeError("conv2d: input smaller than kernel");
    const std::size_t out_h = (H + 2 * pad_ - k_) / stride_ + 1;
    const std::size_t out_w = (W + 2 * pad_ - k_) / stride_ + 1;
    const std::size_t R = in_ch_ * k_ * k_;
    const std::size_t Q = out_h * out_w;

    Tensor y({N, out_ch_, out_h, out_w});
    Eigen::Map<const MatrixRM> Wm(w_.data(), out_ch_, R);
    for (std::size_t n = 0; n < N; ++n) {
        im2col(x, n, out_h, out_w, colbuf_);
        Eigen::Map<const Eigen::MatrixXd> C(colbuf_.data(), R, Q);
        Eigen::Map<MatrixRM> Yn(y.data() + n * out_ch_ * Q, out_ch_, Q);
        Yn.noalias() = Wm * C;
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            Yn.row(oc).array() += b_[oc];
    }
    if (train) cached_x_ = x;
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = cached_x_;
    if (x.empty()) throw PreconditionError("conv2d backward without cached forward");
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const std::size_t out_h = dy.dim(2), out_w = dy.dim(3);
    const std::size_t R = in_ch_ * k_ * k_;
    const std::size_t Q = out_h * out_w;
    require_shape(dy, {N, out_ch_, out_h, out_w}, "conv2d upstream gradient");

    Tensor dx({N, in_ch_, H, W});
    Eigen::Map<const MatrixRM> Wm(w_.data(), out_ch_, R);
    Eigen::Map<MatrixRM> Gw(gw_.data(), out_ch_, R);
    Eigen::MatrixXd dC(R, Q);
    for (std::size_t n = 0; n < N; ++n) {
        Eigen::Map<const MatrixRM> dYn(dy.data() + n * out_ch_ * Q, out_ch_, Q);
        im2col(x, n, out_h, out_w, colbuf_);
        Eigen::Map<const Eigen::MatrixXd> C(colbuf_.data(), R, Q);
        Gw.noalias() += dYn * C.transpose();
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            gb_[oc] += dYn.row(oc).sum();
        dC.noalias() = Wm.transpose() * dYn;
        // col2im: scatter-add receptive-field gradients back to pixels.
        for (std::size_t c = 0; c < in_ch_; ++c) {
            for (std::size_t kh = 0; kh < k_; ++kh) {
                for (std::size_t kw = 0; kw < k_; ++kw) {
                    std::size_t r = (c * k_ + kh) * k_ + kw;
                    for (std::size_t oh = 0; oh < out_h; ++oh) {
                        long ih = static_cast<long>(oh * stride_ + kh) - static_cast<long>(pad_);
                        if (ih < 0 || ih >= static_cast<long>(H)) continue;
                        for (std::size_t ow = 0; ow < out_w; ++ow) {
                            long iw = static_cast<long>(ow * stride_ + kw) - static_cast<long>(pad_);
                            if (iw < 0 || iw >= static_cast<long>(W)) continue;
                            dx.at4(n, c, static_cast<std::size_t>(ih),
                                   static_cast<std::size_t>(iw)) += dC(r, oh * out_w + ow);
                        }
                    }
                }
            }
        }
    }
    return dx;
}

std::vector<ParamView> Conv2d::params() {
    return {{"w", w_.data(), gw_.data(), w_.size()},
            {"b", b_.data(), gb_.data(), b_.size()}};
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, bool train) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < 0.0) y[i] = 0.0;
    if (train) cached_x_ = x;
    return y;
}

Tensor ReLU::backward(const Tensor& dy) {
    const Tensor& x = cached_x_;
    if (x.empty()) throw PreconditionError("relu backward without cached forward");
    if (!dy.same_shape(x)) throw ShapeError("relu upstream gradient shape mismatch");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (x[i] <= 0.0) dx[i] = 0.0;
    return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in, std::size_t out)
    : in_(in), out_(out), w_(in * out, 0.0), b_(out, 0.0),
      gw_(w_.size(), 0.0), gb_(b_.size(), 0.0) {}

void Linear::init_he(Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(in_));
    for (double& v : w_) v = std * rng.normal();
    std::fill(b_.begin(), b_.end(), 0.0);
}

Tensor Linear::forward(const Tensor& x, bool train) {
    require_ndim(x, 2, "linear input");
    if (x.dim(1) != in_)
        throw ShapeError("linear: expected " + std::to_string(in_) +
                         " input features, got " + std::to_string(x.dim(1)));
    const std::size_t N = x.dim(0);
    Tensor y({N, out_});
    Eigen::Map<const MatrixRM> X(x.data(), N, in_);
    Eigen::Map<const MatrixRM> Wm(w_.data(), out_, in_);
    Eigen::Map<MatrixRM> Y(y.data(), N, out_);
    Y.noalias() = X * Wm.transpose();
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t o = 0; o < out_; ++o)
            y.at2(i, o) += b_[o];
    if (train) cached_x_ = x;
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    const Tensor& x = cached_x_;
    if (x.empty()) throw PreconditionError("linear backward without cached forward");
    const std::size_t N = x.dim(0);
    require_shape(dy, {N, out_}, "linear upstream gradient");
    Eigen::Map<const MatrixRM> X(x.data(), N, in_);
    Eigen::Map<const MatrixRM> dY(dy.data(), N, out_);
    Eigen::Map<const MatrixRM> Wm(w_.data(), out_, in_);
    Eigen::Map<MatrixRM> Gw(gw_.data(), out_, in_);
    Gw.noalias() += dY.transpose() * X;
    for (std::size_t o = 0; o < out_; ++o)
        gb_[o] += dY.col(o).sum();
    Tensor dx({N, in_});
    Eigen::Map<MatrixRM> dX(dx.data(), N, in_);
    dX.noalias() = dY * Wm;
    return dx;
}

std::vector<ParamView> Linear::params() {
    return {{"w", w_.data(), gw_.data(), w_.size()},
            {"b", b_.data(), gb_.data(), b_.size()}};
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, bool train) {
    require_ndim(x, 4, "global average pool input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C});
    const double inv = 1.0 / static_cast<double>(H * W);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            const double* p = x.data() + (n * C + c) * H * W;
            for (std::size_t i = 0; i < H * W; ++i) s += p[i];
            y.at2(n, c) = s * inv;
        }
    if (train) cached_shape_ = x.shape();
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
    if (cached_shape_.empty())
        throw PreconditionError("global average pool backward without cached forward");
    const std::size_t N = cached_shape_[0], C = cached_shape_[1];
    const std::size_t H = cached_shape_[2], W = cached_shape_[3];
    require_shape(dy, {N, C}, "global average pool upstream gradient");
    Tensor dx(cached_shape_);
    const double inv = 1.0 / static_cast<double>(H * W);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double g = dy.at2(n, c) * inv;
            double* p = dx.data() + (n * C + c) * H * W;
            for (std::size_t i = 0; i < H * W; ++i) p[i] = g;
        }
    return dx;
}

// ---------------------------------------------------------------- NearestUpsample2x

Tensor NearestUpsample2x::forward(const Tensor& x, bool train) {
    require_ndim(x, 4, "upsample input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, 2 * H, 2 * W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    double v = x.at4(n, c, h, w);
                    y.at4(n, c, 2 * h, 2 * w) = v;
                    y.at4(n, c, 2 * h, 2 * w + 1) = v;
                    y.at4(n, c, 2 * h + 1, 2 * w) = v;
                    y.at4(n, c, 2 * h + 1, 2 * w + 1) = v;
                }
    if (train) cached_shape_ = x.shape();
    return y;
}

Tensor NearestUpsample2x::backward(const Tensor& dy) {
    if (cached_shape_.empty())
        throw PreconditionError("upsample backward without cached forward");
    const std::size_t N = cached_shape_[0], C = cached_shape_[1];
    const std::size_t H = cached_shape_[2], W = cached_shape_[3];
    require_shape(dy, {N, C, 2 * H, 2 * W}, "upsample upstream gradient");
    Tensor dx(cached_shape_);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    dx.at4(n, c, h, w) = dy.at4(n, c, 2 * h, 2 * w) +
                                         dy.at4(n, c, 2 * h, 2 * w + 1) +
                                         dy.at4(n, c, 2 * h + 1, 2 * w) +
                                         dy.at4(n, c, 2 * h + 1, 2 * w + 1);
    return dx;
}

// ---------------------------------------------------------------- ResBlock

ResBlock::ResBlock(std::size_t channels)
    : conv1_(channels, channels, 3, 1, 1), conv2_(channels, channels, 3, 1, 1) {}

void ResBlock::init_he(Rng& rng) {
    conv1_.init_he(rng);
    conv2_.init_he(rng);
}

Tensor ResBlock::forward(const Tensor& x, bool train) {
    Tensor h = conv2_.forward(relu1_.forward(conv1_.forward(x, train), train), train);
    h.add_(x);
    Tensor y = h;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < 0.0) y[i] = 0.0;
    if (train) cached_sum_ = std::move(h);
    return y;
}

Tensor ResBlock::backward(const Tensor& dy) {
    if (cached_sum_.empty())
        throw PreconditionError("resblock backward without cached forward");
    Tensor dsum = dy;
    for (std::size_t i = 0; i < dsum.size(); ++i)
        if (cached_sum_[i] <= 0.0) dsum[i] = 0.0;
    Tensor dbranch = conv1_.backward(relu1_.backward(conv2_.backward(dsum)));
    dbranch.add_(dsum);
    return dbranch;
}

std::vector<ParamView> ResBlock::params() {
    std::vector<ParamView> out = prefix_params("conv1", conv1_.params());
    for (ParamView& p : prefix_params("conv2", conv2_.params()))
        out.push_back(p);
    return out;
}

// ---------------------------------------------------------------- Sequential

void Sequential::add(const std::string& name, std::unique_ptr<Layer> layer) {
    items_.emplace_back(name, std::move(layer));
}

Tensor Sequential::forward(const Tensor& x, bool train) {
    Tensor h = x;
    for (auto& [name, layer] : items_)
        h = layer->forward(h, train);
    return h;
}

Tensor Sequential::backward(const Tensor& dy) {
    Tensor g = dy;
    for (auto it = items_.rbegin(); it != items_.rend(); ++it)
        g = it->second->backward(g);
    return g;
}

std::vector<ParamView> Sequential::params() {
    std::vector<ParamView> out;
    for (auto& [name, layer] : items_)
        for (ParamView& p : prefix_params(name, layer->params()))
            out.push_back(p);
    return out;
}

// ---------------------------------------------------------------- helpers

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_ndim(a, 4, "concat operand");
    require_ndim(b, 4, "concat operand");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat: operands disagree outside the channel axis: " +
                         a.shape_str() + " vs " + b.shape_str());
    const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::size_t HW = a.dim(2) * a.dim(3);
    Tensor y({N, Ca + Cb, a.dim(2), a.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy(a.data() + n * Ca * HW, a.data() + (n + 1) * Ca * HW,
                  y.data() + n * (Ca + Cb) * HW);
        std::copy(b.data() + n * Cb * HW, b.data() + (n + 1) * Cb * HW,
                  y.data() + n * (Ca + Cb) * HW + Ca * HW);
    }
    return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& dy, std::size_t a_channels) {
    require_ndim(dy, 4, "split operand");
    if (a_channels >= dy.dim(1))
        throw ShapeError("split: channel split point out of range");
    const std::size_t N = dy.dim(0), C = dy.dim(1);
    const std::size_t Cb = C - a_channels;
    const std::size_t HW = dy.dim(2) * dy.dim(3);
    Tensor da({N, a_channels, dy.dim(2), dy.dim(3)});
    Tensor db({N, Cb, dy.dim(2), dy.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy(dy.data() + n * C * HW, dy.data() + n * C * HW + a_channels * HW,
                  da.data() + n * a_channels * HW);
        std::copy(dy.data() + n * C * HW + a_channels * HW, dy.data() + (n + 1) * C * HW,
                  db.data() + n * Cb * HW);
    }
    return {std::move(da), std::move(db)};
}

std::vector<ParamView> prefix_params(const std::string& prefix,
                                     std::vector<ParamView> views) {
    for (ParamView& p : views)
        p.name = prefix + "." + p.name;
    return views;
}

std::size_t param_count(const std::vector<ParamView>& views) {
    std::size_t n = 0;
    for (const ParamView& p : views) n += p.n;
    return n;
}

}
