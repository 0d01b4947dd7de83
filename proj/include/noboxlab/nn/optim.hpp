#pragma once

#include <cstddef>
#include <vector>

#include "noboxlab/nn/layers.hpp"

namespace noboxlab {

// Updates parameters in place from their accumulated gradients. One optimizer
// instance owns the moment state for a fixed parameter list; the list's sizes
// must not change between steps.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<ParamView>& params, double lr) = 0;
};

// Momentum SGD with coupled L2 weight decay: g <- g + wd*w, v <- mu*v + g,
// w <- w - lr*v.
class Sgd : public Optimizer {
public:
    explicit Sgd(double momentum = 0.9, double weight_decay = 0.0)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(const std::vector<ParamView>& params, double lr) override;

private:
    double momentum_, weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

// AdamW: Adam moments on the raw gradient plus decoupled decay
// w <- w - lr*wd*w.
class AdamW : public Optimizer {
public:
    explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                   double weight_decay = 0.0)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void step(const std::vector<ParamView>& params, double lr) override;

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Cosine annealing from lr_init down to lr_min across total_epochs; epoch is
// 0-based, so epoch 0 returns lr_init and epoch total_epochs would return
// lr_min.
double cosine_annealing_lr(double lr_init, double lr_min, std::size_t epoch,
                           std::size_t total_epochs);

}
