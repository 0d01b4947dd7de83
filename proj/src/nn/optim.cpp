#include "noboxlab/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

namespace {

void ensure_state(std::vector<std::vector<double>>& state,
                  const std::vector<ParamView>& params) {
    if (state.empty()) {
        state.reserve(params.size());
        for (const ParamView& p : params)
            state.emplace_back(p.n, 0.0);
        return;
    }
    if (state.size() != params.size())
        throw PreconditionError("optimizer: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state[i].size() != params[i].n)
            throw PreconditionError("optimizer: parameter size changed between steps");
}

}

void Sgd::step(const std::vector<ParamView>& params, double lr) {
    ensure_state(velocity_, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamView& p = params[i];
        std::vector<double>& v = velocity_[i];
        for (std::size_t j = 0; j < p.n; ++j) {
            double g = p.g[j] + weight_decay_ * p.w[j];
            v[j] = momentum_ * v[j] + g;
            p.w[j] -= lr * v[j];
        }
    }
}

void AdamW::step(const std::vector<ParamView>& params, double lr) {
    ensure_state(m_, params);
    ensure_state(v_, params);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamView& p = params[i];
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        for (std::size_t j = 0; j < p.n; ++j) {
            double g = p.g[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p.w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.w[j]);
        }
    }
}

double cosine_annealing_lr(double lr_init, double lr_min, std::size_t epoch,
                           std::size_t total_epochs) {
    if (total_epochs == 0) throw DomainError("cosine schedule: total_epochs must be positive");
    if (epoch > total_epochs)
        throw DomainError("cosine schedule: epoch " + std::to_string(epoch) +
                          " outside [0, " + std::to_string(total_epochs) + "]");
    double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

}
