#include "noboxlab/attack/pgd.hpp"

#include <algorithm>
#include <cmath>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/rng.hpp"

namespace noboxlab {

PgdConfig PgdConfig::make(double epsilon, std::size_t steps, double step_size,
                          bool random_start, std::uint64_t seed) {
    if (!(epsilon >= 0.0) || !(epsilon <= 1.0))
        throw DomainError("epsilon must lie in [0, 1], got " +
                          std::to_string(epsilon));
    if (epsilon > 0.0 && !(step_size > 0.0))
        throw DomainError("step_size must be positive, got " +
                          std::to_string(step_size));
    if (!(step_size >= 0.0))
        throw DomainError("step_size must be nonnegative");
    PgdConfig cfg;
    cfg.epsilon = epsilon;
    cfg.steps = steps;
    cfg.step_size = step_size;
    cfg.random_start = random_start;
    cfg.seed = seed;
    return cfg;
}

PgdConfig PgdConfig::standard(double epsilon, std::uint64_t seed) {
    return make(epsilon, 10, epsilon / 4.0, false, seed);
}

PgdConfig PgdConfig::fgsm(double epsilon, std::uint64_t seed) {
    return make(epsilon, 1, epsilon, false, seed);
}

AdversarialBatch pgd_attack(Classifier& model, const ImageBatch& batch,
                            const LabelVector& labels, const PgdConfig& cfg) {
    const Tensor& x0 = batch.pixels;
    const ImageShape& want = model.input_size();
    if (x0.ndim() != 4 || x0.dim(1) != want.channels ||
        x0.dim(2) != want.height || x0.dim(3) != want.width)
        throw ShapeError("batch " + x0.shape_str() +
                         " does not match the model input size");
    if (labels.labels.size() != x0.dim(0))
        throw ShapeError("label count does not match batch");

    const double eps = cfg.epsilon;
    Tensor x = x0;
    if (cfg.random_start && eps > 0.0) {
        Rng rng(Rng::mix(cfg.seed, 0x504744ull));
        for (std::size_t i = 0; i < x.size(); ++i) {
            double v = x0[i] + rng.uniform(-eps, eps);
            x[i] = std::clamp(std::clamp(v, x0[i] - eps, x0[i] + eps), 0.0,
                              1.0);
        }
    }

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        double loss = 0.0;
        Tensor grad = model.input_gradient(x, labels, &loss);
        bool finite = std::isfinite(loss);
        for (std::size_t i = 0; finite && i < grad.size(); ++i)
            if (!std::isfinite(grad[i])) finite = false;
        if (!finite)
            throw TrainingError("non-finite gradient at attack step " +
                                std::to_string(step));
        for (std::size_t i = 0; i < x.size(); ++i) {
            double sign =
                grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
            double v = x[i] + cfg.step_size * sign;
            v = std::clamp(v, x0[i] - eps, x0[i] + eps);
            x[i] = std::clamp(v, 0.0, 1.0);
        }
    }

    double maxd = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        maxd = std::max(maxd, std::abs(x[i] - x0[i]));
    AdversarialBatch out;
    out.adversarial = ImageBatch::make(std::move(x), batch.ids);
    out.source_ids = batch.ids;
    out.max_abs_delta = maxd;
    return out;
}

}
