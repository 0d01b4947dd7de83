#pragma once

#include <string>

#include "noboxlab/attack/generator.hpp"
#include "noboxlab/models/classifier.hpp"

namespace noboxlab {

struct PgdConfig {
    double epsilon = 16.0 / 255.0;  // L-infinity radius
    std::size_t steps = 10;
    double step_size = (16.0 / 255.0) / 4.0;
    bool random_start = false;      // true is the adversarial-training default
    std::uint64_t seed = 0;

    // step_size must be positive unless the ball is degenerate (epsilon 0).
    static PgdConfig make(double epsilon, std::size_t steps, double step_size,
                          bool random_start, std::uint64_t seed);
    // steps = 10, step_size = epsilon / 4, no random start.
    static PgdConfig standard(double epsilon, std::uint64_t seed);
    // The one-shot special case: steps = 1, step_size = epsilon.
    static PgdConfig fgsm(double epsilon, std::uint64_t seed);
};

// Iterative sign-gradient ascent on the model's cross-entropy, each iterate
// projected onto the epsilon-ball around the input and onto [0, 1].
// Deterministic given (model parameters, batch, config).
AdversarialBatch pgd_attack(Classifier& model, const ImageBatch& batch,
                            const LabelVector& labels, const PgdConfig& cfg);

}
