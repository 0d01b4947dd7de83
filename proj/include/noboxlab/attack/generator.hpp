#pragma once

#include <memory>
#include <string>
#include <vector>

#include "noboxlab/data/dataset.hpp"
#include "noboxlab/models/surrogate.hpp"
#include "noboxlab/nn/layers.hpp"
#include "noboxlab/train/margin.hpp"

namespace noboxlab {

// How the raw generator residual is squeezed into the L-infinity ball.
enum class BoundMode { tanh_scale, hard_clip };
std::string bound_mode_name(BoundMode mode);
BoundMode bound_mode_from_name(const std::string& name);

struct AttackBudget {
    double epsilon = 16.0 / 255.0;  // L-infinity radius in pixel units
    BoundMode bound_mode = BoundMode::tanh_scale;

    static AttackBudget make(double epsilon,
                             BoundMode bound_mode = BoundMode::tanh_scale);
};

struct GeneratorSpec {
    ImageShape input_size;
    std::size_t depth = 3;        // down/up stages; spatial size halves per stage
    std::size_t base_width = 32;  // channels after the stem

    // Requires height and width divisible by 2^depth.
    static GeneratorSpec make(const ImageShape& input_size, std::size_t depth,
                              std::size_t base_width);
};

// Encoder-decoder residual network with channel-concat skip connections and
// one residual block per stage. The final convolution starts zero-initialized,
// so a fresh generator is the identity mapping after bounding.
class GeneratorModel {
public:
    GeneratorModel(const GeneratorSpec& spec, std::uint64_t seed);

    const GeneratorSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t& epoch() { return epoch_; }
    std::size_t epoch() const { return epoch_; }
    std::string& config_hash() { return config_hash_; }

    // [N, C, H, W] -> unbounded residual of the same shape.
    Tensor forward(const Tensor& x, bool train);
    // Pushes d(loss)/d(residual) back to d(loss)/d(input); accumulates grads.
    Tensor backward(const Tensor& dres);

    std::vector<ParamView> params();
    std::string weights_digest();

private:
    struct DownStage {
        std::unique_ptr<Conv2d> conv;
        std::unique_ptr<ReLU> relu;
        std::unique_ptr<ResBlock> res;
    };
    struct UpStage {
        std::unique_ptr<NearestUpsample2x> ups;
        std::unique_ptr<Conv2d> conv;  // consumes concat(upsampled, skip)
        std::unique_ptr<ReLU> relu;
        std::unique_ptr<ResBlock> res;
    };

    GeneratorSpec spec_;
    std::uint64_t seed_ = 0;
    std::size_t epoch_ = 0;
    std::string config_hash_;

    std::unique_ptr<Conv2d> stem_;
    std::unique_ptr<ReLU> stem_relu_;
    std::vector<DownStage> down_;
    std::vector<UpStage> up_;
    std::unique_ptr<Conv2d> final_;
};

GeneratorModel build_generator(const GeneratorSpec& spec, std::uint64_t seed);
std::string persist_generator(GeneratorModel& g, const std::string& path);
GeneratorModel restore_generator(const std::string& path);

struct AdversarialBatch {
    ImageBatch adversarial;                // x' with the source ids attached
    std::vector<std::string> source_ids;   // ids of the clean inputs
    double max_abs_delta = 0.0;            // realized ||x' - x||_inf
};

// Applies the budget to a raw residual: tanh-scale squashes smoothly into
// [-eps, eps]; hard-clip truncates. Both then clip pixels to [0, 1].
Tensor bound_perturbation(const Tensor& raw, const Tensor& x,
                          const AttackBudget& budget);
// d(loss)/d(raw) given d(loss)/d(x'); zero where a clip is active.
Tensor bound_perturbation_backward(const Tensor& raw, const Tensor& x,
                                   const AttackBudget& budget,
                                   const Tensor& dxp);

// L_c = -(mean cross-entropy of the surrogate on x_adv): minimizing it pushes
// the surrogate off the true labels. Optionally returns d(L_c)/d(x_adv).
double generator_loss(SurrogateModel& surrogate, const Tensor& x_adv,
                      const LabelVector& labels, Tensor* dx_adv = nullptr);

// Trains the generator against a frozen surrogate. The trace's acc column
// records the fooling rate (1 - surrogate accuracy on x'); min_margin is n/a.
TrainingTrace train_generator(GeneratorModel& g, SurrogateModel& surrogate,
                              const InMemoryDataset& data,
                              const TrainSchedule& sched,
                              const AttackBudget& budget);

// Crafts x' for a batch: pure function of (generator weights, batch, budget).
AdversarialBatch craft_adversarial(GeneratorModel& g, const ImageBatch& batch,
                                   const AttackBudget& budget);

// Ids of samples whose perturbation exceeds epsilon + slack or whose pixels
// leave [0, 1]. Empty result = budget satisfied.
std::vector<std::string> budget_violations(const ImageBatch& clean,
                                           const ImageBatch& adv,
                                           double epsilon, double slack);

}
