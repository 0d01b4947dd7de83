#pragma once

#include <string>

#include "noboxlab/models/classifier.hpp"
#include "noboxlab/nn/layers.hpp"

namespace noboxlab {

enum class TargetProvenance { standard, pgd10_robust };

const char* target_provenance_name(TargetProvenance p);
TargetProvenance target_provenance_from_name(const std::string& name);

struct TargetMeta {
    std::size_t n_classes = 0;
    ImageShape input_size{32, 32, 3};
    TargetProvenance provenance = TargetProvenance::standard;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    std::string config_hash;
};

// Independent classifier used as the attacked model: a 3-stage convolutional
// network with a biased linear output, architecturally unrelated to the
// surrogate encoder.
class TargetModel : public Classifier {
public:
    TargetModel(TargetMeta meta);

    void init(Rng& rng);

    TargetMeta& meta() { return meta_; }
    const TargetMeta& meta() const { return meta_; }

    std::size_t n_classes() const override { return meta_.n_classes; }
    const ImageShape& input_size() const override { return meta_.input_size; }
    Tensor logits(const Tensor& x) override;
    Tensor input_gradient(const Tensor& x, const LabelVector& labels,
                          double* loss_out = nullptr) override;

    // Training-mode pass: caches intermediates, then backward() accumulates
    // parameter gradients and returns dL/dx.
    Tensor train_logits(const Tensor& x);
    Tensor backward(const Tensor& dlogits);
    std::vector<ParamView> params();
    void zero_grad();

    std::string weights_digest();

private:
    TargetMeta meta_;
    Sequential net_;
};

TargetModel build_target(std::size_t n_classes, ImageShape input_size,
                         std::uint64_t seed);

std::string persist_target(TargetModel& model, const std::string& path);
TargetModel restore_target(const std::string& path);

}
