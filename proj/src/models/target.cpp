#include "noboxlab/models/target.hpp"

#include <memory>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/models/checkpoint.hpp"
#include "noboxlab/nn/loss.hpp"

namespace noboxlab {

const char* target_provenance_name(TargetProvenance p) {
    switch (p) {
        case TargetProvenance::standard: return "standard";
        case TargetProvenance::pgd10_robust: return "pgd10-robust";
    }
    return "unknown";
}

TargetProvenance target_provenance_from_name(const std::string& name) {
    if (name == "standard") return TargetProvenance::standard;
    if (name == "pgd10-robust") return TargetProvenance::pgd10_robust;
    throw DomainError("unknown target provenance '" + name + "'");
}

namespace {

class ShiftScale : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = (y[i] - 0.5) * 2.0;
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        dx.scale_(2.0);
        return dx;
    }
};

}

TargetModel::TargetModel(TargetMeta meta) : meta_(std::move(meta)) {
    if (meta_.n_classes < 1) throw DomainError("target needs at least one class");
    if (meta_.input_size.height < 8 || meta_.input_size.width < 8)
        throw DomainError("target model needs inputs of at least 8x8");
    net_.add("std", std::make_unique<ShiftScale>());
    net_.add("c1", std::make_unique<Conv2d>(meta_.input_size.channels, 12, 3, 1, 1));
    net_.add("a1", std::make_unique<ReLU>());
    net_.add("c2", std::make_unique<Conv2d>(12, 24, 3, 2, 1));
    net_.add("a2", std::make_unique<ReLU>());
    net_.add("c3", std::make_unique<Conv2d>(24, 48, 3, 2, 1));
    net_.add("a3", std::make_unique<ReLU>());
    net_.add("gap", std::make_unique<GlobalAvgPool>());
    net_.add("fc", std::make_unique<Linear>(48, meta_.n_classes));
}

void TargetModel::init(Rng& rng) {
    for (std::size_t i = 0; i < net_.size(); ++i) {
        if (auto* conv = dynamic_cast<Conv2d*>(&net_.layer(i))) conv->init_he(rng);
        if (auto* lin = dynamic_cast<Linear*>(&net_.layer(i))) lin->init_he(rng);
    }
}

Tensor TargetModel::logits(const Tensor& x) {
    return net_.forward(x, false);
}

Tensor TargetModel::train_logits(const Tensor& x) {
    return net_.forward(x, true);
}

Tensor TargetModel::backward(const Tensor& dlogits) {
    return net_.backward(dlogits);
}

Tensor TargetModel::input_gradient(const Tensor& x, const LabelVector& labels,
                                   double* loss_out) {
    Tensor z = net_.forward(x, true);
    Tensor dz;
    double loss = cross_entropy(z, labels, &dz);
    if (loss_out) *loss_out = loss;
    return net_.backward(dz);
}

std::vector<ParamView> TargetModel::params() {
    return net_.params();
}

void TargetModel::zero_grad() {
    net_.zero_grad();
}

std::string TargetModel::weights_digest() {
    return params_digest(params());
}

TargetModel build_target(std::size_t n_classes, ImageShape input_size,
                         std::uint64_t seed) {
    TargetMeta meta;
    meta.n_classes = n_classes;
    meta.input_size = input_size;
    meta.seed = seed;
    TargetModel model(std::move(meta));
    Rng rng(Rng::mix(seed, 0x5447544eull));
    model.init(rng);
    return model;
}

std::string persist_target(TargetModel& model, const std::string& path) {
    nlohmann::json meta;
    meta["n_classes"] = model.meta().n_classes;
    meta["input_size"] = {model.meta().input_size.height,
                          model.meta().input_size.width,
                          model.meta().input_size.channels};
    meta["provenance"] = target_provenance_name(model.meta().provenance);
    meta["seed"] = model.meta().seed;
    meta["epoch"] = model.meta().epoch;
    meta["config_hash"] = model.meta().config_hash;
    return write_checkpoint(path, model.params(), "target", std::move(meta));
}

TargetModel restore_target(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path, "target");
    TargetMeta meta;
    meta.n_classes = ck.metadata.at("n_classes").get<std::size_t>();
    auto sz = ck.metadata.at("input_size");
    meta.input_size = ImageShape{sz.at(0).get<std::size_t>(),
                                 sz.at(1).get<std::size_t>(),
                                 sz.at(2).get<std::size_t>()};
    meta.provenance =
        target_provenance_from_name(ck.metadata.at("provenance").get<std::string>());
    meta.seed = ck.metadata.at("seed").get<std::uint64_t>();
    meta.epoch = ck.metadata.at("epoch").get<std::size_t>();
    meta.config_hash = ck.metadata.at("config_hash").get<std::string>();
    TargetModel model(std::move(meta));
    restore_params(ck, model.params());
    return model;
}

}
