#include "noboxlab/attack/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/hash.hpp"
#include "noboxlab/models/checkpoint.hpp"
#include "noboxlab/nn/loss.hpp"
#include "noboxlab/nn/optim.hpp"

namespace noboxlab {

namespace {

std::string generator_config_hash(const TrainSchedule& sched,
                                  const AttackBudget& budget) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "eps=%.17g;bound=%s;opt=%s;lr=%.17g;lrmin=%.17g;bs=%zu;"
                  "epochs=%zu;anneal=%d;seed=%llu",
                  budget.epsilon, bound_mode_name(budget.bound_mode).c_str(),
                  optimizer_kind_name(sched.optimizer).c_str(), sched.lr_init,
                  sched.lr_min, sched.batch_size, sched.epochs,
                  sched.anneal ? 1 : 0,
                  static_cast<unsigned long long>(sched.seed));
    return fnv1a64_hex(std::string(buf));
}

}  // namespace

std::string bound_mode_name(BoundMode mode) {
    switch (mode) {
        case BoundMode::tanh_scale: return "tanh-scale";
        case BoundMode::hard_clip: return "hard-clip";
    }
    throw DomainError("unknown bound mode");
}

BoundMode bound_mode_from_name(const std::string& name) {
    if (name == "tanh-scale") return BoundMode::tanh_scale;
    if (name == "hard-clip") return BoundMode::hard_clip;
    throw DomainError("unknown bound mode '" + name +
                      "' (want tanh-scale|hard-clip)");
}

AttackBudget AttackBudget::make(double epsilon, BoundMode bound_mode) {
    if (!(epsilon >= 0.0) || !(epsilon <= 1.0))
        throw DomainError("epsilon must lie in [0, 1], got " +
                          std::to_string(epsilon));
    AttackBudget b;
    b.epsilon = epsilon;
    b.bound_mode = bound_mode;
    return b;
}

GeneratorSpec GeneratorSpec::make(const ImageShape& input_size,
                                  std::size_t depth, std::size_t base_width) {
    if (depth == 0) throw DomainError("generator depth must be positive");
    if (base_width == 0)
        throw DomainError("generator base width must be positive");
    std::size_t div = std::size_t{1} << depth;
    if (input_size.height % div != 0 || input_size.width % div != 0)
        throw DomainError("input " + std::to_string(input_size.height) + "x" +
                          std::to_string(input_size.width) +
                          " is not divisible by 2^depth = " +
                          std::to_string(div));
    GeneratorSpec s;
    s.input_size = input_size;
    s.depth = depth;
    s.base_width = base_width;
    return s;
}

GeneratorModel::GeneratorModel(const GeneratorSpec& spec, std::uint64_t seed)
    : spec_(spec), seed_(seed) {
    const std::size_t c = spec.input_size.channels;
    const std::size_t b = spec.base_width;
    Rng rng(Rng::mix(seed, 0x47454eull));

    stem_ = std::make_unique<Conv2d>(c, b, 3, 1, 1);
    stem_->init_he(rng);
    stem_relu_ = std::make_unique<ReLU>();

    for (std::size_t i = 0; i < spec.depth; ++i) {
        DownStage d;
        std::size_t win = b << i;
        std::size_t wout = b << (i + 1);
        d.conv = std::make_unique<Conv2d>(win, wout, 3, 2, 1);
        d.conv->init_he(rng);
        d.relu = std::make_unique<ReLU>();
        d.res = std::make_unique<ResBlock>(wout);
        d.res->init_he(rng);
        down_.push_back(std::move(d));
    }
    for (std::size_t j = 0; j < spec.depth; ++j) {
        std::size_t i = spec.depth - j;  // resolution level being restored
        std::size_t w_in = b << i;       // channels arriving from below
        std::size_t w_skip = b << (i - 1);
        UpStage u;
        u.ups = std::make_unique<NearestUpsample2x>();
        u.conv = std::make_unique<Conv2d>(w_in + w_skip, w_skip, 3, 1, 1);
        u.conv->init_he(rng);
        u.relu = std::make_unique<ReLU>();
        u.res = std::make_unique<ResBlock>(w_skip);
        u.res->init_he(rng);
        up_.push_back(std::move(u));
    }
    final_ = std::make_unique<Conv2d>(b, c, 3, 1, 1);
    final_->init_zero();
}

Tensor GeneratorModel::forward(const Tensor& x, bool train) {
    if (x.ndim() != 4 || x.dim(1) != spec_.input_size.channels ||
        x.dim(2) != spec_.input_size.height ||
        x.dim(3) != spec_.input_size.width)
        throw ShapeError("generator input " + x.shape_str() +
                         " does not match the configured image size");

    std::vector<Tensor> skips;
    Tensor h = stem_relu_->forward(stem_->forward(x, train), train);
    skips.push_back(h);
    for (DownStage& d : down_) {
        h = d.res->forward(d.relu->forward(d.conv->forward(h, train), train),
                           train);
        skips.push_back(h);
    }
    Tensor prev = skips.back();
    for (std::size_t j = 0; j < up_.size(); ++j) {
        std::size_t i = spec_.depth - j;
        UpStage& u = up_[j];
        Tensor cat =
            concat_channels(u.ups->forward(prev, train), skips[i - 1]);
        prev = u.res->forward(
            u.relu->forward(u.conv->forward(cat, train), train), train);
    }
    return final_->forward(prev, train);
}

Tensor GeneratorModel::backward(const Tensor& dres) {
    const std::size_t b = spec_.base_width;
    Tensor du = final_->backward(dres);

    std::vector<Tensor> skip_grads(spec_.depth);
    for (std::size_t jj = 0; jj < up_.size(); ++jj) {
        std::size_t j = up_.size() - 1 - jj;
        std::size_t i = spec_.depth - j;
        UpStage& u = up_[j];
        Tensor t =
            u.conv->backward(u.relu->backward(u.res->backward(du)));
        auto [d_up, d_skip] = split_channels(t, b << i);
        skip_grads[i - 1] = std::move(d_skip);
        du = u.ups->backward(d_up);
    }

    Tensor dh = std::move(du);  // gradient at the bottom feature map
    for (std::size_t ii = 0; ii < down_.size(); ++ii) {
        std::size_t i = down_.size() - 1 - ii;
        DownStage& d = down_[i];
        dh = d.conv->backward(d.relu->backward(d.res->backward(dh)));
        dh.add_(skip_grads[i]);
    }
    return stem_->backward(stem_relu_->backward(dh));
}

std::vector<ParamView> GeneratorModel::params() {
    std::vector<ParamView> out = prefix_params("stem", stem_->params());
    for (std::size_t i = 0; i < down_.size(); ++i) {
        std::string p = "down" + std::to_string(i);
        for (auto& v : prefix_params(p + ".conv", down_[i].conv->params()))
            out.push_back(v);
        for (auto& v : prefix_params(p + ".res", down_[i].res->params()))
            out.push_back(v);
    }
    for (std::size_t j = 0; j < up_.size(); ++j) {
        std::string p = "up" + std::to_string(j);
        for (auto& v : prefix_params(p + ".conv", up_[j].conv->params()))
            out.push_back(v);
        for (auto& v : prefix_params(p + ".res", up_[j].res->params()))
            out.push_back(v);
    }
    for (auto& v : prefix_params("final", final_->params())) out.push_back(v);
    return out;
}

std::string GeneratorModel::weights_digest() { return params_digest(params()); }

GeneratorModel build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
    return GeneratorModel(spec, seed);
}

std::string persist_generator(GeneratorModel& g, const std::string& path) {
    nlohmann::json meta;
    meta["spec"] = {{"height", g.spec().input_size.height},
                    {"width", g.spec().input_size.width},
                    {"channels", g.spec().input_size.channels},
                    {"depth", g.spec().depth},
                    {"base_width", g.spec().base_width}};
    meta["seed"] = g.seed();
    meta["epoch"] = g.epoch();
    meta["config_hash"] = g.config_hash();
    return write_checkpoint(path, g.params(), "generator", meta);
}

GeneratorModel restore_generator(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path, "generator");
    const nlohmann::json& sj = ck.metadata.at("spec");
    ImageShape shape{sj.at("height").get<std::size_t>(),
                     sj.at("width").get<std::size_t>(),
                     sj.at("channels").get<std::size_t>()};
    GeneratorSpec spec = GeneratorSpec::make(
        shape, sj.at("depth").get<std::size_t>(),
        sj.at("base_width").get<std::size_t>());
    GeneratorModel g(spec, ck.metadata.at("seed").get<std::uint64_t>());
    std::vector<ParamView> params = g.params();
    restore_params(ck, params);
    g.epoch() = ck.metadata.at("epoch").get<std::size_t>();
    g.config_hash() = ck.metadata.value("config_hash", "");
    return g;
}

Tensor bound_perturbation(const Tensor& raw, const Tensor& x,
                          const AttackBudget& budget) {
    if (raw.shape() != x.shape())
        throw ShapeError("residual shape " + raw.shape_str() +
                         " does not match input shape " + x.shape_str());
    Tensor out(x.shape());
    const double eps = budget.epsilon;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double delta = budget.bound_mode == BoundMode::tanh_scale
                           ? eps * std::tanh(raw[i])
                           : std::clamp(raw[i], -eps, eps);
        out[i] = std::clamp(x[i] + delta, 0.0, 1.0);
    }
    return out;
}

Tensor bound_perturbation_backward(const Tensor& raw, const Tensor& x,
                                   const AttackBudget& budget,
                                   const Tensor& dxp) {
    if (raw.shape() != x.shape() || dxp.shape() != x.shape())
        throw ShapeError("bound backward shape mismatch");
    Tensor draw(raw.shape());
    const double eps = budget.epsilon;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double factor;
        double pre;
        if (budget.bound_mode == BoundMode::tanh_scale) {
            double t = std::tanh(raw[i]);
            pre = x[i] + eps * t;
            factor = eps * (1.0 - t * t);
        } else {
            pre = x[i] + std::clamp(raw[i], -eps, eps);
            factor = (raw[i] > -eps && raw[i] < eps) ? 1.0 : 0.0;
        }
        if (!(pre > 0.0 && pre < 1.0)) factor = 0.0;  // pixel clip active
        draw[i] = dxp[i] * factor;
    }
    return draw;
}

double generator_loss(SurrogateModel& surrogate, const Tensor& x_adv,
                      const LabelVector& labels, Tensor* dx_adv) {
    double ce = 0.0;
    Tensor g = surrogate.input_gradient(x_adv, labels, &ce);
    if (dx_adv != nullptr) {
        g.scale_(-1.0);
        *dx_adv = std::move(g);
    }
    return -ce;
}

TrainingTrace train_generator(GeneratorModel& g, SurrogateModel& surrogate,
                              const InMemoryDataset& data,
                              const TrainSchedule& sched,
                              const AttackBudget& budget) {
    if (data.size() == 0) throw DomainError("training set is empty");
    if (data.n_classes() != surrogate.n_classes())
        throw DomainError("dataset has " + std::to_string(data.n_classes()) +
                          " classes but the surrogate head has " +
                          std::to_string(surrogate.n_classes()));

    const std::string frozen = surrogate.weights_digest();
    TrainingTrace trace;
    trace.initial_min_margin = std::numeric_limits<double>::quiet_NaN();
    if (sched.epochs == 0) {
        g.config_hash() = generator_config_hash(sched, budget);
        return trace;
    }

    std::unique_ptr<Optimizer> opt;
    if (sched.optimizer == OptimizerKind::sgd)
        opt = std::make_unique<Sgd>(0.9, 0.0);
    else
        opt = std::make_unique<AdamW>(0.9, 0.999, 1e-8, 0.0);
    std::vector<ParamView> params = g.params();

    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
        double lr = sched.anneal
                        ? cosine_annealing_lr(sched.lr_init, sched.lr_min,
                                              epoch, sched.epochs)
                        : sched.lr_init;
        std::vector<Batch> batches = data.batches(
            sched.batch_size, Rng::mix(sched.seed, 0x67656eu + epoch));
        double loss_sum = 0.0;
        std::size_t fooled = 0;
        for (const Batch& b : batches) {
            const std::size_t bn = b.images.pixels.dim(0);
            for (ParamView& pv : params)
                std::fill(pv.g, pv.g + pv.n, 0.0);

            Tensor res = g.forward(b.images.pixels, true);
            Tensor xp = bound_perturbation(res, b.images.pixels, budget);
            Tensor dxp;
            double lc = generator_loss(surrogate, xp, b.labels, &dxp);
            if (!std::isfinite(lc))
                throw TrainingError("non-finite loss at training step " +
                                    std::to_string(global_step));
            Tensor draw =
                bound_perturbation_backward(res, b.images.pixels, budget, dxp);
            g.backward(draw);
            opt->step(params, lr);

            std::vector<std::size_t> pred =
                argmax_rows(surrogate.logits(xp));
            for (std::size_t i = 0; i < bn; ++i)
                if (pred[i] != b.labels.labels[i]) ++fooled;
            loss_sum += lc * static_cast<double>(bn);
            ++global_step;
        }
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.loss = loss_sum / static_cast<double>(data.size());
        rec.acc =
            static_cast<double>(fooled) / static_cast<double>(data.size());
        rec.lr = lr;
        rec.min_margin = std::numeric_limits<double>::quiet_NaN();
        trace.records.push_back(rec);
    }

    if (surrogate.weights_digest() != frozen)
        throw TrainingError(
            "surrogate parameters changed during generator training");
    g.epoch() += sched.epochs;
    g.config_hash() = generator_config_hash(sched, budget);
    return trace;
}

AdversarialBatch craft_adversarial(GeneratorModel& g, const ImageBatch& batch,
                                   const AttackBudget& budget) {
    Tensor res = g.forward(batch.pixels, false);
    Tensor xp = bound_perturbation(res, batch.pixels, budget);
    double maxd = 0.0;
    for (std::size_t i = 0; i < xp.size(); ++i)
        maxd = std::max(maxd, std::abs(xp[i] - batch.pixels[i]));
    AdversarialBatch out;
    out.adversarial = ImageBatch::make(xp, batch.ids);
    out.source_ids = batch.ids;
    out.max_abs_delta = maxd;
    return out;
}

std::vector<std::string> budget_violations(const ImageBatch& clean,
                                           const ImageBatch& adv,
                                           double epsilon, double slack) {
    if (clean.pixels.shape() != adv.pixels.shape())
        throw ShapeError("clean and adversarial batches differ in shape");
    if (clean.ids != adv.ids)
        throw PreconditionError(
            "clean and adversarial batches are not aligned by id");
    const std::size_t n = clean.pixels.dim(0);
    const std::size_t per =
        n == 0 ? 0 : clean.pixels.size() / n;
    std::vector<std::string> bad;
    for (std::size_t i = 0; i < n; ++i) {
        bool ok = true;
        for (std::size_t k = 0; k < per && ok; ++k) {
            double c = clean.pixels[i * per + k];
            double a = adv.pixels[i * per + k];
            if (std::abs(a - c) > epsilon + slack) ok = false;
            if (a < 0.0 || a > 1.0) ok = false;
        }
        if (!ok) bad.push_back(clean.ids[i]);
    }
    return bad;
}

}
