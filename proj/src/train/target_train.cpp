#include "noboxlab/train/target_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/hash.hpp"
#include "noboxlab/nn/loss.hpp"
#include "noboxlab/nn/optim.hpp"

namespace noboxlab {

namespace {

std::string target_config_hash(const TrainSchedule& sched,
                               const PgdConfig* pgd) {
    char buf[320];
    if (pgd == nullptr) {
        std::snprintf(buf, sizeof(buf),
                      "mode=standard;opt=%s;lr=%.17g;lrmin=%.17g;bs=%zu;"
                      "epochs=%zu;anneal=%d;seed=%llu",
                      optimizer_kind_name(sched.optimizer).c_str(),
                      sched.lr_init, sched.lr_min, sched.batch_size,
                      sched.epochs, sched.anneal ? 1 : 0,
                      static_cast<unsigned long long>(sched.seed));
    } else {
        std::snprintf(buf, sizeof(buf),
                      "mode=adversarial;eps=%.17g;steps=%zu;step=%.17g;"
                      "rand=%d;aseed=%llu;opt=%s;lr=%.17g;lrmin=%.17g;bs=%zu;"
                      "epochs=%zu;anneal=%d;seed=%llu",
                      pgd->epsilon, pgd->steps, pgd->step_size,
                      pgd->random_start ? 1 : 0,
                      static_cast<unsigned long long>(pgd->seed),
                      optimizer_kind_name(sched.optimizer).c_str(),
                      sched.lr_init, sched.lr_min, sched.batch_size,
                      sched.epochs, sched.anneal ? 1 : 0,
                      static_cast<unsigned long long>(sched.seed));
    }
    return fnv1a64_hex(std::string(buf));
}

TargetModel train_impl(const InMemoryDataset& data, const PgdConfig* pgd,
                       const TrainSchedule& sched, TrainingTrace* trace_out) {
    if (data.size() == 0) throw DomainError("training set is empty");
    TargetModel model =
        build_target(data.n_classes(), data.image_size(), sched.seed);
    if (pgd != nullptr)
        model.meta().provenance = TargetProvenance::pgd10_robust;
    model.meta().config_hash = target_config_hash(sched, pgd);

    TrainingTrace trace;
    trace.initial_min_margin = std::numeric_limits<double>::quiet_NaN();

    if (sched.epochs > 0) {
        std::unique_ptr<Optimizer> opt;
        if (sched.optimizer == OptimizerKind::sgd)
            opt = std::make_unique<Sgd>(0.9, 0.0);
        else
            opt = std::make_unique<AdamW>(0.9, 0.999, 1e-8, 0.0);
        std::vector<ParamView> params = model.params();

        std::size_t global_step = 0;
        for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
            double lr = sched.anneal
                            ? cosine_annealing_lr(sched.lr_init, sched.lr_min,
                                                  epoch, sched.epochs)
                            : sched.lr_init;
            std::vector<Batch> batches = data.batches(
                sched.batch_size, Rng::mix(sched.seed, 0x746774u + epoch));
            double loss_sum = 0.0;
            std::size_t correct = 0;
            for (const Batch& b : batches) {
                const std::size_t bn = b.images.pixels.dim(0);
                Tensor x_train = b.images.pixels;
                if (pgd != nullptr) {
                    PgdConfig step_cfg = *pgd;
                    step_cfg.seed = Rng::mix(pgd->seed, global_step);
                    x_train = pgd_attack(model, b.images, b.labels, step_cfg)
                                  .adversarial.pixels;
                }
                model.zero_grad();
                Tensor z = model.train_logits(x_train);
                Tensor dz;
                double loss = cross_entropy(z, b.labels, &dz);
                if (!std::isfinite(loss))
                    throw TrainingError("non-finite loss at training step " +
                                        std::to_string(global_step));
                model.backward(dz);
                opt->step(params, lr);

                std::vector<std::size_t> pred = argmax_rows(z);
                for (std::size_t i = 0; i < bn; ++i)
                    if (pred[i] == b.labels.labels[i]) ++correct;
                loss_sum += loss * static_cast<double>(bn);
                ++global_step;
            }
            EpochRecord rec;
            rec.epoch = epoch + 1;
            rec.loss = loss_sum / static_cast<double>(data.size());
            rec.acc = static_cast<double>(correct) /
                      static_cast<double>(data.size());
            rec.lr = lr;
            rec.min_margin = std::numeric_limits<double>::quiet_NaN();
            trace.records.push_back(rec);
        }
        model.meta().epoch += sched.epochs;
    }

    if (trace_out != nullptr) *trace_out = std::move(trace);
    return model;
}

}  // namespace

TargetModel train_target(const InMemoryDataset& data,
                         const TrainSchedule& sched,
                         TrainingTrace* trace_out) {
    return train_impl(data, nullptr, sched, trace_out);
}

TargetModel adversarial_train(const InMemoryDataset& data,
                              const PgdConfig& pgd,
                              const TrainSchedule& sched,
                              TrainingTrace* trace_out) {
    return train_impl(data, &pgd, sched, trace_out);
}

}
