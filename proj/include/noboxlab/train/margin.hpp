#pragma once

#include <optional>
#include <string>
#include <vector>

#include "noboxlab/data/dataset.hpp"
#include "noboxlab/models/surrogate.hpp"

namespace noboxlab {

// Additive-angular-margin loss settings: the target-class cosine is replaced
// by cos(alpha + m) before scaling every logit by s.
struct MarginConfig {
    double m = 0.15;            // angular margin, radians
    double s = 30.0;            // logit scale
    double numeric_eps = 1e-7;  // target-cosine clamp half-width

    static MarginConfig make(double m, double s, double numeric_eps = 1e-7);
};

enum class OptimizerKind { sgd, adamw };
std::string optimizer_kind_name(OptimizerKind k);
OptimizerKind optimizer_kind_from_name(const std::string& name);

struct TrainSchedule {
    OptimizerKind optimizer = OptimizerKind::sgd;
    double lr_init = 0.01;
    double lr_min = 0.0;
    std::size_t batch_size = 128;
    std::size_t epochs = 300;
    bool anneal = true;         // cosine decay lr_init -> lr_min over epochs
    std::uint64_t seed = 0;

    static TrainSchedule make(OptimizerKind optimizer, double lr_init,
                              double lr_min, std::size_t batch_size,
                              std::size_t epochs, bool anneal,
                              std::uint64_t seed);
};

struct EpochRecord {
    std::size_t epoch = 0;      // 1-based index of the completed epoch
    double loss = 0.0;          // sample-weighted mean loss over the epoch
    double acc = 0.0;           // train accuracy from margin-free cosines
    double lr = 0.0;            // learning rate used for the epoch
    double min_margin = 0.0;    // audit minimum after the epoch (NaN = n/a)
};

struct TrainingTrace {
    double initial_min_margin = 0.0;  // audit minimum before any step
    std::vector<EpochRecord> records; // one per epoch run
};

// CSV with header `epoch,loss,acc,lr,min_margin`; NaN margins print as "na".
void write_trace_csv(const TrainingTrace& trace, const std::string& path);

// Scaled-cosine logits with the additive angular margin on the target column.
// With m = 0 this is exactly s * (emb . W^T): no margin arithmetic, no clamp.
// Requires unit-norm embeddings and head rows.
Tensor arcface_logits(const EmbeddingBatch& emb, const SupervisoryHead& head,
                      const LabelVector& labels, const MarginConfig& cfg);

// Mean cross-entropy (natural log) of arcface_logits against the labels.
double arcface_loss(const EmbeddingBatch& emb, const SupervisoryHead& head,
                    const LabelVector& labels, const MarginConfig& cfg);

// Differentiable core used by the training loop: takes *raw* (unnormalized)
// embeddings and head rows, normalizes both internally, and returns the loss
// together with gradients with respect to the raw inputs. Finite-difference
// checks perturb the raw inputs directly.
struct ArcfaceGrads {
    double loss = 0.0;
    Tensor d_emb;    // [N, d] gradient w.r.t. raw embeddings
    Tensor d_head;   // [n, d] gradient w.r.t. raw head rows
    Tensor cosines;  // [N, n] margin-free unit-cosine matrix
};
ArcfaceGrads arcface_backward(const Tensor& raw_emb, const Tensor& head_w,
                              const LabelVector& labels,
                              const MarginConfig& cfg);

// Fingerprint of the training configuration, stored in model metadata.
std::string margin_config_hash(const MarginConfig& cfg,
                               const TrainSchedule& sched);

// Fine-tunes the surrogate in place with the margin loss. When a registry and
// guarded role are given, every training image's content hash is checked
// against that role first; any overlap aborts with the offending hashes.
TrainingTrace finetune_surrogate(SurrogateModel& model,
                                 const InMemoryDataset& data,
                                 const TrainSchedule& sched,
                                 const MarginConfig& cfg,
                                 const SplitRegistry* guard = nullptr,
                                 const std::string& guard_role = "");

// Minimum inter-class margin of the model's embeddings of `data` against its
// own head anchors (evaluation mode).
double audit_min_margin(SurrogateModel& model, const InMemoryDataset& data);

}
