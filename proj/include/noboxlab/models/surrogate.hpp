#pragma once

#include <memory>
#include <string>

#include "noboxlab/geometry/embedding.hpp"
#include "noboxlab/models/classifier.hpp"
#include "noboxlab/models/encoder.hpp"

namespace noboxlab {

// Linear classification layer over unit embeddings: weight rows are unit-norm
// class directions, bias is identically zero (none is stored).
class SupervisoryHead {
public:
    SupervisoryHead(std::size_t n_classes, std::size_t d);

    void init(Rng& rng);   // random unit rows

    std::size_t n_classes() const { return W_.dim(0); }
    std::size_t dim() const { return W_.dim(1); }
    Tensor& W() { return W_; }
    const Tensor& W() const { return W_; }
    Tensor& grad() { return gW_; }

    std::vector<ParamView> params();

    // Restores the unit-row invariant after an optimizer step. Rows already
    // unit to a few ulp are left byte-identical, so a zero-length step
    // preserves parameters exactly.
    void renormalize_rows();

    // The class-anchor view of the weights.
    ClassAnchorSet anchors() const;

private:
    Tensor W_, gW_;
};

struct SurrogateMeta {
    EncoderSpec spec;                  // as requested at build time
    std::size_t n_classes = 0;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;             // fine-tuning epochs applied
    std::string config_hash;           // run configuration fingerprint
    double logit_scale = 30.0;         // s in the cosine-logit expansion
};

// Encoder plus supervisory head; logits are scaled cosines between unit
// embeddings and head rows.
class SurrogateModel : public Classifier {
public:
    SurrogateModel(std::unique_ptr<Encoder> encoder, SupervisoryHead head,
                   SurrogateMeta meta);

    Encoder& encoder() { return *encoder_; }
    SupervisoryHead& head() { return head_; }
    const SupervisoryHead& head() const { return head_; }
    SurrogateMeta& meta() { return meta_; }
    const SurrogateMeta& meta() const { return meta_; }

    std::size_t n_classes() const override { return head_.n_classes(); }
    const ImageShape& input_size() const override {
        return encoder_->spec().input_size;
    }
    Tensor logits(const Tensor& x) override;
    Tensor input_gradient(const Tensor& x, const LabelVector& labels,
                          double* loss_out = nullptr) override;

    // Embeddings straight off the encoder (no normalization).
    Tensor raw_embeddings(const Tensor& x, bool train);
    // Unit-norm embeddings, evaluation mode.
    EmbeddingBatch unit_embeddings(const Tensor& x);

    // All trainable state: encoder parameters under "enc.", head under "head.".
    std::vector<ParamView> params();

    std::string weights_digest();

private:
    std::unique_ptr<Encoder> encoder_;
    SupervisoryHead head_;
    SurrogateMeta meta_;
};

// Fresh surrogate with seed-determined initialization (head rows unit-norm).
SurrogateModel build_surrogate(const EncoderSpec& spec, std::size_t n_classes,
                               std::uint64_t seed);

// Checkpoint I/O (kind "surrogate"). Returns the content digest.
std::string persist_surrogate(SurrogateModel& model, const std::string& path);
SurrogateModel restore_surrogate(const std::string& path);

}
