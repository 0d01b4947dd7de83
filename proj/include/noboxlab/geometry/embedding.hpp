#pragma once

#include <span>
#include <string>
#include <vector>

#include "noboxlab/core/tensor.hpp"
#include "noboxlab/data/dataset.hpp"

namespace noboxlab {

// Batch of d-dimensional embeddings, one per row. When unit_norm is set,
// every row's l2 norm is 1 within 1e-6 (validated at construction).
struct EmbeddingBatch {
    Tensor vectors;   // [N, d]
    bool unit_norm = false;

    static EmbeddingBatch make(Tensor vectors, bool unit_norm);

    std::size_t count() const { return vectors.dim(0); }
    std::size_t dim() const { return vectors.dim(1); }
    std::span<const double> row(std::size_t i) const {
        return {vectors.data() + i * dim(), dim()};
    }
};

enum class AnchorProvider { text_embedding, head_weights, explicit_anchors };

const char* anchor_provider_name(AnchorProvider p);

// One unit vector per class, the reference direction embeddings are compared
// against.
struct ClassAnchorSet {
    Tensor anchors;   // [n_classes, d], unit rows within 1e-6
    AnchorProvider provider = AnchorProvider::explicit_anchors;

    static ClassAnchorSet make(Tensor anchors, AnchorProvider provider);

    std::size_t n_classes() const { return anchors.dim(0); }
    std::size_t dim() const { return anchors.dim(1); }
    std::span<const double> anchor(std::size_t c) const {
        return {anchors.data() + c * dim(), dim()};
    }
};

struct ContrastiveConfig {
    double tau = 0.07;

    static ContrastiveConfig make(double tau);
};

enum class ContrastiveForm { softmax, relative, distance };

// <u,v> / (|u||v|), clamped to [-1, 1]. Zero-norm input is a domain error.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Similarity gap h(f, pos) - h(f, neg) for unit vectors; identical (to
// rounding) to the half-difference of squared Euclidean distances.
double margin_delta(std::span<const double> f, std::span<const double> pos,
                    std::span<const double> neg);

// Symmetric batch contrastive loss in one of three algebraically equivalent
// forms (distance form requires unit-norm batches). Natural log; each form
// takes an independent numeric path so their agreement is a real check.
double clip_contrastive_loss(const EmbeddingBatch& img, const EmbeddingBatch& txt,
                             const ContrastiveConfig& cfg, ContrastiveForm form);

struct ClassMarginStats {
    bool present = false;          // class has at least one sample
    std::size_t count = 0;
    double mean_own_similarity = 0.0;
    double max_other_similarity = 0.0;
    double min_margin = 0.0;
    double mean_margin = 0.0;
};

struct MarginAudit {
    std::vector<ClassMarginStats> per_class;
    // Minimum min_margin over present classes; NaN when nothing is present.
    double overall_min_margin = 0.0;
};

// Per-class separation statistics of embeddings against class anchors.
MarginAudit class_margin_audit(const EmbeddingBatch& embs, const LabelVector& labels,
                               const ClassAnchorSet& anchors);

// Columnar text export: header `id,label,e_0,...,e_{d-1}`, one row per sample,
// values at 12 significant digits.
void export_embeddings(const EmbeddingBatch& embs, const LabelVector& labels,
                       const std::vector<std::string>& ids, const std::string& path);

// l2 helpers shared by model and training code.
double l2_norm(std::span<const double> v);
void l2_normalize_rows(Tensor& m);   // [N, d]; zero rows are a domain error

}
