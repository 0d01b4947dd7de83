#include "noboxlab/geometry/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "noboxlab/core/errors.hpp"

namespace noboxlab {

namespace {

void require_unit_rows(const Tensor& m, double tol, const std::string& what) {
    const std::size_t n = m.dim(0), d = m.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = l2_norm({m.data() + i * d, d});
        if (std::fabs(norm - 1.0) > tol)
            throw PreconditionError(what + ": row " + std::to_string(i) +
                                    " has norm " + std::to_string(norm) +
                                    ", expected 1 within " + std::to_string(tol));
    }
}

double dot(std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

// log(sum(exp(v))) with max subtraction.
double log_sum_exp(const std::vector<double>& v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}

// ---------------------------------------------------------------- types

EmbeddingBatch EmbeddingBatch::make(Tensor vectors, bool unit_norm) {
    require_ndim(vectors, 2, "embedding batch");
    if (vectors.dim(0) == 0 && unit_norm)
        return EmbeddingBatch{std::move(vectors), unit_norm};
    if (unit_norm) require_unit_rows(vectors, 1e-6, "embedding batch");
    return EmbeddingBatch{std::move(vectors), unit_norm};
}

const char* anchor_provider_name(AnchorProvider p) {
    switch (p) {
        case AnchorProvider::text_embedding: return "text-embedding";
        case AnchorProvider::head_weights: return "head-weights";
        case AnchorProvider::explicit_anchors: return "explicit";
    }
    return "unknown";
}

ClassAnchorSet ClassAnchorSet::make(Tensor anchors, AnchorProvider provider) {
    require_ndim(anchors, 2, "class anchor set");
    require_unit_rows(anchors, 1e-6, "class anchor set");
    return ClassAnchorSet{std::move(anchors), provider};
}

ContrastiveConfig ContrastiveConfig::make(double tau) {
    if (!(tau > 0.0))
        throw DomainError("temperature must be positive, got " + std::to_string(tau));
    return ContrastiveConfig{tau};
}

// ---------------------------------------------------------------- similarity

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void l2_normalize_rows(Tensor& m) {
    require_ndim(m, 2, "normalize rows");
    const std::size_t n = m.dim(0), d = m.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = l2_norm({m.data() + i * d, d});
        if (norm == 0.0)
            throw DomainError("cannot normalize zero row " + std::to_string(i));
        for (std::size_t j = 0; j < d; ++j) m.data()[i * d + j] /= norm;
    }
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw ShapeError("cosine: dimension mismatch " + std::to_string(u.size()) +
                         " vs " + std::to_string(v.size()));
    double nu = l2_norm(u), nv = l2_norm(v);
    if (nu == 0.0 || nv == 0.0)
        throw DomainError("cosine undefined for zero-norm input");
    double c = dot(u, v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

double margin_delta(std::span<const double> f, std::span<const double> pos,
                    std::span<const double> neg) {
    if (f.size() != pos.size() || f.size() != neg.size())
        throw ShapeError("margin: dimension mismatch");
    for (auto [v, name] : {std::pair{f, "embedding"}, {pos, "positive anchor"},
                           {neg, "negative anchor"}}) {
        double n = l2_norm(v);
        if (std::fabs(n - 1.0) > 1e-6)
            throw PreconditionError(std::string("margin requires unit-norm ") + name +
                                    ", got norm " + std::to_string(n));
    }
    return dot(f, pos) - dot(f, neg);
}

// ---------------------------------------------------------------- contrastive

double clip_contrastive_loss(const EmbeddingBatch& img, const EmbeddingBatch& txt,
                             const ContrastiveConfig& cfg, ContrastiveForm form) {
    ContrastiveConfig::make(cfg.tau);
    const std::size_t N = img.count(), d = img.dim();
    if (N != txt.count())
        throw ShapeError("contrastive loss: batch sizes differ, " + std::to_string(N) +
                         " vs " + std::to_string(txt.count()));
    if (d != txt.dim())
        throw ShapeError("contrastive loss: embedding dims differ");
    if (N < 1) throw DomainError("contrastive loss needs N >= 1");

    if (form == ContrastiveForm::distance) {
        if (!img.unit_norm || !txt.unit_norm)
            throw PreconditionError(
                "distance-form contrastive loss requires unit-norm batches");
        // Similarity gaps re-expressed through squared Euclidean distances:
        // h(a,b) - h(a,c) = (|a-c|^2 - |a-b|^2) / 2 on the unit sphere.
        std::vector<std::vector<double>> d2(N, std::vector<double>(N));
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    double diff = img.row(i)[k] - txt.row(j)[k];
                    s += diff * diff;
                }
                d2[i][j] = s;
            }
        double total = 0.0;
        std::vector<double> ex(N);
        for (std::size_t i = 0; i < N; ++i) {
            // Text i against all images j.
            for (std::size_t j = 0; j < N; ++j)
                ex[j] = (d2[i][i] - d2[j][i]) / (2.0 * cfg.tau);
            total += log_sum_exp(ex);
            // Image i against all texts j.
            for (std::size_t j = 0; j < N; ++j)
                ex[j] = (d2[i][i] - d2[i][j]) / (2.0 * cfg.tau);
            total += log_sum_exp(ex);
        }
        return total / static_cast<double>(N);
    }

    // Cosine similarity matrix S[i][j] = h(img_i, txt_j).
    std::vector<std::vector<double>> S(N, std::vector<double>(N));
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            S[i][j] = cosine_similarity(img.row(i), txt.row(j));

    double total = 0.0;
    std::vector<double> ex(N);
    if (form == ContrastiveForm::softmax) {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < N; ++j) ex[j] = S[j][i] / cfg.tau;
            total += log_sum_exp(ex) - S[i][i] / cfg.tau;
            for (std::size_t j = 0; j < N; ++j) ex[j] = S[i][j] / cfg.tau;
            total += log_sum_exp(ex) - S[i][i] / cfg.tau;
        }
    } else {   // relative
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < N; ++j)
                ex[j] = (S[j][i] - S[i][i]) / cfg.tau;
            total += log_sum_exp(ex);
            for (std::size_t j = 0; j < N; ++j)
                ex[j] = (S[i][j] - S[i][i]) / cfg.tau;
            total += log_sum_exp(ex);
        }
    }
    return total / static_cast<double>(N);
}

// ---------------------------------------------------------------- audit

MarginAudit class_margin_audit(const EmbeddingBatch& embs, const LabelVector& labels,
                               const ClassAnchorSet& anchors) {
    const std::size_t C = anchors.n_classes();
    if (C < 2)
        throw DomainError("margin audit needs at least 2 classes, got " +
                          std::to_string(C));
    if (!embs.unit_norm)
        throw PreconditionError("margin audit requires unit-norm embeddings");
    if (embs.count() != labels.labels.size())
        throw ShapeError("margin audit: embeddings and labels misaligned");
    if (embs.count() > 0 && embs.dim() != anchors.dim())
        throw ShapeError("margin audit: embedding and anchor dims differ");
    for (std::size_t l : labels.labels)
        if (l >= C)
            throw DomainError("margin audit: label " + std::to_string(l) +
                              " outside anchor set");

    MarginAudit audit;
    audit.per_class.resize(C);
    double overall = std::numeric_limits<double>::infinity();
    bool any_present = false;
    for (std::size_t c = 0; c < C; ++c) {
        ClassMarginStats& st = audit.per_class[c];
        double own_sum = 0.0, margin_sum = 0.0;
        double max_other = -std::numeric_limits<double>::infinity();
        double min_margin = std::numeric_limits<double>::infinity();
        std::size_t n_samples = 0, n_pairs = 0;
        for (std::size_t i = 0; i < embs.count(); ++i) {
            if (labels.labels[i] != c) continue;
            ++n_samples;
            std::span<const double> f = embs.row(i);
            own_sum += dot(f, anchors.anchor(c));
            for (std::size_t cp = 0; cp < C; ++cp) {
                if (cp == c) continue;
                double m = margin_delta(f, anchors.anchor(c), anchors.anchor(cp));
                margin_sum += m;
                min_margin = std::min(min_margin, m);
                max_other = std::max(max_other, dot(f, anchors.anchor(cp)));
                ++n_pairs;
            }
        }
        st.count = n_samples;
        st.present = n_samples > 0;
        if (st.present) {
            st.mean_own_similarity = own_sum / static_cast<double>(n_samples);
            st.max_other_similarity = max_other;
            st.min_margin = min_margin;
            st.mean_margin = margin_sum / static_cast<double>(n_pairs);
            overall = std::min(overall, min_margin);
            any_present = true;
        }
    }
    audit.overall_min_margin =
        any_present ? overall : std::numeric_limits<double>::quiet_NaN();
    return audit;
}

// ---------------------------------------------------------------- export

void export_embeddings(const EmbeddingBatch& embs, const LabelVector& labels,
                       const std::vector<std::string>& ids, const std::string& path) {
    if (embs.count() != labels.labels.size() || embs.count() != ids.size())
        throw ShapeError("embedding export: ids, labels, embeddings misaligned");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw PersistenceError(path + ": cannot open for write");
    out << "id,label";
    for (std::size_t j = 0; j < embs.dim(); ++j) out << ",e_" << j;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < embs.count(); ++i) {
        out << ids[i] << "," << labels.labels[i];
        for (std::size_t j = 0; j < embs.dim(); ++j) {
            std::snprintf(buf, sizeof buf, "%.12g", embs.row(i)[j]);
            out << "," << buf;
        }
        out << "\n";
    }
    if (!out) throw PersistenceError(path + ": write failed");
}

}
