#include "noboxlab/train/margin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/hash.hpp"
#include "noboxlab/core/fsutil.hpp"
#include "noboxlab/geometry/embedding.hpp"
#include "noboxlab/nn/loss.hpp"
#include "noboxlab/nn/optim.hpp"

namespace noboxlab {

namespace {

constexpr double kUnitTol = 1e-6;

void require_unit_rows(const Tensor& m, const char* what) {
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        std::span<const double> row(m.vec().data() + i * m.dim(1), m.dim(1));
        if (std::abs(l2_norm(row) - 1.0) > kUnitTol)
            throw PreconditionError(std::string(what) + " row " +
                                    std::to_string(i) + " is not unit-norm");
    }
}

std::string fmt_value(double v) {
    if (std::isnan(v)) return "na";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

MarginConfig MarginConfig::make(double m, double s, double numeric_eps) {
    if (!(m >= 0.0) || !(m < std::numbers::pi / 2.0))
        throw DomainError("margin m must lie in [0, pi/2), got " +
                          std::to_string(m));
    if (!(s > 0.0))
        throw DomainError("logit scale s must be positive, got " +
                          std::to_string(s));
    if (!(numeric_eps > 0.0) || !(numeric_eps < 1e-2))
        throw DomainError("numeric_eps must lie in (0, 1e-2), got " +
                          std::to_string(numeric_eps));
    MarginConfig cfg;
    cfg.m = m;
    cfg.s = s;
    cfg.numeric_eps = numeric_eps;
    return cfg;
}

std::string optimizer_kind_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adamw: return "adamw";
    }
    throw DomainError("unknown optimizer kind");
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adamw") return OptimizerKind::adamw;
    throw DomainError("unknown optimizer '" + name + "' (want sgd|adamw)");
}

TrainSchedule TrainSchedule::make(OptimizerKind optimizer, double lr_init,
                                  double lr_min, std::size_t batch_size,
                                  std::size_t epochs, bool anneal,
                                  std::uint64_t seed) {
    if (!(lr_init >= 0.0) || !(lr_min >= 0.0))
        throw DomainError("learning rates must be nonnegative");
    if (lr_init < lr_min)
        throw DomainError("lr_init " + std::to_string(lr_init) +
                          " must be at least lr_min " + std::to_string(lr_min));
    if (batch_size == 0) throw DomainError("batch_size must be positive");
    TrainSchedule s;
    s.optimizer = optimizer;
    s.lr_init = lr_init;
    s.lr_min = lr_min;
    s.batch_size = batch_size;
    s.epochs = epochs;
    s.anneal = anneal;
    s.seed = seed;
    return s;
}

void write_trace_csv(const TrainingTrace& trace, const std::string& path) {
    std::ostringstream out;
    out << "epoch,loss,acc,lr,min_margin\n";
    out << "0,na,na,na," << fmt_value(trace.initial_min_margin) << '\n';
    for (const EpochRecord& r : trace.records) {
        out << r.epoch << ',' << fmt_value(r.loss) << ',' << fmt_value(r.acc)
            << ',' << fmt_value(r.lr) << ',' << fmt_value(r.min_margin)
            << '\n';
    }
    write_file_atomic(path, out.str());
}

Tensor arcface_logits(const EmbeddingBatch& emb, const SupervisoryHead& head,
                      const LabelVector& labels, const MarginConfig& cfg) {
    if (!emb.unit_norm)
        throw PreconditionError("margin logits require unit-norm embeddings");
    require_unit_rows(head.W(), "head");
    const std::size_t n = emb.vectors.dim(0);
    const std::size_t d = emb.vectors.dim(1);
    const std::size_t c = head.n_classes();
    if (d != head.dim())
        throw ShapeError("embedding dim " + std::to_string(d) +
                         " does not match head dim " +
                         std::to_string(head.dim()));
    if (labels.labels.size() != n)
        throw ShapeError("label count does not match batch");

    Tensor z({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* f = emb.vectors.vec().data() + i * d;
        for (std::size_t j = 0; j < c; ++j) {
            const double* w = head.W().vec().data() + j * d;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += f[k] * w[k];
            z.at2(i, j) = cfg.s * dot;
        }
        if (labels.labels[i] >= c)
            throw DomainError("label out of range for head");
        if (cfg.m != 0.0) {
            std::size_t y = labels.labels[i];
            double cy = z.at2(i, y) / cfg.s;
            double lim = 1.0 - cfg.numeric_eps;
            cy = std::clamp(cy, -lim, lim);
            double shifted = cy * std::cos(cfg.m) -
                             std::sqrt(1.0 - cy * cy) * std::sin(cfg.m);
            z.at2(i, y) = cfg.s * shifted;
        }
    }
    return z;
}

double arcface_loss(const EmbeddingBatch& emb, const SupervisoryHead& head,
                    const LabelVector& labels, const MarginConfig& cfg) {
    Tensor z = arcface_logits(emb, head, labels, cfg);
    return cross_entropy(z, labels, nullptr);
}

ArcfaceGrads arcface_backward(const Tensor& raw_emb, const Tensor& head_w,
                              const LabelVector& labels,
                              const MarginConfig& cfg) {
    if (raw_emb.ndim() != 2 || head_w.ndim() != 2)
        throw ShapeError("margin backward expects 2-d embedding and head");
    const std::size_t n = raw_emb.dim(0);
    const std::size_t d = raw_emb.dim(1);
    const std::size_t c = head_w.dim(0);
    if (head_w.dim(1) != d)
        throw ShapeError("embedding dim " + std::to_string(d) +
                         " does not match head dim " +
                         std::to_string(head_w.dim(1)));
    if (labels.labels.size() != n)
        throw ShapeError("label count does not match batch");

    // Normalize both factors; remember norms for the backward pass.
    Tensor u = raw_emb;
    Tensor w = head_w;
    std::vector<double> u_norm(n), w_norm(c);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<double> row(u.vec().data() + i * d, d);
        double nn = l2_norm(std::span<const double>(row.data(), d));
        if (nn == 0.0) throw DomainError("zero embedding row in margin loss");
        u_norm[i] = nn;
        for (double& v : row) v /= nn;
    }
    for (std::size_t j = 0; j < c; ++j) {
        std::span<double> row(w.vec().data() + j * d, d);
        double nn = l2_norm(std::span<const double>(row.data(), d));
        if (nn == 0.0) throw DomainError("zero head row in margin loss");
        w_norm[j] = nn;
        for (double& v : row) v /= nn;
    }

    // Cosines and margin-adjusted logits.
    Tensor cosines({n, c});
    Tensor z({n, c});
    // d(logit)/d(cosine) per entry; the target column differs under margin.
    Tensor dz_dc({n, c});
    const double cos_m = std::cos(cfg.m);
    const double sin_m = std::sin(cfg.m);
    const double lim = 1.0 - cfg.numeric_eps;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels.labels[i] >= c)
            throw DomainError("label out of range for head");
        const double* f = u.vec().data() + i * d;
        for (std::size_t j = 0; j < c; ++j) {
            const double* wr = w.vec().data() + j * d;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += f[k] * wr[k];
            cosines.at2(i, j) = dot;
            z.at2(i, j) = cfg.s * dot;
            dz_dc.at2(i, j) = cfg.s;
        }
        if (cfg.m != 0.0) {
            std::size_t y = labels.labels[i];
            double cy = cosines.at2(i, y);
            if (cy > lim || cy < -lim) {
                // Clamped: the shifted cosine is constant in this region.
                double cc = std::clamp(cy, -lim, lim);
                z.at2(i, y) =
                    cfg.s * (cc * cos_m - std::sqrt(1.0 - cc * cc) * sin_m);
                dz_dc.at2(i, y) = 0.0;
            } else {
                double sin_a = std::sqrt(1.0 - cy * cy);
                z.at2(i, y) = cfg.s * (cy * cos_m - sin_a * sin_m);
                dz_dc.at2(i, y) = cfg.s * (cos_m + cy / sin_a * sin_m);
            }
        }
    }

    ArcfaceGrads out;
    Tensor dz;
    out.loss = cross_entropy(z, labels, &dz);
    out.cosines = cosines;

    // dC[i][j] = dz[i][j] * d(logit)/d(cosine).
    Tensor dC({n, c});
    for (std::size_t i = 0; i < n * c; ++i) dC[i] = dz[i] * dz_dc[i];

    // Gradients w.r.t. unit vectors, then through the normalizations.
    Tensor du({n, d});
    Tensor dw({c, d});
    du.fill(0.0);
    dw.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* f = u.vec().data() + i * d;
        double* dui = du.vec().data() + i * d;
        for (std::size_t j = 0; j < c; ++j) {
            const double g = dC.at2(i, j);
            if (g == 0.0) continue;
            const double* wr = w.vec().data() + j * d;
            double* dwj = dw.vec().data() + j * d;
            for (std::size_t k = 0; k < d; ++k) {
                dui[k] += g * wr[k];
                dwj[k] += g * f[k];
            }
        }
    }
    out.d_emb = Tensor({n, d});
    out.d_head = Tensor({c, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* f = u.vec().data() + i * d;
        const double* dui = du.vec().data() + i * d;
        double* dst = out.d_emb.vec().data() + i * d;
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += dui[k] * f[k];
        for (std::size_t k = 0; k < d; ++k)
            dst[k] = (dui[k] - proj * f[k]) / u_norm[i];
    }
    for (std::size_t j = 0; j < c; ++j) {
        const double* wr = w.vec().data() + j * d;
        const double* dwj = dw.vec().data() + j * d;
        double* dst = out.d_head.vec().data() + j * d;
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += dwj[k] * wr[k];
        for (std::size_t k = 0; k < d; ++k)
            dst[k] = (dwj[k] - proj * wr[k]) / w_norm[j];
    }
    return out;
}

std::string margin_config_hash(const MarginConfig& cfg,
                               const TrainSchedule& sched) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "m=%.17g;s=%.17g;eps=%.17g;opt=%s;lr=%.17g;lrmin=%.17g;"
                  "bs=%zu;epochs=%zu;anneal=%d;seed=%llu",
                  cfg.m, cfg.s, cfg.numeric_eps,
                  optimizer_kind_name(sched.optimizer).c_str(), sched.lr_init,
                  sched.lr_min, sched.batch_size, sched.epochs,
                  sched.anneal ? 1 : 0,
                  static_cast<unsigned long long>(sched.seed));
    return fnv1a64_hex(std::string(buf));
}

double audit_min_margin(SurrogateModel& model, const InMemoryDataset& data) {
    EmbeddingBatch emb = model.unit_embeddings(data.pixels());
    LabelVector labels = LabelVector::make(data.labels(), data.n_classes());
    MarginAudit audit =
        class_margin_audit(emb, labels, model.head().anchors());
    return audit.overall_min_margin;
}

namespace {

// Re-anchors every head row at the unit class mean of the model's current
// embeddings. A ReLU encoder concentrates embeddings in one narrow cone, and
// rows started at random positions are pushed away from that cone by the
// foreign-class majority of every batch until the whole head collapses onto
// its antipode; rows that start at their class means instead sit where their
// own-class pull balances that pressure. Classes absent from the data, or
// with cancelling means, keep their existing rows.
void anchor_head_at_class_means(SurrogateModel& model,
                                const InMemoryDataset& data) {
    EmbeddingBatch emb = model.unit_embeddings(data.pixels());
    const std::size_t d = emb.dim();
    Tensor& w = model.head().W();
    for (std::size_t c = 0; c < model.n_classes(); ++c) {
        std::vector<double> mean(d, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < emb.count(); ++i) {
            if (data.labels()[i] != c) continue;
            std::span<const double> row = emb.row(i);
            for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
            ++count;
        }
        if (count == 0) continue;
        double norm = l2_norm({mean.data(), d});
        if (norm < 1e-12) continue;
        for (std::size_t k = 0; k < d; ++k)
            w.vec()[c * d + k] = mean[k] / norm;
    }
}

}  // namespace

TrainingTrace finetune_surrogate(SurrogateModel& model,
                                 const InMemoryDataset& data,
                                 const TrainSchedule& sched,
                                 const MarginConfig& cfg,
                                 const SplitRegistry* guard,
                                 const std::string& guard_role) {
    if (data.size() == 0) throw DomainError("training set is empty");
    if (data.n_classes() != model.n_classes())
        throw DomainError("dataset has " + std::to_string(data.n_classes()) +
                          " classes but the model head has " +
                          std::to_string(model.n_classes()));

    if (guard != nullptr && !guard_role.empty()) {
        const std::set<std::string>& reserved = guard->hashes(guard_role);
        std::vector<std::string> shared;
        for (const std::string& h : data.hashes())
            if (reserved.count(h) > 0) shared.push_back(h);
        if (!shared.empty()) {
            std::sort(shared.begin(), shared.end());
            shared.erase(std::unique(shared.begin(), shared.end()),
                         shared.end());
            std::string msg = "training data overlaps guarded role '" +
                              guard_role + "': ";
            for (std::size_t i = 0; i < shared.size(); ++i) {
                if (i > 0) msg += ", ";
                msg += shared[i];
            }
            throw DisjointnessError(msg, shared);
        }
    }

    if (sched.epochs > 0) anchor_head_at_class_means(model, data);

    TrainingTrace trace;
    trace.initial_min_margin = audit_min_margin(model, data);

    if (sched.epochs == 0) {
        model.meta().config_hash = margin_config_hash(cfg, sched);
        return trace;
    }

    std::unique_ptr<Optimizer> opt;
    if (sched.optimizer == OptimizerKind::sgd)
        opt = std::make_unique<Sgd>(0.9, 0.0);
    else
        opt = std::make_unique<AdamW>(0.9, 0.999, 1e-8, 0.0);

    std::vector<ParamView> params = model.params();
    Tensor& head_w = model.head().W();
    Tensor& head_g = model.head().grad();

    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
        double lr = sched.anneal
                        ? cosine_annealing_lr(sched.lr_init, sched.lr_min,
                                              epoch, sched.epochs)
                        : sched.lr_init;
        std::vector<Batch> batches = data.batches(
            sched.batch_size, Rng::mix(sched.seed, 0x6570u + epoch));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const Batch& b : batches) {
            const std::size_t bn = b.images.pixels.dim(0);
            for (ParamView& pv : params)
                std::fill(pv.g, pv.g + pv.n, 0.0);

            Tensor raw = model.raw_embeddings(b.images.pixels, true);
            ArcfaceGrads grads =
                arcface_backward(raw, head_w, b.labels, cfg);
            if (!std::isfinite(grads.loss))
                throw TrainingError("non-finite loss at training step " +
                                    std::to_string(global_step));
            model.encoder().backward(grads.d_emb);
            head_g.add_(grads.d_head);

            opt->step(params, lr);
            model.head().renormalize_rows();

            loss_sum += grads.loss * static_cast<double>(bn);
            std::vector<std::size_t> pred = argmax_rows(grads.cosines);
            for (std::size_t i = 0; i < bn; ++i)
                if (pred[i] == b.labels.labels[i]) ++correct;
            ++global_step;
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.loss = loss_sum / static_cast<double>(data.size());
        rec.acc = static_cast<double>(correct) /
                  static_cast<double>(data.size());
        rec.lr = lr;
        rec.min_margin = audit_min_margin(model, data);
        trace.records.push_back(rec);
    }

    model.meta().epoch += sched.epochs;
    model.meta().config_hash = margin_config_hash(cfg, sched);
    return trace;
}

}
