#include "noboxlab/models/surrogate.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/models/checkpoint.hpp"
#include "noboxlab/nn/loss.hpp"

namespace noboxlab {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------- SupervisoryHead

SupervisoryHead::SupervisoryHead(std::size_t n_classes, std::size_t d)
    : W_({n_classes, d}), gW_({n_classes, d}) {
    if (n_classes < 1) throw DomainError("head needs at least one class");
    if (d < 2) throw DomainError("head dimension must be >= 2");
}

void SupervisoryHead::init(Rng& rng) {
    for (std::size_t i = 0; i < W_.size(); ++i) W_[i] = rng.normal();
    l2_normalize_rows(W_);
    gW_.fill(0.0);
}

std::vector<ParamView> SupervisoryHead::params() {
    return {{"W", W_.data(), gW_.data(), W_.size()}};
}

void SupervisoryHead::renormalize_rows() {
    const std::size_t n = W_.dim(0), d = W_.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = l2_norm({W_.data() + i * d, d});
        if (norm == 0.0)
            throw DomainError("head row " + std::to_string(i) + " collapsed to zero");
        // A row that is already unit to a few ulp stays untouched so that a
        // zero-length optimizer step leaves parameters byte-identical.
        if (std::fabs(norm - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon())
            continue;
        for (std::size_t j = 0; j < d; ++j) W_.data()[i * d + j] /= norm;
    }
}

ClassAnchorSet SupervisoryHead::anchors() const {
    return ClassAnchorSet::make(W_, AnchorProvider::head_weights);
}

// ---------------------------------------------------------------- SurrogateModel

SurrogateModel::SurrogateModel(std::unique_ptr<Encoder> encoder, SupervisoryHead head,
                               SurrogateMeta meta)
    : encoder_(std::move(encoder)), head_(std::move(head)), meta_(std::move(meta)) {
    if (encoder_->spec().emb_dim != head_.dim())
        throw ShapeError("encoder emits dimension " +
                         std::to_string(encoder_->spec().emb_dim) +
                         ", head expects " + std::to_string(head_.dim()));
}

Tensor SurrogateModel::raw_embeddings(const Tensor& x, bool train) {
    return encoder_->forward(x, train);
}

EmbeddingBatch SurrogateModel::unit_embeddings(const Tensor& x) {
    Tensor raw = encoder_->forward(x, false);
    l2_normalize_rows(raw);
    return EmbeddingBatch::make(std::move(raw), true);
}

Tensor SurrogateModel::logits(const Tensor& x) {
    EmbeddingBatch emb = unit_embeddings(x);
    const std::size_t N = emb.count(), d = emb.dim(), C = head_.n_classes();
    Tensor out({N, C});
    Eigen::Map<const MatrixRM> U(emb.vectors.data(), N, d);
    Eigen::Map<const MatrixRM> W(head_.W().data(), C, d);
    Eigen::Map<MatrixRM> Z(out.data(), N, C);
    Z.noalias() = U * W.transpose();
    out.scale_(meta_.logit_scale);
    return out;
}

Tensor SurrogateModel::input_gradient(const Tensor& x, const LabelVector& labels,
                                      double* loss_out) {
    const std::size_t N = x.dim(0), d = head_.dim(), C = head_.n_classes();
    Tensor raw = encoder_->forward(x, true);
    // Unit embeddings and their norms.
    std::vector<double> norms(N);
    Tensor unit = raw;
    for (std::size_t i = 0; i < N; ++i) {
        norms[i] = l2_norm({raw.data() + i * d, d});
        if (norms[i] == 0.0)
            throw DomainError("zero-norm embedding in input gradient");
        for (std::size_t j = 0; j < d; ++j) unit.at2(i, j) /= norms[i];
    }
    Tensor z({N, C});
    Eigen::Map<const MatrixRM> U(unit.data(), N, d);
    Eigen::Map<const MatrixRM> W(head_.W().data(), C, d);
    Eigen::Map<MatrixRM> Z(z.data(), N, C);
    Z.noalias() = U * W.transpose();
    z.scale_(meta_.logit_scale);

    Tensor dz;
    double loss = cross_entropy(z, labels, &dz);
    if (loss_out) *loss_out = loss;

    // dcos = s * dz; du = dcos * W; draw = (du - (du.u) u) / |raw|.
    Tensor du({N, d});
    Eigen::Map<const MatrixRM> dZ(dz.data(), N, C);
    Eigen::Map<MatrixRM> dU(du.data(), N, d);
    dU.noalias() = meta_.logit_scale * dZ * W;
    Tensor draw({N, d});
    for (std::size_t i = 0; i < N; ++i) {
        double proj = 0.0;
        for (std::size_t j = 0; j < d; ++j) proj += du.at2(i, j) * unit.at2(i, j);
        for (std::size_t j = 0; j < d; ++j)
            draw.at2(i, j) = (du.at2(i, j) - proj * unit.at2(i, j)) / norms[i];
    }
    return encoder_->backward(draw);
}

std::vector<ParamView> SurrogateModel::params() {
    std::vector<ParamView> out = prefix_params("enc", encoder_->params());
    for (ParamView& p : prefix_params("head", head_.params())) out.push_back(p);
    return out;
}

std::string SurrogateModel::weights_digest() {
    return params_digest(params());
}

// ---------------------------------------------------------------- build / persist

SurrogateModel build_surrogate(const EncoderSpec& spec, std::size_t n_classes,
                               std::uint64_t seed) {
    if (n_classes < 1) throw DomainError("surrogate needs at least one class");
    Rng rng(Rng::mix(seed, 0x5352474154ull));   // stream private to model init
    std::unique_ptr<Encoder> enc = build_encoder(spec, rng);
    SupervisoryHead head(n_classes, spec.emb_dim);
    head.init(rng);
    SurrogateMeta meta;
    meta.spec = spec;
    meta.n_classes = n_classes;
    meta.seed = seed;
    return SurrogateModel(std::move(enc), std::move(head), std::move(meta));
}

std::string persist_surrogate(SurrogateModel& model, const std::string& path) {
    nlohmann::json meta;
    // The architecture actually instantiated (plugins resolve to their stored
    // architecture) plus the originally requested spec.
    meta["arch"] = encoder_spec_to_json(model.encoder().spec());
    meta["spec"] = encoder_spec_to_json(model.meta().spec);
    meta["n_classes"] = model.meta().n_classes;
    meta["seed"] = model.meta().seed;
    meta["epoch"] = model.meta().epoch;
    meta["config_hash"] = model.meta().config_hash;
    meta["logit_scale"] = model.meta().logit_scale;
    return write_checkpoint(path, model.params(), "surrogate", std::move(meta));
}

SurrogateModel restore_surrogate(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path, "surrogate");
    EncoderSpec arch = encoder_spec_from_json(ck.metadata.at("arch"));
    if (arch.kind != EncoderKind::compact_conv)
        throw CheckpointSpecError(path + ": unsupported stored architecture '" +
                                  std::string(encoder_kind_name(arch.kind)) + "'");
    SurrogateMeta meta;
    meta.spec = encoder_spec_from_json(ck.metadata.at("spec"));
    meta.n_classes = ck.metadata.at("n_classes").get<std::size_t>();
    meta.seed = ck.metadata.at("seed").get<std::uint64_t>();
    meta.epoch = ck.metadata.at("epoch").get<std::size_t>();
    meta.config_hash = ck.metadata.at("config_hash").get<std::string>();
    meta.logit_scale = ck.metadata.at("logit_scale").get<double>();

    auto enc = std::make_unique<CompactConvEncoder>(arch);
    SupervisoryHead head(meta.n_classes, arch.emb_dim);
    SurrogateModel model(std::move(enc), std::move(head), std::move(meta));
    restore_params(ck, model.params());
    return model;
}

}
