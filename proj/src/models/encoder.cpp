#include "noboxlab/models/encoder.hpp"

#include "noboxlab/core/errors.hpp"
#include "noboxlab/models/checkpoint.hpp"

namespace noboxlab {

const char* encoder_kind_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::compact_conv: return "compact-conv";
        case EncoderKind::plugin: return "plugin";
    }
    return "unknown";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
    if (name == "compact-conv") return EncoderKind::compact_conv;
    if (name == "plugin") return EncoderKind::plugin;
    throw DomainError("unknown encoder kind '" + name + "'");
}

EncoderSpec EncoderSpec::make(EncoderKind kind, std::size_t emb_dim,
                              ImageShape input_size,
                              std::optional<std::string> plugin_ref) {
    if (emb_dim < 2)
        throw DomainError("encoder emb_dim must be >= 2, got " +
                          std::to_string(emb_dim));
    if (input_size.height == 0 || input_size.width == 0 ||
        (input_size.channels != 1 && input_size.channels != 3))
        throw DomainError("encoder input_size must be HxWxC with C in {1,3}");
    if ((kind == EncoderKind::plugin) != plugin_ref.has_value())
        throw DomainError(kind == EncoderKind::plugin
                              ? "plugin encoder requires plugin_ref"
                              : "plugin_ref only valid for plugin encoders");
    return EncoderSpec{kind, emb_dim, input_size, std::move(plugin_ref)};
}

nlohmann::json encoder_spec_to_json(const EncoderSpec& spec) {
    nlohmann::json j;
    j["kind"] = encoder_kind_name(spec.kind);
    j["emb_dim"] = spec.emb_dim;
    j["input_size"] = {spec.input_size.height, spec.input_size.width,
                       spec.input_size.channels};
    if (spec.plugin_ref) j["plugin_ref"] = *spec.plugin_ref;
    return j;
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
    EncoderKind kind = encoder_kind_from_name(j.at("kind").get<std::string>());
    std::size_t d = j.at("emb_dim").get<std::size_t>();
    auto sz = j.at("input_size");
    ImageShape shape{sz.at(0).get<std::size_t>(), sz.at(1).get<std::size_t>(),
                     sz.at(2).get<std::size_t>()};
    std::optional<std::string> ref;
    if (j.contains("plugin_ref")) ref = j["plugin_ref"].get<std::string>();
    return EncoderSpec::make(kind, d, shape, std::move(ref));
}

// ---------------------------------------------------------------- CompactConvEncoder

namespace {

// Shifts [0,1] pixels to [-1,1]; an affine map, so backward is scale by 2.
class InputStandardize : public Layer {
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

CompactConvEncoder::CompactConvEncoder(const EncoderSpec& spec) : spec_(spec) {
    if (spec_.input_size.height < 8 || spec_.input_size.width < 8)
        throw DomainError("compact-conv encoder needs inputs of at least 8x8");
    net_.add("std", std::make_unique<InputStandardize>());
    net_.add("c1", std::make_unique<Conv2d>(spec_.input_size.channels, 16, 3, 1, 1));
    net_.add("a1", std::make_unique<ReLU>());
    net_.add("c2", std::make_unique<Conv2d>(16, 32, 3, 2, 1));
    net_.add("a2", std::make_unique<ReLU>());
    net_.add("c3", std::make_unique<Conv2d>(32, 64, 3, 2, 1));
    net_.add("a3", std::make_unique<ReLU>());
    net_.add("c4", std::make_unique<Conv2d>(64, 64, 3, 2, 1));
    net_.add("a4", std::make_unique<ReLU>());
    net_.add("gap", std::make_unique<GlobalAvgPool>());
    net_.add("proj", std::make_unique<Linear>(64, spec_.emb_dim));
}

void CompactConvEncoder::init(Rng& rng) {
    for (std::size_t i = 0; i < net_.size(); ++i) {
        if (auto* conv = dynamic_cast<Conv2d*>(&net_.layer(i))) conv->init_he(rng);
        if (auto* lin = dynamic_cast<Linear*>(&net_.layer(i))) lin->init_he(rng);
    }
}

Tensor CompactConvEncoder::forward(const Tensor& x, bool train) {
    require_ndim(x, 4, "encoder input");
    if (x.dim(1) != spec_.input_size.channels || x.dim(2) != spec_.input_size.height ||
        x.dim(3) != spec_.input_size.width)
        throw ShapeError("encoder expects input " +
                         Tensor({x.dim(0), spec_.input_size.channels,
                                 spec_.input_size.height, spec_.input_size.width})
                             .shape_str() +
                         ", got " + x.shape_str());
    return net_.forward(x, train);
}

Tensor CompactConvEncoder::backward(const Tensor& demb) {
    return net_.backward(demb);
}

std::vector<ParamView> CompactConvEncoder::params() {
    return net_.params();
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Encoder> build_encoder(const EncoderSpec& spec, Rng& rng) {
    if (spec.kind == EncoderKind::compact_conv) {
        auto enc = std::make_unique<CompactConvEncoder>(spec);
        enc->init(rng);
        return enc;
    }
    // Plugin: pull a persisted encoder and check it against the request.
    LoadedCheckpoint ck = read_checkpoint(*spec.plugin_ref, "encoder");
    EncoderSpec stored = encoder_spec_from_json(ck.metadata.at("spec"));
    if (stored.emb_dim != spec.emb_dim)
        throw CheckpointSpecError(*spec.plugin_ref + ": plugin emb_dim " +
                                  std::to_string(stored.emb_dim) +
                                  ", requested " + std::to_string(spec.emb_dim));
    if (!(stored.input_size == spec.input_size))
        throw CheckpointSpecError(*spec.plugin_ref +
                                  ": plugin input size differs from request");
    auto enc = std::make_unique<CompactConvEncoder>(stored);
    restore_params(ck, enc->params());
    return enc;
}

std::string persist_encoder(Encoder& encoder, const std::string& path) {
    nlohmann::json meta;
    meta["spec"] = encoder_spec_to_json(encoder.spec());
    return write_checkpoint(path, encoder.params(), "encoder", std::move(meta));
}

}
