#pragma once

#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "noboxlab/core/rng.hpp"
#include "noboxlab/core/tensor.hpp"
#include "noboxlab/data/dataset.hpp"
#include "noboxlab/nn/layers.hpp"

namespace noboxlab {

enum class EncoderKind { compact_conv, plugin };

const char* encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

// What embedding network to build: a fresh compact convolutional encoder, or
// pretrained weights pulled from an external checkpoint (plugin).
struct EncoderSpec {
    EncoderKind kind = EncoderKind::compact_conv;
    std::size_t emb_dim = 64;
    ImageShape input_size{32, 32, 3};
    std::optional<std::string> plugin_ref;   // checkpoint path, plugin only

    static EncoderSpec make(EncoderKind kind, std::size_t emb_dim,
                            ImageShape input_size,
                            std::optional<std::string> plugin_ref = std::nullopt);
};

// Image -> raw embedding network. Raw means unnormalized: callers that need
// the unit sphere normalize (and backpropagate through the normalization)
// themselves.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;   // [N,C,H,W] -> [N,d]
    virtual Tensor backward(const Tensor& demb) = 0;
    virtual std::vector<ParamView> params() = 0;
    virtual const EncoderSpec& spec() const = 0;
};

// 4 conv stages (widths 16/32/64/64, the middle two at stride 2 plus a final
// stride-2 stage), global average pooling, and a linear projection to d.
// Inputs in [0,1] are shifted to [-1,1] inside forward.
class CompactConvEncoder : public Encoder {
public:
    explicit CompactConvEncoder(const EncoderSpec& spec);

    void init(Rng& rng);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& demb) override;
    std::vector<ParamView> params() override;
    const EncoderSpec& spec() const override { return spec_; }

private:
    EncoderSpec spec_;
    Sequential net_;
};

// Builds the encoder named by spec. compact-conv: fresh weights drawn from
// rng. plugin: architecture and weights from the checkpoint at plugin_ref,
// which must declare matching emb_dim and input_size.
std::unique_ptr<Encoder> build_encoder(const EncoderSpec& spec, Rng& rng);

// Writes an encoder's weights as a reusable plugin checkpoint (kind
// "encoder").
std::string persist_encoder(Encoder& encoder, const std::string& path);

nlohmann::json encoder_spec_to_json(const EncoderSpec& spec);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);

}
