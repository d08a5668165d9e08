#pragma once

#include "mcsam/aggregator.hpp"
#include "mcsam/encoder.hpp"
#include "mcsam/pixel_decoder.hpp"
#include "mcsam/transformer_decoder.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace mcsam {

struct ModelConfig {
    EncoderConfig encoder;
    AggregatorConfig aggregator;
    PixelDecoderConfig pixel;
    DecoderConfig decoder;

    // Checks each part and that their interfaces agree.
    void validate() const;
};

class MaskDecoderImpl : public torch::nn::Module {
public:
    MaskDecoderImpl(const PixelDecoderConfig& pixel_cfg, const DecoderConfig& decoder_cfg);
    InstancePrediction forward(const torch::Tensor& f_enc);

    PixelDecoder pixel{nullptr};
    TransformerDecoder transformer{nullptr};
};
TORCH_MODULE(MaskDecoder);

// Encoder -> aggregator neck -> pixel decoder -> masked-attention decoder.
// Top-level parameter groups: encoder.*, neck.*, decoder.*.
class MCSamSegImpl : public torch::nn::Module {
public:
    explicit MCSamSegImpl(ModelConfig config);

    // images: [B, 3, S, S] normalized, S = encoder.image_size.
    InstancePrediction forward(const torch::Tensor& images);

    const ModelConfig& config() const { return config_; }

    SamMonaEncoder encoder{nullptr};
    FeatureAggregator neck{nullptr};
    MaskDecoder decoder{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(MCSamSeg);

struct InstanceResult {
    int64_t query = 0;
    int64_t label = 0;  // 0-based class index
    double score = 0.0;
    torch::Tensor mask;  // bool [H, W]
};

// Top-k over the flattened q x M class probabilities (no-object dropped),
// k = min(top_k, q * M). score = class probability x mean foreground sigmoid.
// class_logits: [q, M + 1]; mask_logits: [q, H, W] at output resolution.
std::vector<InstanceResult> instance_inference(const torch::Tensor& class_logits, const torch::Tensor& mask_logits,
                                               int64_t top_k);

}  // namespace mcsam
