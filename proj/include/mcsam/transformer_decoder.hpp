#pragma once

#include "mcsam/layers.hpp"
#include "mcsam/pixel_decoder.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

namespace mcsam {

struct DecoderConfig {
    int64_t num_queries = 100;
    int64_t num_layers = 9;
    int64_t hidden_dim = 256;
    int64_t num_heads = 8;
    int64_t ffn_dim = 2048;
    int64_t num_classes = 1;  // M, excluding no-object
    int64_t in_channels = 256;
    int64_t mask_dim = 256;
    double mask_threshold = 0.5;

    void validate() const;
};

struct LayerPrediction {
    torch::Tensor class_logits;  // [B, q, M + 1]; last column is no-object
    torch::Tensor mask_logits;   // [B, q, H/4, W/4]
};

struct InstancePrediction {
    torch::Tensor class_logits;
    torch::Tensor mask_logits;
    std::vector<LayerPrediction> aux_outputs;  // one per layer; back() is the final prediction
};

// Multi-head attention with an optional boolean mask [B, Lq, Lk], true = blocked.
// The mask is shared by all heads.
class MultiHeadAttentionImpl : public torch::nn::Module {
public:
    MultiHeadAttentionImpl(int64_t dim, int64_t num_heads);

    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                          const std::optional<torch::Tensor>& blocked = std::nullopt);

    torch::nn::Linear q_proj{nullptr};
    torch::nn::Linear k_proj{nullptr};
    torch::nn::Linear v_proj{nullptr};
    torch::nn::Linear out_proj{nullptr};

private:
    int64_t num_heads_;
};
TORCH_MODULE(MultiHeadAttention);

// Turns the previous layer's mask logits into a cross-attention mask for a
// level of size (h, w): [B, q, h * w], true where sigmoid < threshold.
// Rows that would block every location are cleared (unmasked fallback).
torch::Tensor build_attention_mask(const torch::Tensor& mask_logits, int64_t h, int64_t w, double threshold);

// mask_logits[b, j, y, x] = <embedded_query[b, j], mask_features[b, :, y, x]>.
torch::Tensor predict_masks(const torch::Tensor& embedded_queries, const torch::Tensor& mask_features);

// One decoder layer, post-norm: masked cross-attention, self-attention, FFN.
class DecoderLayerImpl : public torch::nn::Module {
public:
    DecoderLayerImpl(int64_t dim, int64_t num_heads, int64_t ffn_dim);

    torch::Tensor forward(const torch::Tensor& tgt, const torch::Tensor& memory, const torch::Tensor& memory_pos,
                          const torch::Tensor& query_pos, const std::optional<torch::Tensor>& blocked);

    MultiHeadAttention cross_attn{nullptr};
    torch::nn::LayerNorm cross_norm{nullptr};
    MultiHeadAttention self_attn{nullptr};
    torch::nn::LayerNorm self_norm{nullptr};
    torch::nn::Linear linear1{nullptr};
    torch::nn::Linear linear2{nullptr};
    torch::nn::LayerNorm ffn_norm{nullptr};
};
TORCH_MODULE(DecoderLayer);

class TransformerDecoderImpl : public torch::nn::Module {
public:
    explicit TransformerDecoderImpl(DecoderConfig config);

    InstancePrediction forward(const PyramidLevels& pyramid);

    // Class and mask heads on decoded query states [B, q, hidden].
    LayerPrediction heads(const torch::Tensor& queries, const torch::Tensor& mask_features);

    // Attention masks actually used by each layer during the last forward
    // (undefined tensor for the unmasked first layer).
    const std::vector<torch::Tensor>& last_attention_masks() const { return last_masks_; }

    const DecoderConfig& config() const { return config_; }

    torch::Tensor query_feat;   // [q, hidden]
    torch::Tensor query_embed;  // [q, hidden]
    torch::Tensor level_embed;  // [levels, hidden]
    std::vector<torch::nn::Conv2d> input_proj;  // empty entries when in_channels == hidden_dim
    std::vector<DecoderLayer> layers;
    torch::nn::LayerNorm decoder_norm{nullptr};
    torch::nn::Linear class_embed{nullptr};
    PredictionMlp mask_embed{nullptr};

private:
    DecoderConfig config_;
    std::vector<torch::Tensor> last_masks_;
};
TORCH_MODULE(TransformerDecoder);

}  // namespace mcsam
