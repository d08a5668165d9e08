#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace mcsam {

// Channel-wise layer norm over NCHW maps (SAM's LayerNorm2d).
class LayerNorm2dImpl : public torch::nn::Module {
public:
    explicit LayerNorm2dImpl(int64_t channels, double eps = 1e-6);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight;
    torch::Tensor bias;

private:
    double eps_;
};
TORCH_MODULE(LayerNorm2d);

// Dense layer with an optional low-rank residual branch:
//   y = x W^T + b + (alpha / rank) * (x A^T) B^T
// The branch stays absent until enable_lora() is called, so a plain instance
// has exactly the parameters of torch::nn::Linear (weight, bias).
class LoraLinearImpl : public torch::nn::Module {
public:
    LoraLinearImpl(int64_t in_features, int64_t out_features, bool with_bias = true);

    torch::Tensor forward(const torch::Tensor& x);

    // A is Kaiming-uniform, B is zero: the layer output is unchanged at init.
    void enable_lora(int64_t rank, double alpha);
    bool has_lora() const { return lora_a.defined(); }
    double lora_scale() const { return lora_scale_; }

    // W + (alpha / rank) * B A; equals weight when LoRA is disabled.
    torch::Tensor merged_weight() const;

    int64_t in_features() const { return in_features_; }
    int64_t out_features() const { return out_features_; }

    torch::Tensor weight;
    torch::Tensor bias;
    torch::Tensor lora_a;  // [rank, in]
    torch::Tensor lora_b;  // [out, rank]

private:
    int64_t in_features_;
    int64_t out_features_;
    double lora_scale_ = 0.0;
};
TORCH_MODULE(LoraLinear);

struct ConvSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel = 1;
    int64_t stride = 1;
    int64_t padding = 0;
    bool with_bias = true;
};

// 2-D convolution (groups = 1) with the same optional low-rank branch. The
// branch factorizes the flattened kernel matrix: fan_in = in * k * k,
// fan_out = out. Unmerged evaluation runs the rank-r conv then a 1x1 conv.
class LoraConv2dImpl : public torch::nn::Module {
public:
    explicit LoraConv2dImpl(const ConvSpec& spec);

    torch::Tensor forward(const torch::Tensor& x);

    void enable_lora(int64_t rank, double alpha);
    bool has_lora() const { return lora_a.defined(); }

    torch::Tensor merged_weight() const;

    int64_t fan_in() const { return spec_.in_channels * spec_.kernel * spec_.kernel; }
    int64_t fan_out() const { return spec_.out_channels; }
    const ConvSpec& spec() const { return spec_; }

    torch::Tensor weight;
    torch::Tensor bias;
    torch::Tensor lora_a;  // [rank, in * k * k]
    torch::Tensor lora_b;  // [out, rank]

private:
    ConvSpec spec_;
    double lora_scale_ = 0.0;
};
TORCH_MODULE(LoraConv2d);

// Two-layer feed-forward block of a ViT (lin1 -> GELU -> lin2).
class MlpBlockImpl : public torch::nn::Module {
public:
    MlpBlockImpl(int64_t dim, int64_t hidden);
    torch::Tensor forward(const torch::Tensor& x);

    LoraLinear lin1{nullptr};
    LoraLinear lin2{nullptr};
};
TORCH_MODULE(MlpBlock);

// Plain bottleneck adapter: down -> GELU -> up, up-projection zero-initialized.
// Returns only the adapter branch; the caller adds the residual.
class BottleneckAdapterImpl : public torch::nn::Module {
public:
    BottleneckAdapterImpl(int64_t channels, int64_t bottleneck);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Linear down_proj{nullptr};
    torch::nn::Linear up_proj{nullptr};
};
TORCH_MODULE(BottleneckAdapter);

// Stack of linear layers with ReLU between them (the DETR-style prediction MLP).
class PredictionMlpImpl : public torch::nn::Module {
public:
    PredictionMlpImpl(int64_t in_dim, int64_t hidden_dim, int64_t out_dim, int64_t num_layers);
    torch::Tensor forward(torch::Tensor x);

private:
    std::vector<torch::nn::Linear> layers_;
};
TORCH_MODULE(PredictionMlp);

// DETR sine positional encoding for a [B, C, H, W] map, normalized to the map
// extent. Returns [B, 2 * num_pos_feats, H, W] with x.options().
torch::Tensor sine_position_embedding(const torch::Tensor& x, int64_t num_pos_feats, double temperature = 10000.0);

// GroupNorm with the largest group count <= 32 that divides `channels`.
torch::nn::GroupNorm make_group_norm(int64_t channels);

}  // namespace mcsam
