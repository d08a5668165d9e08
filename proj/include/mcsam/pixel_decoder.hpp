#pragma once

#include "mcsam/deform_attn.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace mcsam {

struct PixelDecoderConfig {
    int64_t in_channels = 256;
    int64_t conv_dim = 256;
    int64_t mask_dim = 256;
    int64_t num_layers = 6;
    int64_t num_heads = 8;
    int64_t num_points = 4;
    int64_t ffn_dim = 1024;

    void validate() const;
};

struct PyramidLevels {
    std::vector<torch::Tensor> levels;  // strides 32, 16, 8; each [B, conv_dim, H, W]
    torch::Tensor mask_features;        // stride 4, [B, mask_dim, H, W]
};

// Post-norm encoder layer: deformable self-attention then a ReLU FFN.
class DeformEncoderLayerImpl : public torch::nn::Module {
public:
    DeformEncoderLayerImpl(int64_t dim, int64_t ffn_dim, int64_t num_levels, int64_t num_heads, int64_t num_points);

    torch::Tensor forward(const torch::Tensor& src, const torch::Tensor& pos, const torch::Tensor& reference_points,
                          const LevelShapes& shapes);

    MSDeformAttn self_attn{nullptr};
    torch::nn::LayerNorm norm1{nullptr};
    torch::nn::Linear linear1{nullptr};
    torch::nn::Linear linear2{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
};
TORCH_MODULE(DeformEncoderLayer);

// Reference points at pixel centers of every level: [B, S, levels, 2], (x, y).
torch::Tensor pixel_reference_points(const LevelShapes& shapes, int64_t batch, const torch::TensorOptions& options);

class PixelDecoderImpl : public torch::nn::Module {
public:
    explicit PixelDecoderImpl(PixelDecoderConfig config);

    // f_enc: [B, in_channels, H, W] at stride 16, square with even side >= 4.
    PyramidLevels forward(const torch::Tensor& f_enc);

    const PixelDecoderConfig& config() const { return config_; }

    torch::nn::Sequential proj32{nullptr};
    torch::nn::Sequential proj16{nullptr};
    torch::nn::Sequential proj8{nullptr};
    torch::Tensor level_embed;  // [3, conv_dim]
    std::vector<DeformEncoderLayer> layers;
    torch::nn::Sequential out4{nullptr};
    torch::nn::Conv2d mask_proj{nullptr};

private:
    PixelDecoderConfig config_;
};
TORCH_MODULE(PixelDecoder);

}  // namespace mcsam
