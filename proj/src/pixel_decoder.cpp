#include "mcsam/pixel_decoder.hpp"

#include "mcsam/errors.hpp"
#include "mcsam/layers.hpp"

#include <string>

namespace mcsam {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace {

constexpr int64_t kNumLevels = 3;

void xavier_conv(nn::Conv2d& conv) {
    torch::NoGradGuard no_grad;
    nn::init::xavier_uniform_(conv->weight);
    if (conv->bias.defined()) {
        conv->bias.zero_();
    }
}

}  // namespace

void PixelDecoderConfig::validate() const {
    if (in_channels <= 0 || conv_dim <= 0 || mask_dim <= 0 || ffn_dim <= 0) {
        throw ConfigError("pixel decoder channel counts must be positive");
    }
    if (num_layers < 0 || num_heads < 1 || num_points < 1) {
        throw ConfigError("pixel decoder needs non-negative layers and positive heads/points");
    }
    if (conv_dim % num_heads != 0 || (conv_dim / 2) % 2 != 0) {
        throw ConfigError("pixel decoder conv_dim " + std::to_string(conv_dim) +
                          " must be divisible by the head count and by 4");
    }
}

DeformEncoderLayerImpl::DeformEncoderLayerImpl(int64_t dim, int64_t ffn_dim, int64_t num_levels, int64_t num_heads,
                                               int64_t num_points) {
    self_attn = register_module("self_attn", MSDeformAttn(dim, num_levels, num_heads, num_points));
    norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
    linear1 = register_module("linear1", nn::Linear(dim, ffn_dim));
    linear2 = register_module("linear2", nn::Linear(ffn_dim, dim));
    norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
}

torch::Tensor DeformEncoderLayerImpl::forward(const torch::Tensor& src, const torch::Tensor& pos,
                                              const torch::Tensor& reference_points, const LevelShapes& shapes) {
    auto x = norm1(src + self_attn(src + pos, reference_points, src, shapes));
    return norm2(x + linear2(torch::relu(linear1(x))));
}

torch::Tensor pixel_reference_points(const LevelShapes& shapes, int64_t batch, const torch::TensorOptions& options) {
    std::vector<torch::Tensor> per_level;
    for (const auto& [h, w] : shapes) {
        auto ys = (torch::arange(h, options) + 0.5) / static_cast<double>(h);
        auto xs = (torch::arange(w, options) + 0.5) / static_cast<double>(w);
        auto grid = torch::meshgrid({ys, xs}, "ij");
        per_level.push_back(torch::stack({grid[1].flatten(), grid[0].flatten()}, -1));
    }
    auto ref = torch::cat(per_level, 0);  // [S, 2]
    const auto levels = static_cast<int64_t>(shapes.size());
    return ref.view({1, -1, 1, 2}).expand({batch, ref.size(0), levels, 2});
}

PixelDecoderImpl::PixelDecoderImpl(PixelDecoderConfig config) : config_(config) {
    config_.validate();
    const auto c_in = config_.in_channels;
    const auto d = config_.conv_dim;

    nn::Conv2d down(nn::Conv2dOptions(c_in, d, 3).stride(2).padding(1));
    nn::Conv2d same(nn::Conv2dOptions(c_in, d, 1));
    xavier_conv(down);
    xavier_conv(same);
    proj32 = register_module("proj32", nn::Sequential(down, make_group_norm(d)));
    proj16 = register_module("proj16", nn::Sequential(same, make_group_norm(d)));
    proj8 = register_module(
        "proj8", nn::Sequential(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(c_in, d, 2).stride(2)), make_group_norm(d)));

    level_embed = register_parameter("level_embed", torch::empty({kNumLevels, d}));
    {
        torch::NoGradGuard no_grad;
        nn::init::normal_(level_embed);
    }
    for (int64_t i = 0; i < config_.num_layers; ++i) {
        layers.push_back(register_module(
            "layer" + std::to_string(i),
            DeformEncoderLayer(d, config_.ffn_dim, kNumLevels, config_.num_heads, config_.num_points)));
    }

    nn::Conv2d conv4(nn::Conv2dOptions(d, d, 3).padding(1).bias(false));
    xavier_conv(conv4);
    out4 = register_module("out4", nn::Sequential(conv4, make_group_norm(d), nn::ReLU()));
    mask_proj = register_module("mask_proj", nn::Conv2d(nn::Conv2dOptions(d, config_.mask_dim, 1)));
    xavier_conv(mask_proj);
}

PyramidLevels PixelDecoderImpl::forward(const torch::Tensor& f_enc) {
    if (f_enc.dim() != 4 || f_enc.size(1) != config_.in_channels) {
        throw ShapeError("pixel decoder expects [B, " + std::to_string(config_.in_channels) + ", H, W], got " +
                         c10::str(f_enc.sizes()));
    }
    const auto H = f_enc.size(2);
    const auto W = f_enc.size(3);
    if (H != W || H % 2 != 0 || H < 4) {
        throw ConfigError("pixel decoder input must be square with an even side >= 4 (coarsest level >= 2x2), got " +
                          std::to_string(H) + "x" + std::to_string(W));
    }
    const auto B = f_enc.size(0);
    const auto d = config_.conv_dim;

    std::vector<torch::Tensor> maps = {proj32->forward(f_enc), proj16->forward(f_enc), proj8->forward(f_enc)};
    LevelShapes shapes;
    std::vector<torch::Tensor> src;
    std::vector<torch::Tensor> pos;
    for (int64_t l = 0; l < kNumLevels; ++l) {
        const auto& m = maps[l];
        shapes.emplace_back(m.size(2), m.size(3));
        src.push_back(m.flatten(2).transpose(1, 2));
        pos.push_back(sine_position_embedding(m, d / 2).flatten(2).transpose(1, 2) + level_embed[l].view({1, 1, d}));
    }
    auto x = torch::cat(src, 1);
    auto p = torch::cat(pos, 1);
    auto ref = pixel_reference_points(shapes, B, x.options().requires_grad(false));
    for (auto& layer : layers) {
        x = layer(x, p, ref, shapes);
    }

    PyramidLevels out;
    const auto starts = level_start_index(shapes);
    for (int64_t l = 0; l < kNumLevels; ++l) {
        const auto [h, w] = shapes[l];
        out.levels.push_back(x.narrow(1, starts[l], h * w).transpose(1, 2).reshape({B, d, h, w}));
    }
    auto up = F::interpolate(out.levels.back(), F::InterpolateFuncOptions()
                                                    .scale_factor(std::vector<double>{2.0, 2.0})
                                                    .mode(torch::kBilinear)
                                                    .align_corners(false));
    out.mask_features = mask_proj(out4->forward(up));
    return out;
}

}  // namespace mcsam
