#include "mcsam/transformer_decoder.hpp"

#include "mcsam/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mcsam {

namespace F = torch::nn::functional;
namespace nn = torch::nn;

void DecoderConfig::validate() const {
    if (num_queries < 1) {
        throw ConfigError("decoder needs at least one query");
    }
    if (num_classes < 1) {
        throw ConfigError("decoder needs at least one class");
    }
    if (num_layers < 1 || num_heads < 1 || hidden_dim % num_heads != 0) {
        throw ConfigError("decoder hidden_dim " + std::to_string(hidden_dim) + " must be divisible by " +
                          std::to_string(num_heads) + " heads; layers must be positive");
    }
    if (hidden_dim % 2 != 0 || ffn_dim < 1 || in_channels < 1 || mask_dim < 1) {
        throw ConfigError("decoder widths must be positive and hidden_dim even");
    }
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
        throw ConfigError("mask_threshold must lie in (0, 1)");
    }
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t dim, int64_t num_heads) : num_heads_(num_heads) {
    if (num_heads < 1 || dim % num_heads != 0) {
        throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(num_heads));
    }
    q_proj = register_module("q_proj", nn::Linear(dim, dim));
    k_proj = register_module("k_proj", nn::Linear(dim, dim));
    v_proj = register_module("v_proj", nn::Linear(dim, dim));
    out_proj = register_module("out_proj", nn::Linear(dim, dim));
    torch::NoGradGuard no_grad;
    for (auto* lin : {&q_proj, &k_proj, &v_proj, &out_proj}) {
        nn::init::xavier_uniform_((*lin)->weight);
        (*lin)->bias.zero_();
    }
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                              const torch::Tensor& value,
                                              const std::optional<torch::Tensor>& blocked) {
    const auto B = query.size(0);
    const auto Lq = query.size(1);
    const auto Lk = key.size(1);
    const auto dim = query.size(2);
    const auto dh = dim / num_heads_;

    auto q = q_proj(query).view({B, Lq, num_heads_, dh}).transpose(1, 2);
    auto k = k_proj(key).view({B, Lk, num_heads_, dh}).transpose(1, 2);
    auto v = v_proj(value).view({B, Lk, num_heads_, dh}).transpose(1, 2);
    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh));
    if (blocked && blocked->defined()) {
        scores = scores.masked_fill(blocked->unsqueeze(1), -std::numeric_limits<double>::infinity());
    }
    auto attn = torch::softmax(scores, -1);
    auto out = torch::matmul(attn, v).transpose(1, 2).reshape({B, Lq, dim});
    return out_proj(out);
}

torch::Tensor build_attention_mask(const torch::Tensor& mask_logits, int64_t h, int64_t w, double threshold) {
    torch::NoGradGuard no_grad;
    auto resized = F::interpolate(mask_logits.detach(), F::InterpolateFuncOptions()
                                                            .size(std::vector<int64_t>{h, w})
                                                            .mode(torch::kBilinear)
                                                            .align_corners(false));
    auto blocked = (resized.sigmoid() < threshold).flatten(2);
    auto all_blocked = blocked.all(-1, /*keepdim=*/true);
    return blocked.logical_and(all_blocked.logical_not());
}

torch::Tensor predict_masks(const torch::Tensor& embedded_queries, const torch::Tensor& mask_features) {
    if (embedded_queries.size(-1) != mask_features.size(1)) {
        throw ShapeError("mask embedding width " + std::to_string(embedded_queries.size(-1)) +
                         " != mask feature width " + std::to_string(mask_features.size(1)));
    }
    return torch::einsum("bqc,bchw->bqhw", {embedded_queries, mask_features});
}

DecoderLayerImpl::DecoderLayerImpl(int64_t dim, int64_t num_heads, int64_t ffn_dim) {
    cross_attn = register_module("cross_attn", MultiHeadAttention(dim, num_heads));
    cross_norm = register_module("cross_norm", nn::LayerNorm(nn::LayerNormOptions({dim})));
    self_attn = register_module("self_attn", MultiHeadAttention(dim, num_heads));
    self_norm = register_module("self_norm", nn::LayerNorm(nn::LayerNormOptions({dim})));
    linear1 = register_module("linear1", nn::Linear(dim, ffn_dim));
    linear2 = register_module("linear2", nn::Linear(ffn_dim, dim));
    ffn_norm = register_module("ffn_norm", nn::LayerNorm(nn::LayerNormOptions({dim})));
    torch::NoGradGuard no_grad;
    nn::init::xavier_uniform_(linear1->weight);
    nn::init::xavier_uniform_(linear2->weight);
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& tgt, const torch::Tensor& memory,
                                        const torch::Tensor& memory_pos, const torch::Tensor& query_pos,
                                        const std::optional<torch::Tensor>& blocked) {
    auto x = cross_norm(tgt + cross_attn(tgt + query_pos, memory + memory_pos, memory, blocked));
    auto qk = x + query_pos;
    x = self_norm(x + self_attn(qk, qk, x));
    return ffn_norm(x + linear2(torch::relu(linear1(x))));
}

TransformerDecoderImpl::TransformerDecoderImpl(DecoderConfig config) : config_(config) {
    config_.validate();
    const auto d = config_.hidden_dim;
    constexpr int64_t kLevels = 3;

    query_feat = register_parameter("query_feat", torch::empty({config_.num_queries, d}));
    query_embed = register_parameter("query_embed", torch::empty({config_.num_queries, d}));
    level_embed = register_parameter("level_embed", torch::empty({kLevels, d}));
    {
        torch::NoGradGuard no_grad;
        nn::init::normal_(query_feat);
        nn::init::normal_(query_embed);
        nn::init::normal_(level_embed);
    }
    for (int64_t l = 0; l < kLevels; ++l) {
        if (config_.in_channels != d) {
            nn::Conv2d proj(nn::Conv2dOptions(config_.in_channels, d, 1));
            {
                torch::NoGradGuard no_grad;
                nn::init::xavier_uniform_(proj->weight);
                proj->bias.zero_();
            }
            input_proj.push_back(register_module("input_proj" + std::to_string(l), proj));
        } else {
            input_proj.emplace_back(nullptr);
        }
    }
    for (int64_t i = 0; i < config_.num_layers; ++i) {
        layers.push_back(
            register_module("layer" + std::to_string(i), DecoderLayer(d, config_.num_heads, config_.ffn_dim)));
    }
    decoder_norm = register_module("decoder_norm", nn::LayerNorm(nn::LayerNormOptions({d})));
    class_embed = register_module("class_embed", nn::Linear(d, config_.num_classes + 1));
    mask_embed = register_module("mask_embed", PredictionMlp(d, d, config_.mask_dim, 3));
}

LayerPrediction TransformerDecoderImpl::heads(const torch::Tensor& queries, const torch::Tensor& mask_features) {
    auto normed = decoder_norm(queries);
    return {class_embed(normed), predict_masks(mask_embed(normed), mask_features)};
}

InstancePrediction TransformerDecoderImpl::forward(const PyramidLevels& pyramid) {
    const auto num_levels = static_cast<int64_t>(pyramid.levels.size());
    if (num_levels != level_embed.size(0)) {
        throw ShapeError("decoder expects " + std::to_string(level_embed.size(0)) + " pyramid levels, got " +
                         std::to_string(num_levels));
    }
    const auto B = pyramid.mask_features.size(0);
    const auto d = config_.hidden_dim;

    std::vector<torch::Tensor> memory;
    std::vector<torch::Tensor> memory_pos;
    std::vector<std::pair<int64_t, int64_t>> sizes;
    for (int64_t l = 0; l < num_levels; ++l) {
        const auto& level = pyramid.levels[l];
        if (level.dim() != 4 || level.size(1) != config_.in_channels) {
            throw ShapeError("decoder level " + std::to_string(l) + " must be [B, " +
                             std::to_string(config_.in_channels) + ", h, w], got " + c10::str(level.sizes()));
        }
        sizes.emplace_back(level.size(2), level.size(3));
        memory_pos.push_back(sine_position_embedding(level, d / 2).flatten(2).transpose(1, 2));
        auto projected = input_proj[l] ? input_proj[l](level) : level;
        memory.push_back(projected.flatten(2).transpose(1, 2) + level_embed[l].view({1, 1, d}));
    }

    auto query_pos = query_embed.unsqueeze(0).expand({B, config_.num_queries, d});
    auto output = query_feat.unsqueeze(0).expand({B, config_.num_queries, d});

    InstancePrediction result;
    last_masks_.clear();
    std::optional<torch::Tensor> blocked;
    for (int64_t i = 0; i < config_.num_layers; ++i) {
        const auto l = i % num_levels;
        last_masks_.push_back(blocked ? *blocked : torch::Tensor());
        output = layers[i](output, memory[l], memory_pos[l], query_pos, blocked);
        auto pred = heads(output, pyramid.mask_features);
        const auto [h, w] = sizes[(i + 1) % num_levels];
        blocked = build_attention_mask(pred.mask_logits, h, w, config_.mask_threshold);
        result.aux_outputs.push_back(std::move(pred));
    }
    result.class_logits = result.aux_outputs.back().class_logits;
    result.mask_logits = result.aux_outputs.back().mask_logits;
    return result;
}

}  // namespace mcsam
