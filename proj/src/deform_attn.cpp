#include "mcsam/deform_attn.hpp"

#include "mcsam/errors.hpp"

#include <cmath>
#include <string>

namespace mcsam {

namespace F = torch::nn::functional;

std::vector<int64_t> level_start_index(const LevelShapes& shapes) {
    std::vector<int64_t> starts;
    starts.reserve(shapes.size());
    int64_t offset = 0;
    for (const auto& [h, w] : shapes) {
        starts.push_back(offset);
        offset += h * w;
    }
    return starts;
}

torch::Tensor ms_deform_attn_core(const torch::Tensor& value, const LevelShapes& shapes,
                                  const torch::Tensor& sampling_locations,
                                  const torch::Tensor& attention_weights) {
    if (shapes.empty()) {
        throw ConfigError("deformable attention needs at least one pyramid level");
    }
    const auto B = value.size(0);
    const auto S = value.size(1);
    const auto heads = value.size(2);
    const auto head_dim = value.size(3);
    const auto Q = sampling_locations.size(1);
    const auto L = sampling_locations.size(3);
    const auto P = sampling_locations.size(4);

    int64_t total = 0;
    for (const auto& [h, w] : shapes) {
        total += h * w;
    }
    if (total != S || L != static_cast<int64_t>(shapes.size())) {
        throw ShapeError("value length " + std::to_string(S) + " / level count " + std::to_string(L) +
                         " disagree with the level shape table");
    }

    auto grids = 2.0 * sampling_locations - 1.0;
    const auto starts = level_start_index(shapes);
    std::vector<torch::Tensor> sampled;
    sampled.reserve(shapes.size());
    for (size_t l = 0; l < shapes.size(); ++l) {
        const auto [h, w] = shapes[l];
        // [B, HW, heads, dh] -> [B*heads, dh, H, W]
        auto v = value.narrow(1, starts[l], h * w).flatten(2).transpose(1, 2).reshape({B * heads, head_dim, h, w});
        // [B, Q, heads, P, 2] -> [B*heads, Q, P, 2]
        auto g = grids.select(3, static_cast<int64_t>(l)).transpose(1, 2).flatten(0, 1);
        sampled.push_back(F::grid_sample(v, g,
                                         F::GridSampleFuncOptions()
                                             .mode(torch::kBilinear)
                                             .padding_mode(torch::kBorder)
                                             .align_corners(false)));  // [B*heads, dh, Q, P]
    }
    // [B, Q, heads, L, P] -> [B*heads, 1, Q, L*P]
    auto w = attention_weights.transpose(1, 2).reshape({B * heads, 1, Q, L * P});
    auto out = (torch::stack(sampled, -2).flatten(-2) * w).sum(-1).view({B, heads * head_dim, Q});
    return out.transpose(1, 2).contiguous();
}

MSDeformAttnImpl::MSDeformAttnImpl(int64_t d_model, int64_t num_levels, int64_t num_heads, int64_t num_points)
    : d_model_(d_model), num_levels_(num_levels), num_heads_(num_heads), num_points_(num_points) {
    if (num_levels < 1) {
        throw ConfigError("deformable attention needs at least one pyramid level");
    }
    if (num_heads < 1 || num_points < 1 || d_model % num_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " must be divisible by " +
                          std::to_string(num_heads) + " heads; points must be positive");
    }
    namespace nn = torch::nn;
    sampling_offsets = register_module("sampling_offsets", nn::Linear(d_model, num_heads * num_levels * num_points * 2));
    attention_weights = register_module("attention_weights", nn::Linear(d_model, num_heads * num_levels * num_points));
    value_proj = register_module("value_proj", nn::Linear(d_model, d_model));
    output_proj = register_module("output_proj", nn::Linear(d_model, d_model));
    reset_parameters();
}

void MSDeformAttnImpl::reset_parameters() {
    torch::NoGradGuard no_grad;
    sampling_offsets->weight.zero_();
    auto thetas = torch::arange(num_heads_, torch::kFloat) * (2.0 * M_PI / static_cast<double>(num_heads_));
    auto grid = torch::stack({thetas.cos(), thetas.sin()}, -1);
    grid = (grid / std::get<0>(grid.abs().max(-1, true)))
               .view({num_heads_, 1, 1, 2})
               .repeat({1, num_levels_, num_points_, 1});
    for (int64_t i = 0; i < num_points_; ++i) {
        grid.select(2, i).mul_(static_cast<double>(i + 1));
    }
    sampling_offsets->bias.copy_(grid.flatten());
    attention_weights->weight.zero_();
    attention_weights->bias.zero_();
    torch::nn::init::xavier_uniform_(value_proj->weight);
    value_proj->bias.zero_();
    torch::nn::init::xavier_uniform_(output_proj->weight);
    output_proj->bias.zero_();
}

torch::Tensor MSDeformAttnImpl::forward(const torch::Tensor& query, const torch::Tensor& reference_points,
                                        const torch::Tensor& input_flatten, const LevelShapes& shapes,
                                        DeformAttnTrace* trace) {
    if (static_cast<int64_t>(shapes.size()) != num_levels_) {
        throw ShapeError("deformable attention built for " + std::to_string(num_levels_) + " levels, got " +
                         std::to_string(shapes.size()));
    }
    const auto B = query.size(0);
    const auto Q = query.size(1);
    const auto S = input_flatten.size(1);

    auto value = value_proj(input_flatten).view({B, S, num_heads_, d_model_ / num_heads_});
    auto offsets = sampling_offsets(query).view({B, Q, num_heads_, num_levels_, num_points_, 2});
    auto weights = torch::softmax(attention_weights(query).view({B, Q, num_heads_, num_levels_ * num_points_}), -1)
                       .view({B, Q, num_heads_, num_levels_, num_points_});

    auto ref = reference_points.clamp(0.0, 1.0);
    if (ref.dim() == 3) {
        ref = ref.unsqueeze(2).expand({B, Q, num_levels_, 2});
    }
    std::vector<double> norm;
    norm.reserve(2 * shapes.size());
    for (const auto& [h, w] : shapes) {
        norm.push_back(static_cast<double>(w));
        norm.push_back(static_cast<double>(h));
    }
    auto normalizer = torch::tensor(norm, query.options().requires_grad(false)).view({1, 1, 1, num_levels_, 1, 2});
    auto locations = ref.unsqueeze(2).unsqueeze(4) + offsets / normalizer;

    if (trace != nullptr) {
        trace->sampling_locations = locations;
        trace->attention_weights = weights;
    }
    return output_proj(ms_deform_attn_core(value, shapes, locations, weights));
}

}  // namespace mcsam
