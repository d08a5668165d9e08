#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

namespace mcsam {

// Spatial shape (H, W) of each pyramid level, in flattening order.
using LevelShapes = std::vector<std::pair<int64_t, int64_t>>;

// Offset of each level inside the flattened value sequence.
std::vector<int64_t> level_start_index(const LevelShapes& shapes);

// Gather-based multi-scale deformable attention.
//   value:               [B, S, heads, head_dim]   S = sum of H_l * W_l
//   sampling_locations:  [B, Q, heads, levels, points, 2]   (x, y) in [0, 1]
//   attention_weights:   [B, Q, heads, levels, points]
// Returns [B, Q, heads * head_dim]. Samples bilinearly with pixel centers at
// (j + 0.5) / W; locations outside the map read the nearest border pixel.
torch::Tensor ms_deform_attn_core(const torch::Tensor& value, const LevelShapes& shapes,
                                  const torch::Tensor& sampling_locations,
                                  const torch::Tensor& attention_weights);

struct DeformAttnTrace {
    torch::Tensor sampling_locations;  // [B, Q, heads, levels, points, 2]
    torch::Tensor attention_weights;   // [B, Q, heads, levels, points], softmaxed
};

class MSDeformAttnImpl : public torch::nn::Module {
public:
    MSDeformAttnImpl(int64_t d_model, int64_t num_levels, int64_t num_heads, int64_t num_points);

    // query: [B, Q, d_model]; reference_points: [B, Q, levels, 2] or [B, Q, 2],
    // clamped to [0, 1]; input_flatten: [B, S, d_model].
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& reference_points,
                          const torch::Tensor& input_flatten, const LevelShapes& shapes,
                          DeformAttnTrace* trace = nullptr);

    void reset_parameters();

    int64_t num_levels() const { return num_levels_; }
    int64_t num_heads() const { return num_heads_; }
    int64_t num_points() const { return num_points_; }

    torch::nn::Linear sampling_offsets{nullptr};
    torch::nn::Linear attention_weights{nullptr};
    torch::nn::Linear value_proj{nullptr};
    torch::nn::Linear output_proj{nullptr};

private:
    int64_t d_model_;
    int64_t num_levels_;
    int64_t num_heads_;
    int64_t num_points_;
};
TORCH_MODULE(MSDeformAttn);

}  // namespace mcsam
