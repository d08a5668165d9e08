#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace mcsam {

struct LossConfig {
    double lambda_cls = 2.0;
    double lambda_ce_seg = 5.0;
    double lambda_dice = 5.0;
    int64_t num_points = 12544;
    double dice_eps = 1.0;
    double no_object_weight = 0.1;
    bool deep_supervision = true;

    void validate() const;
};

// Ground truth of one image. masks are {0,1} floats on the padded input grid.
struct InstanceTarget {
    torch::Tensor labels;  // int64 [g], 0-based class index
    torch::Tensor masks;   // float [g, H, W]
};

struct Assignment {
    std::vector<int64_t> row_to_col;  // -1 for rows left unassigned (rows > cols)
    double cost = 0.0;
};

// Minimum-cost one-to-one assignment on a dense [rows, cols] cost matrix.
// Every row is assigned when rows <= cols; otherwise every column is.
Assignment linear_sum_assignment(const std::vector<std::vector<double>>& cost);
Assignment linear_sum_assignment(const torch::Tensor& cost);

struct MatchResult {
    std::vector<std::pair<int64_t, int64_t>> assignment;  // (query, gt), sorted by query
    std::vector<int64_t> unmatched_queries;
};

// Bilinear lookup of [N, C, H, W] at normalized points [N, P, 2] (x, y in [0, 1]),
// pixel centers at (j + 0.5) / W, zeros outside. Returns [N, C, P].
torch::Tensor point_sample(const torch::Tensor& input, const torch::Tensor& coords);

// Pairwise matching cost [q, g]:
//   lambda_cls * (-log p[label]) + lambda_ce_seg * point BCE + lambda_dice * dice
// on one point set shared by all pairs.
torch::Tensor matching_cost(const torch::Tensor& class_logits, const torch::Tensor& mask_logits,
                            const InstanceTarget& target, const LossConfig& cfg, const torch::Tensor& points);

// class_logits [q, M + 1], mask_logits [q, h, w] for one image.
MatchResult hungarian_match(const torch::Tensor& class_logits, const torch::Tensor& mask_logits,
                            const InstanceTarget& target, const LossConfig& cfg,
                            std::optional<at::Generator> generator = std::nullopt);

}  // namespace mcsam
