#pragma once

#include "mcsam/matcher.hpp"
#include "mcsam/transformer_decoder.hpp"

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcsam {

// Per-pair mean BCE over points. logits, targets: [K, n] -> [K].
torch::Tensor point_bce_terms(const torch::Tensor& logits, const torch::Tensor& targets);

// Per-pair dice loss on probabilities. probs, targets: [K, n] -> [K].
torch::Tensor dice_terms(const torch::Tensor& probs, const torch::Tensor& targets, double eps);

// Class targets [B, q]: matched queries carry their GT label, others M.
torch::Tensor class_targets(const std::vector<MatchResult>& matches, const std::vector<InstanceTarget>& targets,
                            int64_t batch, int64_t num_queries, int64_t num_classes);

// sum_b,j w * CE(logits[b, j], target[b, j]) / (B * q); w = no_object_weight
// on the no-object class, 1 otherwise.
torch::Tensor loss_ce_cls(const torch::Tensor& class_logits, const torch::Tensor& targets, const LossConfig& cfg);

// Matched (prediction, GT) masks sampled at n shared uniform points per pair,
// pairs ordered by image then GT index.
struct SampledPairs {
    torch::Tensor pred_logits;  // [K, n]
    torch::Tensor gt;           // [K, n]
};
SampledPairs sample_matched_pairs(const torch::Tensor& mask_logits, const std::vector<InstanceTarget>& targets,
                                  const std::vector<MatchResult>& matches, int64_t num_points,
                                  std::optional<at::Generator> generator);

// Sums of per-pair terms divided by num_masks (>= 1).
torch::Tensor loss_ce_seg(const SampledPairs& pairs, double num_masks);
torch::Tensor loss_dice(const SampledPairs& pairs, double num_masks, double eps);

struct LossOutput {
    torch::Tensor total;
    // Weighted, summed over supervised layers: total == sum of the three.
    std::map<std::string, double> components;
};

// Weighted three-term loss on every supervised layer (aux_outputs when deep supervision is
// on, the final prediction otherwise), summed.
LossOutput total_loss(const InstancePrediction& pred, const std::vector<InstanceTarget>& targets,
                      const LossConfig& cfg, std::optional<at::Generator> generator = std::nullopt);

}  // namespace mcsam
