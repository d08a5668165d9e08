#include "mcsam/loss.hpp"

#include "mcsam/errors.hpp"

#include <algorithm>

namespace mcsam {

namespace F = torch::nn::functional;

torch::Tensor point_bce_terms(const torch::Tensor& logits, const torch::Tensor& targets) {
    return F::binary_cross_entropy_with_logits(logits, targets,
                                               F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone))
        .mean(-1);
}

torch::Tensor dice_terms(const torch::Tensor& probs, const torch::Tensor& targets, double eps) {
    auto numer = 2.0 * (probs * targets).sum(-1);
    auto denom = probs.sum(-1) + targets.sum(-1);
    return 1.0 - (numer + eps) / (denom + eps);
}

torch::Tensor class_targets(const std::vector<MatchResult>& matches, const std::vector<InstanceTarget>& targets,
                            int64_t batch, int64_t num_queries, int64_t num_classes) {
    auto out = torch::full({batch, num_queries}, num_classes, torch::kLong);
    auto acc = out.accessor<int64_t, 2>();
    for (int64_t b = 0; b < batch; ++b) {
        if (matches[b].assignment.empty()) {
            continue;
        }
        auto labels = targets[b].labels.to(torch::kCPU, torch::kLong).contiguous();
        auto lab = labels.accessor<int64_t, 1>();
        for (const auto& [query, gt] : matches[b].assignment) {
            acc[b][query] = lab[gt];
        }
    }
    return out;
}

torch::Tensor loss_ce_cls(const torch::Tensor& class_logits, const torch::Tensor& targets, const LossConfig& cfg) {
    const auto B = class_logits.size(0);
    const auto q = class_logits.size(1);
    const auto C = class_logits.size(2);
    auto weight = torch::ones({C}, class_logits.options().requires_grad(false));
    weight[C - 1] = cfg.no_object_weight;
    auto tgt = targets.to(class_logits.device()).reshape({-1});
    auto ce = F::cross_entropy(class_logits.reshape({-1, C}), tgt,
                               F::CrossEntropyFuncOptions().reduction(torch::kNone));
    return (ce * weight.index_select(0, tgt)).sum() / static_cast<double>(B * q);
}

SampledPairs sample_matched_pairs(const torch::Tensor& mask_logits, const std::vector<InstanceTarget>& targets,
                                  const std::vector<MatchResult>& matches, int64_t num_points,
                                  std::optional<at::Generator> generator) {
    std::vector<torch::Tensor> preds;
    std::vector<torch::Tensor> gts;
    for (size_t b = 0; b < matches.size(); ++b) {
        if (matches[b].assignment.empty()) {
            continue;
        }
        // GT order, so the point draw does not depend on which query won.
        auto pairs = matches[b].assignment;
        std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
        std::vector<int64_t> qi;
        std::vector<int64_t> gi;
        for (const auto& [query, gt] : pairs) {
            qi.push_back(query);
            gi.push_back(gt);
        }
        auto qidx = torch::tensor(qi, torch::kLong).to(mask_logits.device());
        auto gidx = torch::tensor(gi, torch::kLong).to(mask_logits.device());
        preds.push_back(mask_logits[static_cast<int64_t>(b)].index_select(0, qidx));
        gts.push_back(targets[b].masks.to(mask_logits.device()).index_select(0, gidx));
    }
    SampledPairs out;
    if (preds.empty()) {
        out.pred_logits = mask_logits.new_zeros({0, num_points});
        out.gt = mask_logits.new_zeros({0, num_points}).detach();
        return out;
    }
    auto pred = torch::cat(preds, 0);
    auto gt = torch::cat(gts, 0).to(pred.dtype());
    const auto K = pred.size(0);
    auto points = torch::rand({K, num_points, 2}, generator, pred.options().requires_grad(false));
    {
        torch::NoGradGuard no_grad;
        out.gt = point_sample(gt.unsqueeze(1), points).squeeze(1);
    }
    out.pred_logits = point_sample(pred.unsqueeze(1), points).squeeze(1);
    return out;
}

torch::Tensor loss_ce_seg(const SampledPairs& pairs, double num_masks) {
    if (pairs.pred_logits.size(0) == 0) {
        return pairs.pred_logits.sum();
    }
    return point_bce_terms(pairs.pred_logits, pairs.gt).sum() / num_masks;
}

torch::Tensor loss_dice(const SampledPairs& pairs, double num_masks, double eps) {
    if (pairs.pred_logits.size(0) == 0) {
        return pairs.pred_logits.sum();
    }
    return dice_terms(pairs.pred_logits.sigmoid(), pairs.gt, eps).sum() / num_masks;
}

LossOutput total_loss(const InstancePrediction& pred, const std::vector<InstanceTarget>& targets,
                      const LossConfig& cfg, std::optional<at::Generator> generator) {
    cfg.validate();
    const auto B = pred.class_logits.size(0);
    const auto q = pred.class_logits.size(1);
    const auto M = pred.class_logits.size(2) - 1;
    if (static_cast<int64_t>(targets.size()) != B) {
        throw ShapeError("loss got " + std::to_string(targets.size()) + " targets for a batch of " +
                         std::to_string(B));
    }
    double num_masks = 0.0;
    for (const auto& t : targets) {
        num_masks += t.labels.defined() ? static_cast<double>(t.labels.size(0)) : 0.0;
    }
    num_masks = std::max(num_masks, 1.0);

    std::vector<LayerPrediction> layers;
    if (cfg.deep_supervision && !pred.aux_outputs.empty()) {
        layers = pred.aux_outputs;
    } else {
        layers.push_back({pred.class_logits, pred.mask_logits});
    }

    LossOutput out;
    out.total = pred.class_logits.new_zeros({});
    torch::Tensor sum_cls = out.total;
    torch::Tensor sum_seg = out.total;
    torch::Tensor sum_dice = out.total;
    for (const auto& layer : layers) {
        std::vector<MatchResult> matches;
        matches.reserve(static_cast<size_t>(B));
        for (int64_t b = 0; b < B; ++b) {
            matches.push_back(hungarian_match(layer.class_logits[b], layer.mask_logits[b], targets[b], cfg, generator));
        }
        auto cls_t = class_targets(matches, targets, B, q, M);
        auto l_cls = cfg.lambda_cls * loss_ce_cls(layer.class_logits, cls_t, cfg);
        auto pairs = sample_matched_pairs(layer.mask_logits, targets, matches, cfg.num_points, generator);
        auto l_seg = cfg.lambda_ce_seg * loss_ce_seg(pairs, num_masks);
        auto l_dice = cfg.lambda_dice * loss_dice(pairs, num_masks, cfg.dice_eps);
        sum_cls = sum_cls + l_cls;
        sum_seg = sum_seg + l_seg;
        sum_dice = sum_dice + l_dice;
    }
    out.total = sum_cls + sum_seg + sum_dice;
    out.components["loss_ce_cls"] = sum_cls.item<double>();
    out.components["loss_ce_seg"] = sum_seg.item<double>();
    out.components["loss_dice"] = sum_dice.item<double>();
    out.components["loss_total"] = out.total.item<double>();
    return out;
}

}  // namespace mcsam
