#include "mcsam/aggregator.hpp"

#include "mcsam/errors.hpp"

#include <string>

namespace mcsam {

void AggregatorConfig::validate() const {
    if (in_channels <= 0 || mid_channels <= 0 || out_channels <= 0) {
        throw ConfigError("aggregator channel counts must be positive");
    }
    if (num_taps < 1) {
        throw ConfigError("aggregator needs at least one tap");
    }
}

FeatureAggregatorImpl::FeatureAggregatorImpl(AggregatorConfig config) : config_(config) {
    config_.validate();
    namespace nn = torch::nn;
    reduce = register_module("reduce", nn::Conv2d(nn::Conv2dOptions(config_.in_channels, config_.mid_channels, 1)));
    if (config_.fusion == TapFusion::Concat) {
        fuse = register_module(
            "fuse", nn::Conv2d(nn::Conv2dOptions(config_.mid_channels * config_.num_taps, config_.mid_channels, 1)));
    }
    conv1 = register_module(
        "conv1", nn::Conv2d(nn::Conv2dOptions(config_.mid_channels, config_.out_channels, 3).padding(1)));
    norm1 = register_module("norm1", LayerNorm2d(config_.out_channels));
    conv2 = register_module(
        "conv2", nn::Conv2d(nn::Conv2dOptions(config_.out_channels, config_.out_channels, 3).padding(1)));
    norm2 = register_module("norm2", LayerNorm2d(config_.out_channels));
}

torch::Tensor FeatureAggregatorImpl::fuse_taps(const std::vector<torch::Tensor>& taps) {
    if (taps.empty()) {
        throw ShapeError("aggregator received no taps");
    }
    if (static_cast<int64_t>(taps.size()) != config_.num_taps) {
        throw ShapeError("aggregator expects " + std::to_string(config_.num_taps) + " taps, got " +
                         std::to_string(taps.size()));
    }
    for (const auto& t : taps) {
        if (t.sizes() != taps.front().sizes()) {
            throw ShapeError("aggregator taps disagree in shape: " + c10::str(t.sizes()) + " vs " +
                             c10::str(taps.front().sizes()));
        }
    }
    if (taps.front().dim() != 4 || taps.front().size(1) != config_.in_channels) {
        throw ShapeError("aggregator taps must be [B, " + std::to_string(config_.in_channels) + ", h, w]");
    }

    if (config_.fusion == TapFusion::Sum) {
        auto fused = reduce(taps.front());
        for (size_t i = 1; i < taps.size(); ++i) {
            fused = fused + reduce(taps[i]);
        }
        return fused;
    }
    std::vector<torch::Tensor> reduced;
    reduced.reserve(taps.size());
    for (const auto& t : taps) {
        reduced.push_back(reduce(t));
    }
    return fuse(torch::cat(reduced, 1));
}

torch::Tensor FeatureAggregatorImpl::forward(const std::vector<torch::Tensor>& taps) {
    auto x = fuse_taps(taps);
    x = torch::gelu(norm1(conv1(x)));
    return torch::gelu(norm2(conv2(x)));
}

torch::Tensor fuse_with_encoder(const torch::Tensor& final_map, const torch::Tensor& neck) {
    if (final_map.sizes() != neck.sizes()) {
        throw ShapeError("cannot add encoder map " + c10::str(final_map.sizes()) + " and neck map " +
                         c10::str(neck.sizes()));
    }
    return final_map + neck;
}

}  // namespace mcsam
