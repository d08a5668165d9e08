#pragma once

#include "mcsam/layers.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace mcsam {

enum class TapFusion { Sum, Concat };

struct AggregatorConfig {
    int64_t in_channels = 768;
    int64_t mid_channels = 256;
    int64_t out_channels = 256;
    int64_t num_taps = 4;
    TapFusion fusion = TapFusion::Sum;

    void validate() const;
};

/// Lightweight neck fusing intermediate encoder taps into F_neck.
///
/// Every tap goes through one shared 1x1 reduction to mid_channels. Sum fusion
/// adds the reduced taps (order-independent); concat fusion stacks them and
/// mixes with a 1x1 conv (order-dependent). Two 3x3 conv + LayerNorm2d + GELU
/// blocks then produce out_channels at the tap resolution.
class FeatureAggregatorImpl : public torch::nn::Module {
public:
    explicit FeatureAggregatorImpl(AggregatorConfig config);

    torch::Tensor forward(const std::vector<torch::Tensor>& taps);

    // Fused tensor before the conv blocks.
    torch::Tensor fuse_taps(const std::vector<torch::Tensor>& taps);

    const AggregatorConfig& config() const { return config_; }

    torch::nn::Conv2d reduce{nullptr};
    torch::nn::Conv2d fuse{nullptr};  // concat fusion only
    torch::nn::Conv2d conv1{nullptr};
    LayerNorm2d norm1{nullptr};
    torch::nn::Conv2d conv2{nullptr};
    LayerNorm2d norm2{nullptr};

private:
    AggregatorConfig config_;
};
TORCH_MODULE(FeatureAggregator);

// F_enc = F_img + F_neck.
torch::Tensor fuse_with_encoder(const torch::Tensor& final_map, const torch::Tensor& neck);

}  // namespace mcsam
