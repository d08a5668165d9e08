#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace mcsam {

struct MonaConfig {
    int64_t input_channels = 768;
    int64_t bottleneck_channels = 64;
    std::vector<int64_t> kernel_sizes{3, 5, 7};
    double norm_epsilon = 1e-6;

    // Throws ConfigError when an invariant is violated.
    void validate() const;
};

// Closed-form trainable parameter count of one Mona block.
int64_t mona_param_count(const MonaConfig& config);

/// Multi-cognitive visual adapter.
///
/// Input and output are token grids laid out [B, H, W, C]. The block computes
///
///   F'      = LN(F) * S1 + F * S2
///   F_down  = DownProj(F')
///   F_agg   = F_down + mean_k DWConv_k(F_down)      (same padding)
///   F'_agg  = F_agg + Conv1x1(F_agg)
///   out     = UpProj(GELU(F'_agg))
///
/// and returns `out` only; the encoder block adds the residual. S1 starts at
/// 1, S2 at 0 and UpProj at exactly zero, so input + forward(input) is the
/// identity until the first update.
class MonaImpl : public torch::nn::Module {
public:
    explicit MonaImpl(MonaConfig config);

    torch::Tensor forward(const torch::Tensor& x);

    const MonaConfig& config() const { return config_; }

    torch::Tensor scale_s1;
    torch::Tensor scale_s2;
    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear down_proj{nullptr};
    std::vector<torch::nn::Conv2d> dw_convs;
    torch::nn::Conv2d pointwise{nullptr};
    torch::nn::Linear up_proj{nullptr};

private:
    MonaConfig config_;
};
TORCH_MODULE(Mona);

}  // namespace mcsam
