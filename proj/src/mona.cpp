#include "mcsam/mona.hpp"

#include "mcsam/errors.hpp"

#include <string>

namespace mcsam {

void MonaConfig::validate() const {
    if (input_channels <= 0 || bottleneck_channels <= 0) {
        throw ConfigError("Mona channel counts must be positive");
    }
    if (bottleneck_channels >= input_channels) {
        throw ConfigError("Mona bottleneck (" + std::to_string(bottleneck_channels) +
                          ") must be narrower than the input (" + std::to_string(input_channels) + ")");
    }
    if (kernel_sizes.empty()) {
        throw ConfigError("Mona needs at least one depthwise kernel size");
    }
    for (auto k : kernel_sizes) {
        if (k < 1 || k % 2 == 0) {
            throw ConfigError("Mona kernel sizes must be odd and >= 1, got " + std::to_string(k));
        }
    }
    if (!(norm_epsilon > 0.0)) {
        throw ConfigError("Mona norm epsilon must be positive");
    }
}

int64_t mona_param_count(const MonaConfig& config) {
    const int64_t c = config.input_channels;
    const int64_t b = config.bottleneck_channels;
    int64_t depthwise = 0;
    for (auto k : config.kernel_sizes) {
        depthwise += k * k * b + b;
    }
    return 2 + 2 * c + (c * b + b) + depthwise + (b * b + b) + (b * c + c);
}

MonaImpl::MonaImpl(MonaConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto c = config_.input_channels;
    const auto b = config_.bottleneck_channels;

    scale_s1 = register_parameter("scale_s1", torch::ones({1}));
    scale_s2 = register_parameter("scale_s2", torch::zeros({1}));
    norm = register_module(
        "norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c}).eps(config_.norm_epsilon)));
    down_proj = register_module("down_proj", torch::nn::Linear(c, b));
    for (auto k : config_.kernel_sizes) {
        auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(b, b, k).padding(k / 2).groups(b));
        dw_convs.push_back(register_module("dw_conv" + std::to_string(k), conv));
    }
    pointwise = register_module("pointwise", torch::nn::Conv2d(torch::nn::Conv2dOptions(b, b, 1)));
    up_proj = register_module("up_proj", torch::nn::Linear(b, c));

    torch::NoGradGuard no_grad;
    up_proj->weight.zero_();
    up_proj->bias.zero_();
}

torch::Tensor MonaImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(3) != config_.input_channels) {
        throw ConfigError("Mona expects [B, H, W, " + std::to_string(config_.input_channels) +
                          "] input, got " + c10::str(x.sizes()));
    }
    if (!torch::isfinite(x).all().item<bool>()) {
        throw NumericError("Mona input contains non-finite values");
    }

    auto scaled = norm(x) * scale_s1 + x * scale_s2;
    auto down = down_proj(scaled).permute({0, 3, 1, 2});

    auto multi = dw_convs.front()(down);
    for (size_t i = 1; i < dw_convs.size(); ++i) {
        multi = multi + dw_convs[i](down);
    }
    auto agg = down + multi / static_cast<double>(dw_convs.size());
    agg = agg + pointwise(agg);

    return up_proj(torch::gelu(agg.permute({0, 2, 3, 1})));
}

}  // namespace mcsam
