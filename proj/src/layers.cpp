#include "mcsam/layers.hpp"

#include "mcsam/errors.hpp"

#include <cmath>
#include <string>

namespace mcsam {

namespace F = torch::nn::functional;

namespace {

// torch.nn.Linear / Conv2d default initialization.
void default_init(torch::Tensor& weight, torch::Tensor& bias, int64_t fan_in) {
    torch::NoGradGuard no_grad;
    torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
    if (bias.defined()) {
        const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
        bias.uniform_(-bound, bound);
    }
}

void check_rank(int64_t rank, int64_t fan_in, int64_t fan_out, const char* what) {
    if (rank <= 0 || rank >= std::min(fan_in, fan_out)) {
        throw ConfigError(std::string("LoRA rank ") + std::to_string(rank) + " invalid for " + what +
                          " (fan_in " + std::to_string(fan_in) + ", fan_out " + std::to_string(fan_out) +
                          "); need 0 < rank < min(fan_in, fan_out)");
    }
}

}  // namespace

LayerNorm2dImpl::LayerNorm2dImpl(int64_t channels, double eps) : eps_(eps) {
    weight = register_parameter("weight", torch::ones({channels}));
    bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
    auto u = x.mean(1, /*keepdim=*/true);
    auto s = (x - u).pow(2).mean(1, true);
    auto y = (x - u) / torch::sqrt(s + eps_);
    return weight.view({1, -1, 1, 1}) * y + bias.view({1, -1, 1, 1});
}

LoraLinearImpl::LoraLinearImpl(int64_t in_features, int64_t out_features, bool with_bias)
    : in_features_(in_features), out_features_(out_features) {
    weight = register_parameter("weight", torch::empty({out_features, in_features}));
    if (with_bias) {
        bias = register_parameter("bias", torch::empty({out_features}));
    }
    default_init(weight, bias, in_features);
}

void LoraLinearImpl::enable_lora(int64_t rank, double alpha) {
    if (has_lora()) {
        throw ConfigError("LoRA branch already enabled");
    }
    check_rank(rank, in_features_, out_features_, "linear layer");
    lora_a = register_parameter("lora_a", torch::empty({rank, in_features_}, weight.options()));
    lora_b = register_parameter("lora_b", torch::zeros({out_features_, rank}, weight.options()));
    torch::NoGradGuard no_grad;
    torch::nn::init::kaiming_uniform_(lora_a, std::sqrt(5.0));
    lora_scale_ = alpha / static_cast<double>(rank);
}

torch::Tensor LoraLinearImpl::forward(const torch::Tensor& x) {
    auto y = F::linear(x, weight, bias);
    if (has_lora()) {
        y = y + lora_scale_ * F::linear(F::linear(x, lora_a), lora_b);
    }
    return y;
}

torch::Tensor LoraLinearImpl::merged_weight() const {
    if (!has_lora()) {
        return weight;
    }
    return weight + lora_scale_ * torch::matmul(lora_b, lora_a);
}

LoraConv2dImpl::LoraConv2dImpl(const ConvSpec& spec) : spec_(spec) {
    weight = register_parameter(
        "weight", torch::empty({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}));
    if (spec.with_bias) {
        bias = register_parameter("bias", torch::empty({spec.out_channels}));
    }
    default_init(weight, bias, fan_in());
}

void LoraConv2dImpl::enable_lora(int64_t rank, double alpha) {
    if (has_lora()) {
        throw ConfigError("LoRA branch already enabled");
    }
    check_rank(rank, fan_in(), fan_out(), "conv layer");
    lora_a = register_parameter("lora_a", torch::empty({rank, fan_in()}, weight.options()));
    lora_b = register_parameter("lora_b", torch::zeros({fan_out(), rank}, weight.options()));
    torch::NoGradGuard no_grad;
    torch::nn::init::kaiming_uniform_(lora_a, std::sqrt(5.0));
    lora_scale_ = alpha / static_cast<double>(rank);
}

torch::Tensor LoraConv2dImpl::forward(const torch::Tensor& x) {
    auto opts = F::Conv2dFuncOptions().stride(spec_.stride).padding(spec_.padding);
    auto y = F::conv2d(x, weight, opts.bias(bias));
    if (has_lora()) {
        const auto rank = lora_a.size(0);
        auto a_kernel = lora_a.view({rank, spec_.in_channels, spec_.kernel, spec_.kernel});
        auto low = F::conv2d(x, a_kernel, F::Conv2dFuncOptions().stride(spec_.stride).padding(spec_.padding));
        y = y + lora_scale_ * F::conv2d(low, lora_b.view({spec_.out_channels, rank, 1, 1}));
    }
    return y;
}

torch::Tensor LoraConv2dImpl::merged_weight() const {
    if (!has_lora()) {
        return weight;
    }
    return weight + lora_scale_ * torch::matmul(lora_b, lora_a).view_as(weight);
}

MlpBlockImpl::MlpBlockImpl(int64_t dim, int64_t hidden) {
    lin1 = register_module("lin1", LoraLinear(dim, hidden));
    lin2 = register_module("lin2", LoraLinear(hidden, dim));
}

torch::Tensor MlpBlockImpl::forward(const torch::Tensor& x) {
    return lin2(torch::gelu(lin1(x)));
}

BottleneckAdapterImpl::BottleneckAdapterImpl(int64_t channels, int64_t bottleneck) {
    if (bottleneck <= 0 || bottleneck >= channels) {
        throw ConfigError("adapter bottleneck must be in (0, " + std::to_string(channels) + ")");
    }
    down_proj = register_module("down_proj", torch::nn::Linear(channels, bottleneck));
    up_proj = register_module("up_proj", torch::nn::Linear(bottleneck, channels));
    torch::NoGradGuard no_grad;
    up_proj->weight.zero_();
    up_proj->bias.zero_();
}

torch::Tensor BottleneckAdapterImpl::forward(const torch::Tensor& x) {
    return up_proj(torch::gelu(down_proj(x)));
}

PredictionMlpImpl::PredictionMlpImpl(int64_t in_dim, int64_t hidden_dim, int64_t out_dim,
                                     int64_t num_layers) {
    for (int64_t i = 0; i < num_layers; ++i) {
        const int64_t n_in = i == 0 ? in_dim : hidden_dim;
        const int64_t n_out = i + 1 == num_layers ? out_dim : hidden_dim;
        layers_.push_back(register_module("layer" + std::to_string(i), torch::nn::Linear(n_in, n_out)));
    }
}

torch::Tensor PredictionMlpImpl::forward(torch::Tensor x) {
    for (size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i](x);
        if (i + 1 < layers_.size()) {
            x = torch::relu(x);
        }
    }
    return x;
}

torch::Tensor sine_position_embedding(const torch::Tensor& x, int64_t num_pos_feats, double temperature) {
    const auto B = x.size(0);
    const auto H = x.size(2);
    const auto W = x.size(3);
    const double scale = 2.0 * M_PI;
    const double eps = 1e-6;
    auto opts = x.options().requires_grad(false);
    auto ones = torch::ones({B, H, W}, opts);
    auto y_embed = ones.cumsum(1);
    auto x_embed = ones.cumsum(2);
    y_embed = (y_embed - 0.5) / (y_embed.narrow(1, H - 1, 1) + eps) * scale;
    x_embed = (x_embed - 0.5) / (x_embed.narrow(2, W - 1, 1) + eps) * scale;

    auto dim_t = torch::arange(num_pos_feats, opts);
    dim_t = torch::pow(temperature, 2.0 * torch::floor(dim_t / 2.0) / static_cast<double>(num_pos_feats));

    auto encode = [&](const torch::Tensor& e) {
        auto p = e.unsqueeze(-1) / dim_t;
        using torch::indexing::Slice;
        auto even = p.index({Slice(), Slice(), Slice(), Slice(0, torch::indexing::None, 2)}).sin();
        auto odd = p.index({Slice(), Slice(), Slice(), Slice(1, torch::indexing::None, 2)}).cos();
        return torch::stack({even, odd}, 4).flatten(3);
    };
    return torch::cat({encode(y_embed), encode(x_embed)}, 3).permute({0, 3, 1, 2}).contiguous();
}

torch::nn::GroupNorm make_group_norm(int64_t channels) {
    int64_t groups = std::min<int64_t>(32, channels);
    while (channels % groups != 0) {
        --groups;
    }
    return torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, channels));
}

}  // namespace mcsam
