#include "mcsam/encoder.hpp"

#include "mcsam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mcsam {

namespace F = torch::nn::functional;

void EncoderConfig::validate() const {
    if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) {
        throw ConfigError("encoder image_size (" + std::to_string(image_size) +
                          ") must be a positive multiple of patch_size (" + std::to_string(patch_size) + ")");
    }
    if (depth < 1) {
        throw ConfigError("encoder depth must be >= 1");
    }
    if (num_heads < 1 || embed_dim % num_heads != 0) {
        throw ConfigError("encoder embed_dim must be divisible by num_heads");
    }
    for (auto t : tap_indices) {
        if (t < 0 || t >= depth) {
            throw ConfigError("tap index " + std::to_string(t) + " outside [0, " + std::to_string(depth) + ")");
        }
    }
    for (auto g : global_attn_indices) {
        if (g < 0 || g >= depth) {
            throw ConfigError("global attention index " + std::to_string(g) + " outside the block range");
        }
    }
    if (window_size < 0) {
        throw ConfigError("window_size must be >= 0");
    }
    if (adapter == BlockAdapter::Mona) {
        auto m = mona;
        m.input_channels = embed_dim;
        m.validate();
    }
    if (adapter == BlockAdapter::Bottleneck && (adapter_bottleneck <= 0 || adapter_bottleneck >= embed_dim)) {
        throw ConfigError("adapter bottleneck must be in (0, embed_dim)");
    }
}

EncoderConfig sam_vit_b_config() {
    EncoderConfig c;
    c.image_size = 1024;
    c.patch_size = 16;
    c.embed_dim = 768;
    c.depth = 12;
    c.num_heads = 12;
    c.neck_out_channels = 256;
    c.tap_indices = {2, 5, 8, 11};
    c.window_size = 14;
    c.global_attn_indices = {2, 5, 8, 11};
    c.use_rel_pos = true;
    return c;
}

int64_t count_adapters(const EncoderConfig& config) {
    return 2 * config.depth;
}

// ---------------------------------------------------------------------------

PatchEmbedImpl::PatchEmbedImpl(const EncoderConfig& config) : image_size_(config.image_size) {
    ConvSpec spec;
    spec.in_channels = config.in_channels;
    spec.out_channels = config.embed_dim;
    spec.kernel = config.patch_size;
    spec.stride = config.patch_size;
    proj = register_module("proj", LoraConv2d(spec));
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& image) {
    if (image.dim() != 4 || image.size(1) != proj->spec().in_channels || image.size(2) != image_size_ ||
        image.size(3) != image_size_) {
        throw ShapeError("encoder expects [B, " + std::to_string(proj->spec().in_channels) + ", " +
                         std::to_string(image_size_) + ", " + std::to_string(image_size_) + "] images, got " +
                         c10::str(image.sizes()));
    }
    return proj(image).permute({0, 2, 3, 1});
}

// ---------------------------------------------------------------------------

torch::Tensor relative_position_table(int64_t q_size, int64_t k_size, const torch::Tensor& rel_pos) {
    const int64_t max_rel_dist = 2 * std::max(q_size, k_size) - 1;
    torch::Tensor resized = rel_pos;
    if (rel_pos.size(0) != max_rel_dist) {
        resized = F::interpolate(rel_pos.reshape({1, rel_pos.size(0), -1}).permute({0, 2, 1}),
                                 F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{max_rel_dist})
                                     .mode(torch::kLinear)
                                     .align_corners(false));
        resized = resized.reshape({-1, max_rel_dist}).permute({1, 0});
    }
    const double q_scale = std::max(static_cast<double>(k_size) / q_size, 1.0);
    const double k_scale = std::max(static_cast<double>(q_size) / k_size, 1.0);
    auto opts = torch::TensorOptions().dtype(torch::kDouble);
    auto q_coords = torch::arange(q_size, opts).unsqueeze(1) * q_scale;
    auto k_coords = torch::arange(k_size, opts).unsqueeze(0) * k_scale;
    auto rel = (q_coords - k_coords) + static_cast<double>(k_size - 1) * k_scale;
    return resized.index({rel.to(torch::kLong)});
}

AttentionImpl::AttentionImpl(int64_t dim, int64_t num_heads, bool use_rel_pos, int64_t input_size)
    : num_heads_(num_heads), use_rel_pos_(use_rel_pos) {
    const int64_t head_dim = dim / num_heads;
    scale_ = 1.0 / std::sqrt(static_cast<double>(head_dim));
    qkv = register_module("qkv", LoraLinear(dim, dim * 3));
    proj = register_module("proj", LoraLinear(dim, dim));
    if (use_rel_pos_) {
        rel_pos_h = register_parameter("rel_pos_h", torch::zeros({2 * input_size - 1, head_dim}));
        rel_pos_w = register_parameter("rel_pos_w", torch::zeros({2 * input_size - 1, head_dim}));
    }
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) {
    const auto B = x.size(0);
    const auto H = x.size(1);
    const auto W = x.size(2);
    auto qkv_out = qkv(x).reshape({B, H * W, 3, num_heads_, -1}).permute({2, 0, 3, 1, 4});
    auto parts = qkv_out.reshape({3, B * num_heads_, H * W, -1}).unbind(0);
    const auto& q = parts[0];
    const auto& k = parts[1];
    const auto& v = parts[2];

    auto attn = torch::matmul(q * scale_, k.transpose(-2, -1));
    if (use_rel_pos_) {
        auto rh = relative_position_table(H, H, rel_pos_h);
        auto rw = relative_position_table(W, W, rel_pos_w);
        const auto dim = q.size(-1);
        auto r_q = q.reshape({B * num_heads_, H, W, dim});
        auto rel_h = torch::einsum("bhwc,hkc->bhwk", {r_q, rh});
        auto rel_w = torch::einsum("bhwc,wkc->bhwk", {r_q, rw});
        attn = (attn.view({B * num_heads_, H, W, H, W}) + rel_h.unsqueeze(-1) + rel_w.unsqueeze(-2))
                   .view({B * num_heads_, H * W, H * W});
    }
    attn = attn.softmax(-1);
    auto out = torch::matmul(attn, v).view({B, num_heads_, H, W, -1}).permute({0, 2, 3, 1, 4}).reshape({B, H, W, -1});
    return proj(out);
}

// ---------------------------------------------------------------------------

namespace {

struct Partitioned {
    torch::Tensor windows;
    int64_t padded_h;
    int64_t padded_w;
};

Partitioned window_partition(const torch::Tensor& x, int64_t ws) {
    const auto B = x.size(0);
    const auto H = x.size(1);
    const auto W = x.size(2);
    const auto C = x.size(3);
    const int64_t pad_h = (ws - H % ws) % ws;
    const int64_t pad_w = (ws - W % ws) % ws;
    auto padded = x;
    if (pad_h > 0 || pad_w > 0) {
        padded = F::pad(x, F::PadFuncOptions({0, 0, 0, pad_w, 0, pad_h}));
    }
    const int64_t Hp = H + pad_h;
    const int64_t Wp = W + pad_w;
    auto windows = padded.view({B, Hp / ws, ws, Wp / ws, ws, C})
                       .permute({0, 1, 3, 2, 4, 5})
                       .contiguous()
                       .view({-1, ws, ws, C});
    return {windows, Hp, Wp};
}

torch::Tensor window_unpartition(const torch::Tensor& windows, int64_t ws, int64_t Hp, int64_t Wp, int64_t H,
                                 int64_t W) {
    const auto B = windows.size(0) / (Hp * Wp / ws / ws);
    auto x = windows.view({B, Hp / ws, Wp / ws, ws, ws, -1}).permute({0, 1, 3, 2, 4, 5}).contiguous().view(
        {B, Hp, Wp, -1});
    if (Hp > H || Wp > W) {
        x = x.index({torch::indexing::Slice(), torch::indexing::Slice(0, H), torch::indexing::Slice(0, W)})
                .contiguous();
    }
    return x;
}

bool is_global(const EncoderConfig& config, int64_t index) {
    return config.window_size == 0 ||
           std::find(config.global_attn_indices.begin(), config.global_attn_indices.end(), index) !=
               config.global_attn_indices.end();
}

}  // namespace

EncoderBlockImpl::EncoderBlockImpl(const EncoderConfig& config, int64_t index)
    : window_size_(is_global(config, index) ? 0 : config.window_size) {
    const auto dim = config.embed_dim;
    const auto eps = config.norm_epsilon;
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(eps)));
    attn = register_module("attn", Attention(dim, config.num_heads, config.use_rel_pos,
                                             window_size_ == 0 ? config.grid_size() : window_size_));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(eps)));
    mlp = register_module("mlp", MlpBlock(dim, static_cast<int64_t>(dim * config.mlp_ratio)));

    switch (config.adapter) {
        case BlockAdapter::Mona: {
            auto mc = config.mona;
            mc.input_channels = dim;
            mona1 = register_module("mona1", Mona(mc));
            mona2 = register_module("mona2", Mona(mc));
            break;
        }
        case BlockAdapter::Bottleneck:
            adapter1 = register_module("adapter1", BottleneckAdapter(dim, config.adapter_bottleneck));
            adapter2 = register_module("adapter2", BottleneckAdapter(dim, config.adapter_bottleneck));
            break;
        case BlockAdapter::None:
            break;
    }
}

torch::Tensor EncoderBlockImpl::adapt(const torch::Tensor& x, int site) {
    if (mona1) {
        return x + (site == 1 ? mona1 : mona2)(x);
    }
    if (adapter1) {
        return x + (site == 1 ? adapter1 : adapter2)(x);
    }
    return x;
}

torch::Tensor EncoderBlockImpl::forward(const torch::Tensor& x) {
    auto shortcut = x;
    auto h = norm1(x);
    if (window_size_ > 0) {
        const auto H = h.size(1);
        const auto W = h.size(2);
        auto part = window_partition(h, window_size_);
        h = attn(part.windows);
        h = window_unpartition(h, window_size_, part.padded_h, part.padded_w, H, W);
    } else {
        h = attn(h);
    }
    auto out = adapt(shortcut + h, 1);
    out = out + mlp(norm2(out));
    return adapt(out, 2);
}

// ---------------------------------------------------------------------------

SamMonaEncoderImpl::SamMonaEncoderImpl(EncoderConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto grid = config_.grid_size();
    const auto dim = config_.embed_dim;

    patch_embed = register_module("patch_embed", PatchEmbed(config_));
    pos_embed = register_parameter("pos_embed", torch::empty({1, grid, grid, dim}));
    {
        torch::NoGradGuard no_grad;
        pos_embed.normal_(0.0, 0.02).clamp_(-2.0, 2.0);
    }
    for (int64_t i = 0; i < config_.depth; ++i) {
        blocks.push_back(register_module("block" + std::to_string(i), EncoderBlock(config_, i)));
    }

    ConvSpec c1{dim, config_.neck_out_channels, 1, 1, 0, false};
    ConvSpec c2{config_.neck_out_channels, config_.neck_out_channels, 3, 1, 1, false};
    neck_conv1 = register_module("neck_conv1", LoraConv2d(c1));
    neck_norm1 = register_module("neck_norm1", LayerNorm2d(config_.neck_out_channels));
    neck_conv2 = register_module("neck_conv2", LoraConv2d(c2));
    neck_norm2 = register_module("neck_norm2", LayerNorm2d(config_.neck_out_channels));
}

torch::Tensor SamMonaEncoderImpl::patchify(const torch::Tensor& image) {
    return patch_embed(image) + pos_embed;
}

EncoderOutput SamMonaEncoderImpl::forward(const torch::Tensor& image) {
    auto x = patchify(image);
    EncoderOutput out;
    std::vector<torch::Tensor> by_block(blocks.size());
    for (int64_t i = 0; i < static_cast<int64_t>(blocks.size()); ++i) {
        try {
            x = blocks[i](x);
        } catch (const NumericError& e) {
            throw NumericError("encoder block " + std::to_string(i) + ": " + e.what());
        }
        if (!torch::isfinite(x).all().item<bool>()) {
            throw NumericError("non-finite activation after encoder block " + std::to_string(i));
        }
        if (observer_) {
            observer_(i, x);
        }
        by_block[i] = x;
    }
    for (auto t : config_.tap_indices) {
        out.taps.push_back(by_block[t].permute({0, 3, 1, 2}));
    }
    auto y = x.permute({0, 3, 1, 2});
    y = neck_norm1(neck_conv1(y));
    out.final_map = neck_norm2(neck_conv2(y));
    return out;
}

}  // namespace mcsam
