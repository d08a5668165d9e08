#pragma once

#include "mcsam/layers.hpp"
#include "mcsam/mona.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace mcsam {

// Which residual adapter sits after attention and after the MLP of each block.
enum class BlockAdapter { None, Mona, Bottleneck };

struct EncoderConfig {
    int64_t image_size = 1024;
    int64_t patch_size = 16;
    int64_t in_channels = 3;
    int64_t embed_dim = 768;
    int64_t depth = 12;
    int64_t num_heads = 12;
    double mlp_ratio = 4.0;
    int64_t neck_out_channels = 256;
    std::vector<int64_t> tap_indices{2, 5, 8, 11};

    // SAM block layout: windowed attention everywhere except the global
    // blocks, decomposed relative position terms. window_size 0 = global.
    int64_t window_size = 0;
    std::vector<int64_t> global_attn_indices;
    bool use_rel_pos = false;
    double norm_epsilon = 1e-6;

    BlockAdapter adapter = BlockAdapter::None;
    MonaConfig mona;  // input_channels is overwritten with embed_dim
    int64_t adapter_bottleneck = 64;

    int64_t grid_size() const { return image_size / patch_size; }
    void validate() const;
};

// SAM ViT-B layout (1024 input, 16 px patches, 12 blocks, windowed attention).
EncoderConfig sam_vit_b_config();

// Number of adapters the encoder carries: one after attention and one after
// the MLP of every block.
int64_t count_adapters(const EncoderConfig& config);

struct EncoderOutput {
    torch::Tensor final_map;          // F_img  [B, neck_out, h, w]
    std::vector<torch::Tensor> taps;  // {F_i}  [B, embed_dim, h, w] each
};

class PatchEmbedImpl : public torch::nn::Module {
public:
    explicit PatchEmbedImpl(const EncoderConfig& config);
    // [B, 3, S, S] -> [B, S/p, S/p, D]
    torch::Tensor forward(const torch::Tensor& image);

    LoraConv2d proj{nullptr};

private:
    int64_t image_size_;
};
TORCH_MODULE(PatchEmbed);

class AttentionImpl : public torch::nn::Module {
public:
    AttentionImpl(int64_t dim, int64_t num_heads, bool use_rel_pos, int64_t input_size);
    // x: [B, H, W, C]
    torch::Tensor forward(const torch::Tensor& x);

    LoraLinear qkv{nullptr};
    LoraLinear proj{nullptr};
    torch::Tensor rel_pos_h;
    torch::Tensor rel_pos_w;

private:
    int64_t num_heads_;
    double scale_;
    bool use_rel_pos_;
};
TORCH_MODULE(Attention);

class EncoderBlockImpl : public torch::nn::Module {
public:
    EncoderBlockImpl(const EncoderConfig& config, int64_t index);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::LayerNorm norm1{nullptr};
    Attention attn{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
    MlpBlock mlp{nullptr};
    Mona mona1{nullptr};
    Mona mona2{nullptr};
    BottleneckAdapter adapter1{nullptr};
    BottleneckAdapter adapter2{nullptr};

private:
    torch::Tensor adapt(const torch::Tensor& x, int site);

    int64_t window_size_;
};
TORCH_MODULE(EncoderBlock);

/// ViT image encoder with per-block adapters and a two-conv output neck.
class SamMonaEncoderImpl : public torch::nn::Module {
public:
    explicit SamMonaEncoderImpl(EncoderConfig config);

    EncoderOutput forward(const torch::Tensor& image);

    // Token embedding plus positional table, [B, h, w, D].
    torch::Tensor patchify(const torch::Tensor& image);

    // Called with (block index, activation [B, h, w, D]) after every block.
    using BlockObserver = std::function<void(int64_t, const torch::Tensor&)>;
    void set_block_observer(BlockObserver observer) { observer_ = std::move(observer); }

    const EncoderConfig& config() const { return config_; }

    PatchEmbed patch_embed{nullptr};
    torch::Tensor pos_embed;  // [1, h, w, D]
    std::vector<EncoderBlock> blocks;
    LoraConv2d neck_conv1{nullptr};
    LayerNorm2d neck_norm1{nullptr};
    LoraConv2d neck_conv2{nullptr};
    LayerNorm2d neck_norm2{nullptr};

private:
    EncoderConfig config_;
    BlockObserver observer_;
};
TORCH_MODULE(SamMonaEncoder);

// Relative position table for q_size x k_size, resized when its length differs
// from 2 * max(q, k) - 1. Exposed for tests.
torch::Tensor relative_position_table(int64_t q_size, int64_t k_size, const torch::Tensor& rel_pos);

}  // namespace mcsam
