#include "mcsam/model.hpp"

#include "mcsam/errors.hpp"

#include <string>

namespace mcsam {

void ModelConfig::validate() const {
    encoder.validate();
    aggregator.validate();
    pixel.validate();
    decoder.validate();
    if (aggregator.in_channels != encoder.embed_dim) {
        throw ConfigError("aggregator in_channels " + std::to_string(aggregator.in_channels) +
                          " must equal encoder embed_dim " + std::to_string(encoder.embed_dim));
    }
    if (aggregator.num_taps != static_cast<int64_t>(encoder.tap_indices.size())) {
        throw ConfigError("aggregator num_taps must equal the number of encoder tap indices");
    }
    if (aggregator.out_channels != encoder.neck_out_channels) {
        throw ConfigError("aggregator out_channels must equal encoder neck_out_channels");
    }
    if (pixel.in_channels != encoder.neck_out_channels) {
        throw ConfigError("pixel decoder in_channels must equal encoder neck_out_channels");
    }
    if (decoder.in_channels != pixel.conv_dim || decoder.mask_dim != pixel.mask_dim) {
        throw ConfigError("decoder in_channels/mask_dim must equal pixel decoder conv_dim/mask_dim");
    }
    const auto grid = encoder.grid_size();
    if (grid < 4 || grid % 2 != 0) {
        throw ConfigError("token grid " + std::to_string(grid) + " too small for the pixel decoder (need even >= 4)");
    }
}

MaskDecoderImpl::MaskDecoderImpl(const PixelDecoderConfig& pixel_cfg, const DecoderConfig& decoder_cfg) {
    pixel = register_module("pixel", PixelDecoder(pixel_cfg));
    transformer = register_module("transformer", TransformerDecoder(decoder_cfg));
}

InstancePrediction MaskDecoderImpl::forward(const torch::Tensor& f_enc) {
    return transformer(pixel(f_enc));
}

MCSamSegImpl::MCSamSegImpl(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    encoder = register_module("encoder", SamMonaEncoder(config_.encoder));
    neck = register_module("neck", FeatureAggregator(config_.aggregator));
    decoder = register_module("decoder", MaskDecoder(config_.pixel, config_.decoder));
}

InstancePrediction MCSamSegImpl::forward(const torch::Tensor& images) {
    auto enc = encoder(images);
    auto f_enc = fuse_with_encoder(enc.final_map, neck(enc.taps));
    return decoder(f_enc);
}

std::vector<InstanceResult> instance_inference(const torch::Tensor& class_logits, const torch::Tensor& mask_logits,
                                               int64_t top_k) {
    torch::NoGradGuard no_grad;
    const auto q = class_logits.size(0);
    const auto M = class_logits.size(1) - 1;
    if (mask_logits.size(0) != q) {
        throw ShapeError("instance_inference: " + std::to_string(q) + " class rows but " +
                         std::to_string(mask_logits.size(0)) + " masks");
    }
    auto probs = torch::softmax(class_logits.to(torch::kFloat), -1).narrow(1, 0, M).flatten();
    const auto k = std::min<int64_t>(top_k, q * M);
    auto [top_scores, top_idx] = probs.topk(k, 0, /*largest=*/true, /*sorted=*/true);

    std::vector<InstanceResult> out;
    out.reserve(static_cast<size_t>(k));
    auto scores_acc = top_scores.accessor<float, 1>();
    auto idx_acc = top_idx.accessor<int64_t, 1>();
    for (int64_t i = 0; i < k; ++i) {
        InstanceResult r;
        r.query = idx_acc[i] / M;
        r.label = idx_acc[i] % M;
        auto logits = mask_logits[r.query].to(torch::kFloat);
        r.mask = logits > 0;
        auto fg = r.mask.to(torch::kFloat);
        const double mask_score = ((logits.sigmoid() * fg).sum() / (fg.sum() + 1e-6)).item<double>();
        r.score = static_cast<double>(scores_acc[i]) * mask_score;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace mcsam
