#pragma once

#include "mcsam/coco.hpp"
#include "mcsam/matcher.hpp"

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace mcsam {

// SAM pixel statistics on the 0..255 scale, RGB order.
constexpr std::array<double, 3> kSamPixelMean = {123.675, 116.28, 103.53};
constexpr std::array<double, 3> kSamPixelStd = {58.395, 57.12, 57.375};

struct PreprocessConfig {
    int64_t image_size = 1024;
    std::array<double, 3> mean = kSamPixelMean;
    std::array<double, 3> std = kSamPixelStd;
    double flip_probability = 0.5;
};

struct ModelSample {
    int64_t image_id = 0;
    torch::Tensor image;   // float [3, S, S], normalized, zero-padded bottom/right
    InstanceTarget target; // masks [g, S, S] in {0, 1}
    std::vector<int64_t> category_ids;
    std::vector<Box> boxes;  // tight boxes of the transformed masks
    int64_t orig_height = 0;
    int64_t orig_width = 0;
    int64_t valid_height = 0;  // resized extent before padding
    int64_t valid_width = 0;
    double scale = 1.0;
    bool flipped = false;
    int64_t dropped_instances = 0;
};

// RGB uint8 image with grayscale replicated and alpha dropped.
cv::Mat read_image_rgb(const std::filesystem::path& path);

// Per-channel mean/std (0..255 scale) over the given images.
std::pair<std::array<double, 3>, std::array<double, 3>> channel_statistics(const DatasetSplit& split);

// Resize long side to image_size (bilinear image, nearest masks), optional
// horizontal flip (train only, p from cfg, drawn from rng), normalize, pad.
// Crowd instances are not included in the target.
ModelSample preprocess(const CocoSample& sample, const cv::Mat& rgb, const DatasetSplit& split,
                       const PreprocessConfig& cfg, bool train, std::mt19937_64& rng);
ModelSample preprocess(const CocoSample& sample, const DatasetSplit& split, const PreprocessConfig& cfg, bool train,
                       uint64_t seed);

// Mirrors image, masks and boxes in place across the valid width.
void hflip(ModelSample& s);

struct Batch {
    torch::Tensor images;  // [B, 3, S, S]
    std::vector<InstanceTarget> targets;
    std::vector<ModelSample> samples;
};

Batch collate(std::vector<ModelSample> samples);

// Seeded, epoch-keyed batch order. Workers preprocess in parallel; batch
// contents and order depend only on (seed, epoch).
class BatchStream {
public:
    BatchStream(const DatasetSplit& split, PreprocessConfig cfg, int64_t batch_size, bool train, uint64_t seed,
                int64_t workers = 0);

    int64_t batches_per_epoch() const;
    std::vector<size_t> order(int64_t epoch) const;
    Batch batch(int64_t epoch, int64_t index) const;

private:
    const DatasetSplit& split_;
    PreprocessConfig cfg_;
    int64_t batch_size_;
    bool train_;
    uint64_t seed_;
    int64_t workers_;
};

uint64_t mix_seed(uint64_t a, uint64_t b);

// Writes images/*.png and annotations.json: one axis-aligned rectangle per
// image (bright on a dark textured background), category "rect".
std::filesystem::path write_synthetic_rectangles(const std::filesystem::path& dir, int64_t count, int64_t size,
                                                 uint64_t seed, int64_t instances_per_image = 1);

}  // namespace mcsam
