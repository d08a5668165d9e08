#include "mcsam/data.hpp"

#include "mcsam/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <future>

namespace mcsam {

using nlohmann::json;

uint64_t mix_seed(uint64_t a, uint64_t b) {
    std::seed_seq seq{static_cast<uint32_t>(a), static_cast<uint32_t>(a >> 32), static_cast<uint32_t>(b),
                      static_cast<uint32_t>(b >> 32)};
    std::array<uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<uint64_t>(out[1]) << 32) | out[0];
}

cv::Mat read_image_rgb(const std::filesystem::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw DataError("cannot read image " + path.string());
    }
    if (raw.depth() != CV_8U) {
        double lo = 0.0;
        double hi = 0.0;
        cv::minMaxLoc(raw.reshape(1), &lo, &hi);
        const double s = hi > lo ? 255.0 / (hi - lo) : 1.0;
        raw.convertTo(raw, CV_8U, s, -lo * s);
    }
    cv::Mat rgb;
    switch (raw.channels()) {
        case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
        case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
        default: throw DataError("unsupported channel count in " + path.string());
    }
    return rgb;
}

std::pair<std::array<double, 3>, std::array<double, 3>> channel_statistics(const DatasetSplit& split) {
    std::array<double, 3> sum{}, sq{};
    double n = 0;
    for (const auto& s : split.samples) {
        cv::Mat img = read_image_rgb(s.image_path);
        img.convertTo(img, CV_64FC3);
        const cv::Scalar a = cv::sum(img);
        const cv::Scalar b = cv::sum(img.mul(img));
        for (int c = 0; c < 3; ++c) {
            sum[c] += a[c];
            sq[c] += b[c];
        }
        n += static_cast<double>(img.total());
    }
    if (n == 0) {
        throw DataError("cannot compute statistics of an empty split");
    }
    std::array<double, 3> mean{}, stdev{};
    for (int c = 0; c < 3; ++c) {
        mean[c] = sum[c] / n;
        stdev[c] = std::sqrt(std::max(sq[c] / n - mean[c] * mean[c], 1e-6));
    }
    return {mean, stdev};
}

namespace {

torch::Tensor mask_to_tensor(const cv::Mat& m) {
    return torch::from_blob(m.data, {m.rows, m.cols}, torch::kUInt8).clone();
}

Box tensor_bbox(const torch::Tensor& mask) {
    auto rows = mask.any(1).nonzero();
    auto cols = mask.any(0).nonzero();
    if (rows.numel() == 0) {
        return {0, 0, 0, 0};
    }
    const auto y0 = rows.min().item<int64_t>();
    const auto y1 = rows.max().item<int64_t>();
    const auto x0 = cols.min().item<int64_t>();
    const auto x1 = cols.max().item<int64_t>();
    return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
            static_cast<double>(y1 - y0 + 1)};
}

}  // namespace

ModelSample preprocess(const CocoSample& sample, const cv::Mat& rgb, const DatasetSplit& split,
                       const PreprocessConfig& cfg, bool train, std::mt19937_64& rng) {
    if (rgb.type() != CV_8UC3) {
        throw DataError("preprocess expects an 8-bit RGB image");
    }
    const int64_t S = cfg.image_size;
    ModelSample out;
    out.image_id = sample.image_id;
    out.orig_height = rgb.rows;
    out.orig_width = rgb.cols;
    out.scale = static_cast<double>(S) / static_cast<double>(std::max(rgb.rows, rgb.cols));
    out.valid_height = std::min<int64_t>(S, std::llround(rgb.rows * out.scale));
    out.valid_width = std::min<int64_t>(S, std::llround(rgb.cols * out.scale));
    const cv::Size target(static_cast<int>(out.valid_width), static_cast<int>(out.valid_height));

    cv::Mat resized;
    cv::resize(rgb, resized, target, 0, 0, cv::INTER_LINEAR);
    auto img = torch::from_blob(resized.data, {resized.rows, resized.cols, 3}, torch::kUInt8)
                   .to(torch::kFloat)
                   .permute({2, 0, 1});
    auto mean = torch::tensor(std::vector<double>(cfg.mean.begin(), cfg.mean.end()), torch::kFloat).view({3, 1, 1});
    auto stdev = torch::tensor(std::vector<double>(cfg.std.begin(), cfg.std.end()), torch::kFloat).view({3, 1, 1});
    img = (img - mean) / stdev;
    out.image = torch::zeros({3, S, S});
    out.image.narrow(1, 0, out.valid_height).narrow(2, 0, out.valid_width).copy_(img);

    std::vector<torch::Tensor> masks;
    std::vector<int64_t> labels;
    for (const auto& inst : sample.instances) {
        if (inst.iscrowd) {
            continue;
        }
        const auto bm = rle_decode(inst.rle);
        cv::Mat m(static_cast<int>(bm.height), static_cast<int>(bm.width), CV_8U,
                  const_cast<uint8_t*>(bm.data.data()));
        cv::Mat mr;
        cv::resize(m, mr, target, 0, 0, cv::INTER_NEAREST);
        auto t = mask_to_tensor(mr);
        if (t.sum().item<int64_t>() == 0) {
            ++out.dropped_instances;
            continue;
        }
        auto full = torch::zeros({S, S}, torch::kFloat);
        full.narrow(0, 0, out.valid_height).narrow(1, 0, out.valid_width).copy_(t.to(torch::kFloat));
        masks.push_back(full);
        labels.push_back(split.label_of(inst.category_id));
        out.category_ids.push_back(inst.category_id);
    }
    out.target.labels = torch::tensor(labels, torch::kLong);
    out.target.masks = masks.empty() ? torch::zeros({0, S, S}) : torch::stack(masks);
    for (const auto& m : masks) {
        out.boxes.push_back(tensor_bbox(m));
    }

    if (train) {
        std::bernoulli_distribution coin(cfg.flip_probability);
        if (coin(rng)) {
            hflip(out);
        }
    }
    return out;
}

ModelSample preprocess(const CocoSample& sample, const DatasetSplit& split, const PreprocessConfig& cfg, bool train,
                       uint64_t seed) {
    std::mt19937_64 rng(seed);
    return preprocess(sample, read_image_rgb(sample.image_path), split, cfg, train, rng);
}

void hflip(ModelSample& s) {
    const auto w = s.valid_width;
    auto flip_valid = [w](torch::Tensor& t) {
        auto region = t.narrow(-1, 0, w);
        region.copy_(region.flip({-1}));
    };
    flip_valid(s.image);
    if (s.target.masks.size(0) > 0) {
        flip_valid(s.target.masks);
    }
    for (auto& b : s.boxes) {
        b[0] = static_cast<double>(w) - b[0] - b[2];
    }
    s.flipped = !s.flipped;
}

Batch collate(std::vector<ModelSample> samples) {
    Batch b;
    std::vector<torch::Tensor> images;
    for (auto& s : samples) {
        images.push_back(s.image);
        b.targets.push_back(s.target);
    }
    b.images = torch::stack(images);
    b.samples = std::move(samples);
    return b;
}

BatchStream::BatchStream(const DatasetSplit& split, PreprocessConfig cfg, int64_t batch_size, bool train,
                         uint64_t seed, int64_t workers)
    : split_(split), cfg_(cfg), batch_size_(batch_size), train_(train), seed_(seed), workers_(workers) {
    if (batch_size < 1) {
        throw ConfigError("batch size must be >= 1");
    }
    if (split.samples.empty()) {
        throw DataError("split '" + split.name + "' has no samples");
    }
}

int64_t BatchStream::batches_per_epoch() const {
    const auto n = static_cast<int64_t>(split_.samples.size());
    return (n + batch_size_ - 1) / batch_size_;
}

std::vector<size_t> BatchStream::order(int64_t epoch) const {
    std::vector<size_t> idx(split_.samples.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    if (train_) {
        std::mt19937_64 rng(mix_seed(seed_, static_cast<uint64_t>(epoch)));
        for (size_t i = idx.size(); i > 1; --i) {
            std::uniform_int_distribution<size_t> pick(0, i - 1);
            std::swap(idx[i - 1], idx[pick(rng)]);
        }
    }
    return idx;
}

Batch BatchStream::batch(int64_t epoch, int64_t index) const {
    const auto idx = order(epoch);
    const auto begin = static_cast<size_t>(index * batch_size_);
    const auto end = std::min(idx.size(), begin + static_cast<size_t>(batch_size_));
    if (begin >= end) {
        throw DataError("batch index " + std::to_string(index) + " out of range");
    }
    auto make = [&](size_t pos) {
        const auto& s = split_.samples[idx[pos]];
        const uint64_t seed = mix_seed(mix_seed(seed_, static_cast<uint64_t>(epoch)), static_cast<uint64_t>(s.image_id));
        return preprocess(s, split_, cfg_, train_, seed);
    };
    std::vector<ModelSample> samples;
    if (workers_ > 0) {
        std::vector<std::future<ModelSample>> jobs;
        for (size_t pos = begin; pos < end; ++pos) {
            jobs.push_back(std::async(std::launch::async, make, pos));
        }
        for (auto& j : jobs) {
            samples.push_back(j.get());
        }
    } else {
        for (size_t pos = begin; pos < end; ++pos) {
            samples.push_back(make(pos));
        }
    }
    return collate(std::move(samples));
}

std::filesystem::path write_synthetic_rectangles(const std::filesystem::path& dir, int64_t count, int64_t size,
                                                 uint64_t seed, int64_t instances_per_image) {
    std::filesystem::create_directories(dir / "images");
    std::mt19937_64 rng(seed);
    json images = json::array();
    json annotations = json::array();
    int64_t ann_id = 1;
    for (int64_t i = 0; i < count; ++i) {
        cv::Mat img(static_cast<int>(size), static_cast<int>(size), CV_8UC3);
        cv::randu(img, cv::Scalar(0, 0, 0), cv::Scalar(40, 40, 40));
        for (int64_t k = 0; k < instances_per_image; ++k) {
            std::uniform_int_distribution<int64_t> side(size / 4, size / 2);
            const auto w = side(rng);
            const auto h = side(rng);
            std::uniform_int_distribution<int64_t> px(0, size - w);
            std::uniform_int_distribution<int64_t> py(0, size - h);
            const auto x0 = px(rng);
            const auto y0 = py(rng);
            std::uniform_int_distribution<int> shade(180, 255);
            cv::rectangle(img, cv::Rect(static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(w),
                                        static_cast<int>(h)),
                          cv::Scalar(shade(rng), shade(rng), shade(rng)), cv::FILLED);
            const double x1 = static_cast<double>(x0 + w);
            const double y1 = static_cast<double>(y0 + h);
            annotations.push_back({{"id", ann_id++},
                                   {"image_id", i + 1},
                                   {"category_id", 1},
                                   {"iscrowd", 0},
                                   {"area", w * h},
                                   {"bbox", {x0, y0, w, h}},
                                   {"segmentation", json::array({json::array(
                                                        {x0, y0, x1, y0, x1, y1, static_cast<double>(x0), y1})})}});
        }
        const std::string name = "rect_" + std::to_string(i + 1) + ".png";
        cv::imwrite((dir / "images" / name).string(), img);
        images.push_back({{"id", i + 1}, {"file_name", name}, {"height", size}, {"width", size}});
    }
    json root{{"images", images},
              {"annotations", annotations},
              {"categories", json::array({json{{"id", 1}, {"name", "rect"}}})}};
    const auto path = dir / "annotations.json";
    std::ofstream(path) << root.dump(1);
    return path;
}

}  // namespace mcsam
