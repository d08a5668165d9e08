#pragma once

#include "mcsam/data.hpp"
#include "mcsam/matcher.hpp"
#include "mcsam/model.hpp"
#include "mcsam/peft.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mcsam {

enum class WeightSource { Random, Sam, Vit };

struct WeightsConfig {
    WeightSource source = WeightSource::Random;
    std::string path;      // checkpoint file
    std::string name_map;  // defaults to the shipped map for the source
};

struct PeftConfig {
    PeftMethod method = PeftMethod::Mona;
    std::string policy_file;  // overrides the built-in policy when set
    bool train_encoder_neck = false;
    LoraConfig lora;
};

struct DataConfig {
    std::string train_annotations;
    std::string train_images;
    std::string val_annotations;
    std::string val_images;
    std::string normalization = "sam";  // sam | dataset | custom
    std::array<double, 3> mean = kSamPixelMean;
    std::array<double, 3> std = kSamPixelStd;
    int64_t workers = 0;
};

struct OptimConfig {
    double lr = 1e-4;
    double weight_decay = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double clip_grad_norm = 0.01;  // 0 disables
};

struct ScheduleConfig {
    double warmup_epochs = 1.0;
    int64_t warmup_steps = 0;  // overrides warmup_epochs when > 0
    double min_lr = 1e-6;
};

struct TrainConfig {
    int64_t batch_size = 2;
    int64_t accumulation = 1;
    int64_t epochs = 300;
    int64_t max_steps = 0;  // 0 = epochs * batches_per_epoch
    uint64_t seed = 0;
    int64_t eval_interval = 1;  // epochs
    int64_t log_interval = 10;  // steps
    int64_t threads = 1;
    bool deterministic = true;
    std::string output_dir;
};

struct RunConfig {
    std::string name = "run";
    ModelConfig model;
    LossConfig loss;
    WeightsConfig weights;
    PeftConfig peft;
    DataConfig data;
    OptimConfig optim;
    ScheduleConfig schedule;
    TrainConfig train;
    double score_threshold = 0.75;
    std::filesystem::path base_dir;  // relative paths resolve against this

    // Copies encoder-derived values (adapter kind, Mona width, widths shared
    // between modules) so the model parts agree.
    void sync();
    void validate(bool require_data) const;
    std::filesystem::path resolve(const std::string& path) const;
    std::filesystem::path output_dir() const;
    PreprocessConfig preprocess() const;
};

// Text form: "[section]" headers and "key = value" lines; '#' comments.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
void apply_override(RunConfig& cfg, const std::string& assignment);  // "section.key=value"
// Canonical form: every field, one "section.key = value" line, sorted.
std::string serialize_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

std::string to_string(WeightSource s);

}  // namespace mcsam
