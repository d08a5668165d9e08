#pragma once

#include "mcsam/config.hpp"
#include "mcsam/eval.hpp"
#include "mcsam/loss.hpp"
#include "mcsam/model.hpp"
#include "mcsam/weights.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcsam {

// Linear warmup from lr_max / warmup_steps to lr_max over warmup_steps, then
// cosine annealing to min_lr at total_steps.
struct LrSchedule {
    double lr_max = 1e-4;
    double min_lr = 1e-6;
    int64_t warmup_steps = 1;
    int64_t total_steps = 1;

    double at(int64_t step) const;
};

struct BuiltModel {
    MCSamSeg model{nullptr};
    FreezePolicy policy;
    PartitionReport partition;
    std::optional<ImportReport> import;
    int64_t lora_layers = 0;
};

FreezePolicy policy_for(const RunConfig& cfg);

// Constructs the model, imports encoder weights (unless import_weights is
// false), enables LoRA and applies the freeze policy, in that order.
BuiltModel build_model(const RunConfig& cfg, bool import_weights = true);

struct StepRecord {
    int64_t step = 0;
    int64_t epoch = 0;
    double lr = 0.0;
    std::map<std::string, double> losses;
};

struct TrainResult {
    int64_t steps = 0;
    std::vector<StepRecord> history;
    std::optional<EvalReport> best;
    std::optional<EvalReport> last;
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
};

struct TrainHooks {
    // Called after every optimizer step.
    std::function<void(const StepRecord&, MCSamSeg&)> on_step;
};

struct CheckpointMeta {
    int64_t epoch = 0;
    int64_t step = 0;  // optimizer steps completed
    std::string config;  // canonical config text
    nlohmann::json metrics = nlohmann::json::array();
    std::vector<CocoCategory> categories;
    std::array<double, 3> mean = kSamPixelMean;
    std::array<double, 3> std = kSamPixelStd;
};

void save_checkpoint(const std::filesystem::path& path, MCSamSeg& model, torch::optim::Optimizer* optimizer,
                     const CheckpointMeta& meta);
CheckpointMeta load_checkpoint(const std::filesystem::path& path, MCSamSeg& model,
                               torch::optim::Optimizer* optimizer = nullptr);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Trains per cfg (data paths must exist). With stop_at_step > 0 the run ends
// once that many optimizer steps are complete (schedule unchanged).
TrainResult train(RunConfig cfg, const std::optional<std::filesystem::path>& resume = std::nullopt,
                  const TrainHooks& hooks = {}, int64_t stop_at_step = 0);

struct Predictions {
    std::vector<Detection> detections;  // in original image coordinates, all kept queries
};

// Runs inference over a split; detections capped at num_queries per image.
Predictions run_inference(MCSamSeg& model, const DatasetSplit& split, const PreprocessConfig& pre,
                          int64_t batch_size = 1);

EvalReport evaluate_split(MCSamSeg& model, const DatasetSplit& split, const PreprocessConfig& pre,
                          int64_t batch_size = 1);

// Loads the checkpoint and evaluates the configured validation split. Throws
// DataError when the dataset's categories differ from the checkpoint's.
EvalReport evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint);

struct PredictSummary {
    int64_t images = 0;
    int64_t failures = 0;
    int64_t detections = 0;
    std::filesystem::path results_file;
};

// Predicts every image in input_dir; keeps detections with score >= threshold.
// With viz, writes <stem>_overlay.png and <stem>_ids.png (16-bit instance ids).
PredictSummary predict(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                       double score_threshold, bool viz);

// Paints instances (ascending score, so higher scores win overlaps) into an
// id map [H, W] (0 = background, k = detections[k - 1]).
torch::Tensor instance_id_map(const std::vector<Detection>& detections, int64_t height, int64_t width);

struct DryRunReport {
    std::string name;
    int64_t total_params = 0;
    int64_t trainable_params = 0;
    double loss = 0.0;
    bool finite = false;
    bool grads_present = false;
    double seconds = 0.0;
};

// Builds the model and runs one forward/backward/optimizer step on a random
// image with a rectangle target. No dataset needed.
DryRunReport dry_run(const RunConfig& cfg);

}  // namespace mcsam
