#pragma once

#include "mcsam/coco.hpp"
#include "mcsam/rle.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mcsam {

struct EvalGt {
    int64_t image_id = 0;
    int64_t category_id = 0;
    Rle mask;
    Box box{};
    bool iscrowd = false;
};

struct Detection {
    int64_t image_id = 0;
    int64_t category_id = 0;
    double score = 0.0;
    Rle mask;
    Box box{};  // tight box of mask
};

enum class IouKind { Mask, Box };

// 0.50:0.05:0.95, as numpy.linspace builds it.
std::vector<double> coco_iou_thresholds();

struct ApResult {
    std::vector<double> per_threshold;  // AP in [0, 1] per threshold; -1 when no category has GT
    double ap = -1.0;                   // mean over thresholds, recall points and categories
    double ap50 = -1.0;
    double ap75 = -1.0;
};

// COCO protocol (area range "all"): per image and category, detections sorted
// by score (stable) and capped at max_dets, greedy matching per threshold with
// crowd GT absorbing matches, 101-point interpolated precision. Categories
// without non-crowd GT are excluded.
ApResult compute_ap(const std::vector<Detection>& detections, const std::vector<EvalGt>& ground_truth,
                    const std::vector<double>& iou_thresholds, IouKind kind, int64_t max_dets);

struct EvalReport {
    double ap_mask = 0, ap_mask_50 = 0, ap_mask_75 = 0;
    double ap_box = 0, ap_box_50 = 0, ap_box_75 = 0;

    std::string to_table() const;
    std::string to_kv() const;
    nlohmann::json to_json() const;
};

EvalReport evaluate(const std::vector<Detection>& detections, const std::vector<EvalGt>& ground_truth,
                    int64_t max_dets);

std::vector<EvalGt> ground_truth_from_split(const DatasetSplit& split);

// COCO results JSON: [{image_id, category_id, segmentation, score, bbox}].
nlohmann::json detections_to_json(const std::vector<Detection>& detections);
std::vector<Detection> detections_from_json(const nlohmann::json& results);

}  // namespace mcsam
