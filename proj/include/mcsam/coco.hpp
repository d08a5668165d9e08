#pragma once

#include "mcsam/rle.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mcsam {

struct CocoCategory {
    int64_t id = 0;
    std::string name;
};

struct CocoInstance {
    int64_t annotation_id = 0;
    int64_t category_id = 0;
    bool iscrowd = false;
    Rle rle;
    Box bbox{};  // tight box of the rasterized mask
};

struct CocoSample {
    int64_t image_id = 0;
    std::string file_name;
    std::filesystem::path image_path;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<CocoInstance> instances;
};

struct DatasetSplit {
    std::string name;
    std::vector<CocoSample> samples;  // sorted by image id
    std::vector<CocoCategory> categories;  // sorted by id
    int64_t skipped_polygons = 0;
    int64_t empty_instances = 0;

    // 0-based contiguous label of a category id, and back.
    int64_t label_of(int64_t category_id) const;
    int64_t category_of(int64_t label) const;
    int64_t num_classes() const { return static_cast<int64_t>(categories.size()); }
};

// Decodes one COCO "segmentation" field (polygons, uncompressed or compressed
// RLE). Polygons with fewer than 3 points are skipped and counted.
Rle decode_segmentation(const nlohmann::json& seg, int64_t height, int64_t width, int64_t* skipped_polygons = nullptr);

nlohmann::json rle_to_json(const Rle& rle);

DatasetSplit load_coco(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root,
                       const std::string& split_name = "");

}  // namespace mcsam
