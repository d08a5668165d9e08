#include "mcsam/coco.hpp"

#include "mcsam/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

namespace mcsam {

using nlohmann::json;

int64_t DatasetSplit::label_of(int64_t category_id) const {
    for (size_t i = 0; i < categories.size(); ++i) {
        if (categories[i].id == category_id) {
            return static_cast<int64_t>(i);
        }
    }
    throw DataError("unknown category id " + std::to_string(category_id));
}

int64_t DatasetSplit::category_of(int64_t label) const {
    if (label < 0 || label >= num_classes()) {
        throw DataError("label " + std::to_string(label) + " out of range");
    }
    return categories[static_cast<size_t>(label)].id;
}

Rle decode_segmentation(const json& seg, int64_t height, int64_t width, int64_t* skipped_polygons) {
    if (seg.is_array()) {
        std::vector<Rle> parts;
        for (const auto& poly : seg) {
            std::vector<double> xy = poly.get<std::vector<double>>();
            if (xy.size() < 6) {
                if (skipped_polygons) {
                    ++*skipped_polygons;
                }
                continue;
            }
            parts.push_back(rle_from_polygon(xy, height, width));
        }
        if (parts.empty()) {
            return Rle{height, width, {static_cast<uint32_t>(height * width)}};
        }
        return rle_merge(parts, false);
    }
    if (seg.is_object() && seg.contains("counts")) {
        int64_t h = height;
        int64_t w = width;
        if (seg.contains("size")) {
            h = seg["size"][0].get<int64_t>();
            w = seg["size"][1].get<int64_t>();
        }
        if (seg["counts"].is_string()) {
            return rle_from_string(seg["counts"].get<std::string>(), h, w);
        }
        Rle r{h, w, seg["counts"].get<std::vector<uint32_t>>()};
        return r;
    }
    throw DataError("unrecognized segmentation encoding");
}

json rle_to_json(const Rle& rle) {
    return json{{"size", {rle.height, rle.width}}, {"counts", rle_to_string(rle)}};
}

DatasetSplit load_coco(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root,
                       const std::string& split_name) {
    std::ifstream in(annotation_file);
    if (!in) {
        throw DataError("cannot open annotation file " + annotation_file.string());
    }
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw DataError("invalid JSON in " + annotation_file.string() + ": " + e.what());
    }
    for (const char* key : {"images", "annotations", "categories"}) {
        if (!root.contains(key) || !root[key].is_array()) {
            throw DataError(annotation_file.string() + " lacks the '" + std::string(key) + "' array");
        }
    }

    DatasetSplit split;
    split.name = split_name.empty() ? annotation_file.stem().string() : split_name;
    for (const auto& c : root["categories"]) {
        split.categories.push_back({c.at("id").get<int64_t>(), c.value("name", std::string())});
    }
    std::sort(split.categories.begin(), split.categories.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });

    std::map<int64_t, CocoSample> by_id;
    std::vector<int64_t> missing;
    for (const auto& im : root["images"]) {
        CocoSample s;
        s.image_id = im.at("id").get<int64_t>();
        s.file_name = im.at("file_name").get<std::string>();
        s.height = im.at("height").get<int64_t>();
        s.width = im.at("width").get<int64_t>();
        s.image_path = image_root / s.file_name;
        if (!std::filesystem::exists(s.image_path)) {
            missing.push_back(s.image_id);
        }
        if (!by_id.emplace(s.image_id, std::move(s)).second) {
            throw DataError("duplicate image id " + std::to_string(im.at("id").get<int64_t>()));
        }
    }
    if (!missing.empty()) {
        std::string ids;
        for (size_t i = 0; i < missing.size() && i < 20; ++i) {
            ids += (i ? ", " : "") + std::to_string(missing[i]);
        }
        throw DataError(std::to_string(missing.size()) + " image file(s) missing under " + image_root.string() +
                        "; image ids: " + ids);
    }

    for (const auto& a : root["annotations"]) {
        const auto image_id = a.at("image_id").get<int64_t>();
        auto it = by_id.find(image_id);
        if (it == by_id.end()) {
            throw DataError("annotation refers to unknown image id " + std::to_string(image_id));
        }
        auto& sample = it->second;
        CocoInstance inst;
        inst.annotation_id = a.value("id", int64_t{0});
        inst.category_id = a.at("category_id").get<int64_t>();
        split.label_of(inst.category_id);
        inst.iscrowd = a.value("iscrowd", 0) != 0;
        if (!a.contains("segmentation")) {
            throw DataError("annotation " + std::to_string(inst.annotation_id) + " has no segmentation");
        }
        const auto before = split.skipped_polygons;
        inst.rle = decode_segmentation(a["segmentation"], sample.height, sample.width, &split.skipped_polygons);
        if (inst.rle.height != sample.height || inst.rle.width != sample.width) {
            throw DataError("annotation " + std::to_string(inst.annotation_id) + " RLE size disagrees with image");
        }
        if (rle_area(inst.rle) == 0) {
            ++split.empty_instances;
            if (split.skipped_polygons == before) {
                spdlog::warn("annotation {} decodes to an empty mask; dropped", inst.annotation_id);
            }
            continue;
        }
        inst.bbox = rle_to_bbox(inst.rle);
        sample.instances.push_back(std::move(inst));
    }
    if (split.skipped_polygons > 0) {
        spdlog::warn("{}: skipped {} malformed polygon(s) with fewer than 3 points", split.name,
                     split.skipped_polygons);
    }
    for (auto& [id, s] : by_id) {
        std::sort(s.instances.begin(), s.instances.end(),
                  [](const auto& a, const auto& b) { return a.annotation_id < b.annotation_id; });
        split.samples.push_back(std::move(s));
    }
    return split;
}

}  // namespace mcsam
