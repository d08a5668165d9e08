#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mcsam {

// Row-major binary raster.
struct BinaryMask {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int64_t h, int64_t w) : height(h), width(w), data(static_cast<size_t>(h * w), 0) {}

    uint8_t& at(int64_t y, int64_t x) { return data[static_cast<size_t>(y * width + x)]; }
    uint8_t at(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * width + x)]; }
    int64_t area() const;
    bool operator==(const BinaryMask& other) const = default;
};

// COCO run-length encoding: column-major runs, starting with a background run.
struct Rle {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint32_t> counts;

    bool operator==(const Rle& other) const = default;
};

using Box = std::array<double, 4>;  // x, y, w, h

Rle rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const Rle& rle);
int64_t rle_area(const Rle& rle);
Box rle_to_bbox(const Rle& rle);

// Compressed LEB128-like string form used in COCO JSON.
std::string rle_to_string(const Rle& rle);
Rle rle_from_string(const std::string& s, int64_t height, int64_t width);

// Rasterizes a polygon [x0, y0, x1, y1, ...] with the COCO rule.
Rle rle_from_polygon(const std::vector<double>& xy, int64_t height, int64_t width);

Rle rle_merge(const std::vector<Rle>& rles, bool intersect);

// iscrowd gt: intersection over detection area.
double rle_iou(const Rle& dt, const Rle& gt, bool gt_crowd);
double box_iou(const Box& dt, const Box& gt, bool gt_crowd);

// |a & b| / |a | b|; 0 when both are empty. Throws ShapeError on size mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

Box mask_bbox(const BinaryMask& mask);

}  // namespace mcsam
