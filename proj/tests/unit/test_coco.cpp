#include "mcsam/coco.hpp"
#include "mcsam/errors.hpp"

#include "doctest_torch.hpp"
#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace mcsam;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("mcsam_coco_" + std::to_string(rd()));
        fs::create_directories(path / "images");
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_image(const fs::path& p, int h, int w) {
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(10, 20, 30));
    cv::imwrite(p.string(), img);
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream(p) << j.dump();
}

BinaryMask rect(int64_t h, int64_t w, int64_t y0, int64_t x0, int64_t rh, int64_t rw) {
    BinaryMask m(h, w);
    for (int64_t y = y0; y < y0 + rh; ++y) {
        for (int64_t x = x0; x < x0 + rw; ++x) {
            m.at(y, x) = 1;
        }
    }
    return m;
}

// Two images, three annotations: uncompressed RLE, compressed RLE, crowd.
json fixture() {
    // 4x5 image, rows 1..2 of column 1 -> column-major runs [5, 2, 13].
    json ann1 = {{"id", 11}, {"image_id", 1}, {"category_id", 7}, {"iscrowd", 0},
                 {"segmentation", {{"size", {4, 5}}, {"counts", {5, 2, 13}}}}};
    json ann2 = {{"id", 12}, {"image_id", 1}, {"category_id", 3}, {"iscrowd", 0},
                 {"segmentation", rle_to_json(rle_encode(rect(4, 5, 0, 3, 4, 2)))}};
    json ann3 = {{"id", 21}, {"image_id", 2}, {"category_id", 7}, {"iscrowd", 1},
                 {"segmentation", rle_to_json(rle_encode(rect(6, 6, 2, 2, 2, 2)))}};
    return json{{"images",
                 {{{"id", 2}, {"file_name", "b.png"}, {"height", 6}, {"width", 6}},
                  {{"id", 1}, {"file_name", "a.png"}, {"height", 4}, {"width", 5}}}},
                {"annotations", {ann2, ann3, ann1}},
                {"categories", {{{"id", 7}, {"name", "ship"}}, {{"id", 3}, {"name", "building"}}}}};
}

}  // namespace

TEST_CASE("fixture loads with hand-rasterized masks") {
    TempDir dir;
    write_image(dir.path / "images" / "a.png", 4, 5);
    write_image(dir.path / "images" / "b.png", 6, 6);
    write_json(dir.path / "ann.json", fixture());

    auto split = load_coco(dir.path / "ann.json", dir.path / "images", "train");
    CHECK(split.name == "train");
    REQUIRE(split.samples.size() == 2);
    CHECK(split.samples[0].image_id == 1);
    CHECK(split.samples[1].image_id == 2);
    REQUIRE(split.categories.size() == 2);
    CHECK(split.categories[0].id == 3);
    CHECK(split.label_of(7) == 1);
    CHECK(split.category_of(0) == 3);
    CHECK_THROWS_AS(split.label_of(99), DataError);
    CHECK_THROWS_AS(split.category_of(2), DataError);

    const auto& a = split.samples[0];
    REQUIRE(a.instances.size() == 2);
    CHECK(a.instances[0].annotation_id == 11);
    CHECK(rle_decode(a.instances[0].rle) == rect(4, 5, 1, 1, 2, 1));
    CHECK(a.instances[0].bbox == Box{1, 1, 1, 2});
    CHECK(rle_decode(a.instances[1].rle) == rect(4, 5, 0, 3, 4, 2));
    CHECK(a.instances[1].bbox == Box{3, 0, 2, 4});

    const auto& b = split.samples[1];
    REQUIRE(b.instances.size() == 1);
    CHECK(b.instances[0].iscrowd);
    CHECK(rle_area(b.instances[0].rle) == 4);
}

TEST_CASE("empty annotation list") {
    TempDir dir;
    write_image(dir.path / "images" / "a.png", 4, 5);
    auto j = fixture();
    j["images"] = json::array({j["images"][1]});
    j["annotations"] = json::array();
    write_json(dir.path / "ann.json", j);
    auto split = load_coco(dir.path / "ann.json", dir.path / "images");
    REQUIRE(split.samples.size() == 1);
    CHECK(split.samples[0].instances.empty());
    CHECK(split.name == "ann");
}

TEST_CASE("polygon and rle encodings of one mask agree") {
    const std::vector<double> poly{1.0, 1.0, 7.0, 1.0, 7.0, 5.0, 1.0, 5.0};
    auto from_poly = decode_segmentation(json::array({poly}), 8, 9);
    auto as_rle = decode_segmentation(rle_to_json(from_poly), 8, 9);
    CHECK(as_rle == from_poly);
    json uncompressed = {{"size", {8, 9}}, {"counts", from_poly.counts}};
    CHECK(decode_segmentation(uncompressed, 8, 9) == from_poly);

    // Two polygons are unioned.
    const std::vector<double> other{1.0, 6.0, 3.0, 6.0, 3.0, 7.0, 1.0, 7.0};
    auto both = decode_segmentation(json::array({poly, other}), 8, 9);
    CHECK(rle_area(both) > rle_area(from_poly));
    CHECK_THROWS_AS(decode_segmentation(json(5), 8, 9), DataError);
}

TEST_CASE("missing image files are reported by id") {
    TempDir dir;
    write_image(dir.path / "images" / "a.png", 4, 5);
    write_json(dir.path / "ann.json", fixture());
    try {
        load_coco(dir.path / "ann.json", dir.path / "images");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("image ids: 2") != std::string::npos);
    }
}

TEST_CASE("malformed polygons are skipped and counted") {
    TempDir dir;
    write_image(dir.path / "images" / "a.png", 4, 5);
    json j = fixture();
    j["images"] = json::array({j["images"][1]});
    j["annotations"] = json::array(
        {{{"id", 1}, {"image_id", 1}, {"category_id", 3}, {"segmentation", {{0.0, 0.0, 2.0, 2.0}}}},
         {{"id", 2}, {"image_id", 1}, {"category_id", 3},
          {"segmentation", {{0.0, 0.0}, {0.0, 0.0, 3.0, 0.0, 3.0, 3.0}}}}});
    write_json(dir.path / "ann.json", j);
    auto split = load_coco(dir.path / "ann.json", dir.path / "images");
    CHECK(split.skipped_polygons == 2);
    CHECK(split.empty_instances == 1);
    CHECK(split.samples[0].instances.size() == 1);
}

TEST_CASE("structural errors") {
    TempDir dir;
    write_image(dir.path / "images" / "a.png", 4, 5);
    CHECK_THROWS_AS(load_coco(dir.path / "nope.json", dir.path / "images"), DataError);

    std::ofstream(dir.path / "bad.json") << "{not json";
    CHECK_THROWS_AS(load_coco(dir.path / "bad.json", dir.path / "images"), DataError);

    write_json(dir.path / "noann.json", json{{"images", json::array()}, {"categories", json::array()}});
    CHECK_THROWS_AS(load_coco(dir.path / "noann.json", dir.path / "images"), DataError);

    json j = fixture();
    j["images"] = json::array({j["images"][1]});
    j["annotations"] = json::array({{{"id", 1}, {"image_id", 1}, {"category_id", 42},
                                     {"segmentation", {{0.0, 0.0, 3.0, 0.0, 3.0, 3.0}}}}});
    write_json(dir.path / "cat.json", j);
    CHECK_THROWS_AS(load_coco(dir.path / "cat.json", dir.path / "images"), DataError);

    j["annotations"] = json::array({{{"id", 1}, {"image_id", 1}, {"category_id", 3},
                                     {"segmentation", {{"size", {9, 9}}, {"counts", {81}}}}}});
    write_json(dir.path / "size.json", j);
    CHECK_THROWS_AS(load_coco(dir.path / "size.json", dir.path / "images"), DataError);
}
