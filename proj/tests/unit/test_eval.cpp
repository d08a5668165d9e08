#include "mcsam/errors.hpp"
#include "mcsam/eval.hpp"
#include "oracles.hpp"

#include "doctest_torch.hpp"

#include <algorithm>
#include <random>

using namespace mcsam;

namespace {

BinaryMask rect(int64_t h, int64_t w, int64_t y0, int64_t x0, int64_t rh, int64_t rw) {
    BinaryMask m(h, w);
    for (int64_t y = y0; y < y0 + rh; ++y) {
        for (int64_t x = x0; x < x0 + rw; ++x) {
            m.at(y, x) = 1;
        }
    }
    return m;
}

EvalGt gt_of(int64_t image, int64_t cat, const BinaryMask& m, bool crowd = false) {
    auto r = rle_encode(m);
    return EvalGt{image, cat, r, rle_to_bbox(r), crowd};
}

Detection det_of(int64_t image, int64_t cat, double score, const BinaryMask& m) {
    auto r = rle_encode(m);
    return Detection{image, cat, score, r, rle_to_bbox(r)};
}

// Three disjoint 4x4 squares on a 12x12 canvas.
std::vector<EvalGt> three_squares() {
    return {gt_of(1, 1, rect(12, 12, 0, 0, 4, 4)), gt_of(1, 1, rect(12, 12, 4, 4, 4, 4)),
            gt_of(1, 1, rect(12, 12, 8, 8, 4, 4))};
}

}  // namespace

TEST_CASE("iou thresholds") {
    auto t = coco_iou_thresholds();
    REQUIRE(t.size() == 10);
    CHECK(t.front() == 0.5);
    CHECK(t.back() == 0.95);
    CHECK(t[5] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("mask iou examples") {
    auto a = rect(4, 4, 0, 0, 4, 4);
    CHECK(mask_iou(a, a) == 1.0);
    CHECK(mask_iou(rect(4, 4, 0, 0, 2, 2), rect(4, 4, 2, 2, 2, 2)) == 0.0);
    // 2x3 and 3x2 sharing a 2x2 corner: 4 / (6 + 6 - 4) = 0.5; shifted 4x2s: 4 / 12.
    CHECK(mask_iou(rect(6, 6, 0, 0, 2, 3), rect(6, 6, 0, 0, 3, 2)) == doctest::Approx(0.5));
    CHECK(mask_iou(rect(6, 6, 0, 0, 4, 2), rect(6, 6, 0, 1, 4, 2)) == doctest::Approx(4.0 / 12.0));
    CHECK_THROWS_AS(mask_iou(a, rect(4, 5, 0, 0, 1, 1)), ShapeError);
}

TEST_CASE("perfect detections score 100, none score 0") {
    auto gts = three_squares();
    std::vector<Detection> dts;
    for (const auto& g : gts) {
        dts.push_back(det_of(1, 1, 0.9, rle_decode(g.mask)));
    }
    auto r = evaluate(dts, gts, 100);
    CHECK(r.ap_mask == doctest::Approx(100.0));
    CHECK(r.ap_mask_50 == doctest::Approx(100.0));
    CHECK(r.ap_box == doctest::Approx(100.0));
    auto none = evaluate({}, gts, 100);
    CHECK(none.ap_mask == 0.0);
    CHECK(none.ap_box_75 == 0.0);
}

TEST_CASE("hand-computed precision-recall curve") {
    // Ranked TP, FP, TP, FP against 3 GT: interpolated precision 1 up to recall
    // 1/3 (34 points), 2/3 up to recall 2/3 (33 points), 0 after.
    auto gts = three_squares();
    std::vector<Detection> dts{
        det_of(1, 1, 0.9, rect(12, 12, 0, 0, 4, 4)),
        det_of(1, 1, 0.8, rect(12, 12, 0, 8, 4, 4)),
        det_of(1, 1, 0.7, rect(12, 12, 4, 4, 4, 4)),
        det_of(1, 1, 0.6, rect(12, 12, 8, 0, 4, 4)),
    };
    auto r = compute_ap(dts, gts, {0.5}, IouKind::Mask, 100);
    CHECK(r.ap == doctest::Approx(56.0 / 101.0).epsilon(1e-12));
    CHECK(r.ap50 == doctest::Approx(56.0 / 101.0).epsilon(1e-12));
    CHECK(r.ap75 == -1.0);
    CHECK(oracle::brute_ap(dts, gts, 0.5) == doctest::Approx(56.0 / 101.0).epsilon(1e-12));
}

TEST_CASE("monotone and scale-invariant") {
    auto gts = three_squares();
    std::vector<Detection> dts{
        det_of(1, 1, 0.9, rect(12, 12, 0, 0, 4, 4)),
        det_of(1, 1, 0.8, rect(12, 12, 0, 8, 4, 4)),
        det_of(1, 1, 0.7, rect(12, 12, 4, 4, 4, 3)),
        det_of(1, 1, 0.6, rect(12, 12, 8, 8, 3, 4)),
    };
    const auto base = evaluate(dts, gts, 100);
    auto scaled = dts;
    for (auto& d : scaled) {
        d.score *= 0.25;
    }
    const auto s = evaluate(scaled, gts, 100);
    CHECK(s.ap_mask == base.ap_mask);
    CHECK(s.ap_box == base.ap_box);

    auto fewer = dts;
    fewer.erase(fewer.begin() + 1);  // the false positive
    const auto f = evaluate(fewer, gts, 100);
    CHECK(f.ap_mask >= base.ap_mask);
    CHECK(f.ap_mask_50 > base.ap_mask_50);
}

TEST_CASE("agrees with a brute-force reference on random micro cases") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int64_t> pos(0, 6);
    std::uniform_int_distribution<int64_t> side(1, 4);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<EvalGt> gts;
        const int ng = 1 + static_cast<int>(rng() % 4);
        for (int g = 0; g < ng; ++g) {
            gts.push_back(gt_of(1, 1, rect(10, 10, pos(rng), pos(rng), side(rng), side(rng))));
        }
        std::vector<Detection> dts;
        const int nd = static_cast<int>(rng() % 6);
        for (int d = 0; d < nd; ++d) {
            dts.push_back(det_of(1, 1, score(rng), rect(10, 10, pos(rng), pos(rng), side(rng), side(rng))));
        }
        const auto thr = coco_iou_thresholds();
        auto r = compute_ap(dts, gts, thr, IouKind::Mask, 100);
        double mean = 0;
        for (size_t t = 0; t < thr.size(); ++t) {
            const double ref = oracle::brute_ap(dts, gts, thr[t]);
            CHECK(r.per_threshold[t] == doctest::Approx(ref).epsilon(1e-9));
            mean += ref;
        }
        CHECK(r.ap == doctest::Approx(mean / thr.size()).epsilon(1e-9));
        CHECK(r.ap <= r.ap50 + 1e-12);
        CHECK(r.ap >= 0.0);
        CHECK(r.ap50 <= 1.0);
    }
}

TEST_CASE("crowd ground truth absorbs matches and categories without gt are skipped") {
    std::vector<EvalGt> gts{gt_of(1, 1, rect(12, 12, 0, 0, 4, 4)), gt_of(1, 1, rect(12, 12, 6, 6, 6, 6), true),
                            gt_of(1, 2, rect(12, 12, 0, 0, 2, 2), true)};
    std::vector<Detection> dts{det_of(1, 1, 0.9, rect(12, 12, 0, 0, 4, 4)),
                               det_of(1, 1, 0.95, rect(12, 12, 7, 7, 3, 3)),
                               det_of(1, 2, 0.5, rect(12, 12, 0, 0, 2, 2))};
    auto r = compute_ap(dts, gts, {0.5}, IouKind::Mask, 100);
    // The detection inside the crowd region is ignored; category 2 has only crowd.
    CHECK(r.ap == doctest::Approx(1.0));
}

TEST_CASE("max_dets caps detections per image") {
    auto gts = three_squares();
    std::vector<Detection> dts{det_of(1, 1, 0.9, rect(12, 12, 0, 0, 4, 4)),
                               det_of(1, 1, 0.8, rect(12, 12, 4, 4, 4, 4)),
                               det_of(1, 1, 0.7, rect(12, 12, 8, 8, 4, 4))};
    CHECK(compute_ap(dts, gts, {0.5}, IouKind::Mask, 3).ap == doctest::Approx(1.0));
    CHECK(compute_ap(dts, gts, {0.5}, IouKind::Mask, 1).ap < 0.5);
}

TEST_CASE("results json round trip") {
    std::vector<Detection> dts{det_of(3, 1, 0.75, rect(5, 6, 1, 2, 2, 3))};
    auto j = detections_to_json(dts);
    REQUIRE(j.size() == 1);
    CHECK(j[0]["image_id"] == 3);
    CHECK(j[0]["bbox"][2] == 3.0);
    auto back = detections_from_json(j);
    REQUIRE(back.size() == 1);
    CHECK(back[0].mask == dts[0].mask);
    CHECK(back[0].box == dts[0].box);
    CHECK(back[0].score == 0.75);
    CHECK_THROWS_AS(detections_from_json(nlohmann::json::object()), DataError);

    EvalReport rep;
    rep.ap_mask = 12.5;
    CHECK(rep.to_json()["ap_mask"] == 12.5);
    CHECK(rep.to_kv().find("ap_mask=12.500000") != std::string::npos);
}
