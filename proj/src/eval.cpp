#include "mcsam/eval.hpp"

#include "mcsam/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

namespace mcsam {

using nlohmann::json;

std::vector<double> coco_iou_thresholds() {
    const int num = 10;
    const double start = 0.5;
    const double stop = 0.95;
    const double step = (stop - start) / (num - 1);
    std::vector<double> t(num);
    for (int i = 0; i < num; ++i) {
        t[i] = static_cast<double>(i) * step + start;
    }
    t.back() = stop;
    return t;
}

namespace {

constexpr int kRecallPoints = 101;

struct ImageEval {
    std::vector<double> scores;             // kept detections, sorted
    std::vector<std::vector<char>> matched; // [T][D]
    std::vector<std::vector<char>> ignored; // [T][D]
    int64_t num_gt = 0;                     // non-crowd GT
};

double pair_iou(const Detection& d, const EvalGt& g, IouKind kind) {
    return kind == IouKind::Mask ? rle_iou(d.mask, g.mask, g.iscrowd) : box_iou(d.box, g.box, g.iscrowd);
}

ImageEval evaluate_image(std::vector<const Detection*> dts, std::vector<const EvalGt*> gts,
                         const std::vector<double>& thresholds, IouKind kind, int64_t max_dets) {
    std::stable_sort(gts.begin(), gts.end(), [](const EvalGt* a, const EvalGt* b) { return !a->iscrowd && b->iscrowd; });
    std::stable_sort(dts.begin(), dts.end(), [](const Detection* a, const Detection* b) { return a->score > b->score; });
    if (static_cast<int64_t>(dts.size()) > max_dets) {
        dts.resize(static_cast<size_t>(max_dets));
    }
    const size_t T = thresholds.size();
    const size_t D = dts.size();
    const size_t G = gts.size();

    std::vector<std::vector<double>> ious(D, std::vector<double>(G, 0.0));
    for (size_t d = 0; d < D; ++d) {
        for (size_t g = 0; g < G; ++g) {
            ious[d][g] = pair_iou(*dts[d], *gts[g], kind);
        }
    }

    ImageEval out;
    out.matched.assign(T, std::vector<char>(D, 0));
    out.ignored.assign(T, std::vector<char>(D, 0));
    for (const auto* d : dts) {
        out.scores.push_back(d->score);
    }
    for (const auto* g : gts) {
        out.num_gt += g->iscrowd ? 0 : 1;
    }
    for (size_t t = 0; t < T; ++t) {
        std::vector<char> gt_taken(G, 0);
        for (size_t d = 0; d < D; ++d) {
            double best = std::min(thresholds[t], 1.0 - 1e-10);
            int64_t m = -1;
            for (size_t g = 0; g < G; ++g) {
                if (gt_taken[g] && !gts[g]->iscrowd) {
                    continue;
                }
                if (m > -1 && !gts[static_cast<size_t>(m)]->iscrowd && gts[g]->iscrowd) {
                    break;
                }
                if (ious[d][g] < best) {
                    continue;
                }
                best = ious[d][g];
                m = static_cast<int64_t>(g);
            }
            if (m == -1) {
                continue;
            }
            out.ignored[t][d] = gts[static_cast<size_t>(m)]->iscrowd ? 1 : 0;
            out.matched[t][d] = 1;
            gt_taken[static_cast<size_t>(m)] = 1;
        }
    }
    return out;
}

}  // namespace

ApResult compute_ap(const std::vector<Detection>& detections, const std::vector<EvalGt>& ground_truth,
                    const std::vector<double>& iou_thresholds, IouKind kind, int64_t max_dets) {
    const size_t T = iou_thresholds.size();
    std::set<int64_t> categories;
    std::set<int64_t> images;
    std::map<std::pair<int64_t, int64_t>, std::vector<const EvalGt*>> gt_by_key;
    std::map<std::pair<int64_t, int64_t>, std::vector<const Detection*>> dt_by_key;
    for (const auto& g : ground_truth) {
        categories.insert(g.category_id);
        images.insert(g.image_id);
        gt_by_key[{g.image_id, g.category_id}].push_back(&g);
    }
    for (const auto& d : detections) {
        images.insert(d.image_id);
        dt_by_key[{d.image_id, d.category_id}].push_back(&d);
    }

    // precision[t][k] holds kRecallPoints values, or is empty when category k is excluded.
    std::vector<std::vector<std::vector<double>>> precision(T);
    for (int64_t cat : categories) {
        std::vector<double> scores;
        std::vector<std::vector<char>> matched(T), ignored(T);
        int64_t npig = 0;
        for (int64_t img : images) {
            const auto gi = gt_by_key.find({img, cat});
            const auto di = dt_by_key.find({img, cat});
            std::vector<const EvalGt*> gts = gi == gt_by_key.end() ? std::vector<const EvalGt*>{} : gi->second;
            std::vector<const Detection*> dts = di == dt_by_key.end() ? std::vector<const Detection*>{} : di->second;
            if (gts.empty() && dts.empty()) {
                continue;
            }
            auto e = evaluate_image(dts, gts, iou_thresholds, kind, max_dets);
            npig += e.num_gt;
            scores.insert(scores.end(), e.scores.begin(), e.scores.end());
            for (size_t t = 0; t < T; ++t) {
                matched[t].insert(matched[t].end(), e.matched[t].begin(), e.matched[t].end());
                ignored[t].insert(ignored[t].end(), e.ignored[t].begin(), e.ignored[t].end());
            }
        }
        if (npig == 0) {
            for (size_t t = 0; t < T; ++t) {
                precision[t].emplace_back();
            }
            continue;
        }
        std::vector<size_t> order(scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return -scores[a] < -scores[b]; });

        for (size_t t = 0; t < T; ++t) {
            std::vector<double> rc, pr;
            double tp = 0, fp = 0;
            for (size_t i : order) {
                if (ignored[t][i]) {
                    // Ignored detections contribute to neither count but still occupy a rank.
                } else if (matched[t][i]) {
                    tp += 1;
                } else {
                    fp += 1;
                }
                rc.push_back(tp / static_cast<double>(npig));
                pr.push_back(tp / (fp + tp + std::numeric_limits<double>::epsilon()));
            }
            for (size_t i = pr.size(); i-- > 1;) {
                pr[i - 1] = std::max(pr[i - 1], pr[i]);
            }
            std::vector<double> q(kRecallPoints, 0.0);
            for (int r = 0; r < kRecallPoints; ++r) {
                const double thr = static_cast<double>(r) / (kRecallPoints - 1);
                const auto it = std::lower_bound(rc.begin(), rc.end(), thr);
                const auto pi = static_cast<size_t>(it - rc.begin());
                if (pi < pr.size()) {
                    q[r] = pr[pi];
                }
            }
            precision[t].push_back(std::move(q));
        }
    }

    ApResult res;
    double total = 0;
    int64_t count = 0;
    for (size_t t = 0; t < T; ++t) {
        double st = 0;
        int64_t ct = 0;
        for (const auto& q : precision[t]) {
            for (double v : q) {
                st += v;
                ++ct;
            }
        }
        res.per_threshold.push_back(ct ? st / static_cast<double>(ct) : -1.0);
        total += st;
        count += ct;
    }
    res.ap = count ? total / static_cast<double>(count) : -1.0;
    for (size_t t = 0; t < T; ++t) {
        if (std::abs(iou_thresholds[t] - 0.5) < 1e-12) {
            res.ap50 = res.per_threshold[t];
        }
        if (std::abs(iou_thresholds[t] - 0.75) < 1e-12) {
            res.ap75 = res.per_threshold[t];
        }
    }
    return res;
}

namespace {

double pct(double v) {
    return v < 0 ? 0.0 : 100.0 * v;
}

}  // namespace

EvalReport evaluate(const std::vector<Detection>& detections, const std::vector<EvalGt>& ground_truth,
                    int64_t max_dets) {
    const auto thr = coco_iou_thresholds();
    const auto m = compute_ap(detections, ground_truth, thr, IouKind::Mask, max_dets);
    const auto b = compute_ap(detections, ground_truth, thr, IouKind::Box, max_dets);
    EvalReport r;
    r.ap_mask = pct(m.ap);
    r.ap_mask_50 = pct(m.ap50);
    r.ap_mask_75 = pct(m.ap75);
    r.ap_box = pct(b.ap);
    r.ap_box_50 = pct(b.ap50);
    r.ap_box_75 = pct(b.ap75);
    return r;
}

std::string EvalReport::to_table() const {
    std::string out = fmt::format("{:<6} {:>8} {:>8} {:>8}\n", "", "AP", "AP50", "AP75");
    out += fmt::format("{:<6} {:>8.2f} {:>8.2f} {:>8.2f}\n", "mask", ap_mask, ap_mask_50, ap_mask_75);
    out += fmt::format("{:<6} {:>8.2f} {:>8.2f} {:>8.2f}\n", "box", ap_box, ap_box_50, ap_box_75);
    return out;
}

std::string EvalReport::to_kv() const {
    return fmt::format(
        "ap_mask={:.6f}\nap_mask_50={:.6f}\nap_mask_75={:.6f}\nap_box={:.6f}\nap_box_50={:.6f}\nap_box_75={:.6f}\n",
        ap_mask, ap_mask_50, ap_mask_75, ap_box, ap_box_50, ap_box_75);
}

json EvalReport::to_json() const {
    return json{{"ap_mask", ap_mask}, {"ap_mask_50", ap_mask_50}, {"ap_mask_75", ap_mask_75},
                {"ap_box", ap_box},   {"ap_box_50", ap_box_50},   {"ap_box_75", ap_box_75}};
}

std::vector<EvalGt> ground_truth_from_split(const DatasetSplit& split) {
    std::vector<EvalGt> out;
    for (const auto& s : split.samples) {
        for (const auto& inst : s.instances) {
            out.push_back({s.image_id, inst.category_id, inst.rle, rle_to_bbox(inst.rle), inst.iscrowd});
        }
    }
    return out;
}

json detections_to_json(const std::vector<Detection>& detections) {
    json out = json::array();
    for (const auto& d : detections) {
        out.push_back({{"image_id", d.image_id},
                       {"category_id", d.category_id},
                       {"segmentation", rle_to_json(d.mask)},
                       {"score", d.score},
                       {"bbox", {d.box[0], d.box[1], d.box[2], d.box[3]}}});
    }
    return out;
}

std::vector<Detection> detections_from_json(const json& results) {
    if (!results.is_array()) {
        throw DataError("results JSON must be a list");
    }
    std::vector<Detection> out;
    for (const auto& r : results) {
        Detection d;
        d.image_id = r.at("image_id").get<int64_t>();
        d.category_id = r.at("category_id").get<int64_t>();
        d.score = r.at("score").get<double>();
        d.mask = decode_segmentation(r.at("segmentation"), 0, 0);
        d.box = rle_to_bbox(d.mask);
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace mcsam
