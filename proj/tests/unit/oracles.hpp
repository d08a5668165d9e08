#pragma once

#include "mcsam/deform_attn.hpp"
#include "mcsam/eval.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

// Reference implementations shared by the unit tests and the acceptance run.
namespace oracle {

using namespace mcsam;

// Bilinear read of value[b, start + y*W + x, h, :] at normalized (u, v) with
// pixel centers at (j + 0.5) / W and border clamping, coded as explicit loops.
inline std::vector<double> sample_dense(const torch::Tensor& value, int64_t b, int64_t h, int64_t start, int64_t H,
                                 int64_t W, double u, double v) {
    const auto D = value.size(3);
    auto acc = value.accessor<double, 4>();
    double px = std::clamp(u * static_cast<double>(W) - 0.5, 0.0, static_cast<double>(W - 1));
    double py = std::clamp(v * static_cast<double>(H) - 0.5, 0.0, static_cast<double>(H - 1));
    const auto x0 = static_cast<int64_t>(std::floor(px));
    const auto y0 = static_cast<int64_t>(std::floor(py));
    const double fx = px - static_cast<double>(x0);
    const double fy = py - static_cast<double>(y0);
    std::vector<double> out(D, 0.0);
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            const double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
            if (wgt == 0.0) {
                continue;
            }
            const auto xx = std::min(x0 + dx, W - 1);
            const auto yy = std::min(y0 + dy, H - 1);
            for (int64_t d = 0; d < D; ++d) {
                out[d] += wgt * acc[b][start + yy * W + xx][h][d];
            }
        }
    }
    return out;
}

inline torch::Tensor dense_deform_attn(const torch::Tensor& value, const LevelShapes& shapes, const torch::Tensor& loc,
                           const torch::Tensor& weights) {
    const auto B = value.size(0);
    const auto heads = value.size(2);
    const auto D = value.size(3);
    const auto Q = loc.size(1);
    const auto L = loc.size(3);
    const auto P = loc.size(4);
    const auto starts = level_start_index(shapes);
    auto out = torch::zeros({B, Q, heads * D}, torch::kDouble);
    auto la = loc.accessor<double, 6>();
    auto wa = weights.accessor<double, 5>();
    auto oa = out.accessor<double, 3>();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t q = 0; q < Q; ++q) {
            for (int64_t h = 0; h < heads; ++h) {
                for (int64_t l = 0; l < L; ++l) {
                    for (int64_t p = 0; p < P; ++p) {
                        auto s = sample_dense(value, b, h, starts[l], shapes[l].first, shapes[l].second,
                                              la[b][q][h][l][p][0], la[b][q][h][l][p][1]);
                        for (int64_t d = 0; d < D; ++d) {
                            oa[b][q][h * D + d] += wa[b][q][h][l][p] * s[d];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Minimum over all injective maps from the smaller side into the larger one.
inline double brute_force_assignment(const std::vector<std::vector<double>>& c) {
    const size_t rows = c.size(), cols = c[0].size();
    const bool by_row = rows <= cols;
    const size_t small = by_row ? rows : cols, large = by_row ? cols : rows;
    std::vector<size_t> idx(large);
    std::iota(idx.begin(), idx.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (size_t i = 0; i < small; ++i) {
            total += by_row ? c[i][idx[i]] : c[idx[i]][i];
        }
        best = std::min(best, total);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return best;
}

// Single image, single category, no crowd: greedy matching and 101-point
// interpolated precision, written directly from the definition.
inline double brute_ap(std::vector<Detection> dts, const std::vector<EvalGt>& gts, double thr) {
    std::sort(dts.begin(), dts.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    std::vector<bool> taken(gts.size(), false);
    std::vector<double> rc, pr;
    double tp = 0;
    for (size_t d = 0; d < dts.size(); ++d) {
        double best = thr;
        int m = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) {
                continue;
            }
            const double iou = mask_iou(rle_decode(dts[d].mask), rle_decode(gts[g].mask));
            if (iou >= best) {
                best = iou;
                m = static_cast<int>(g);
            }
        }
        if (m >= 0) {
            taken[static_cast<size_t>(m)] = true;
            tp += 1;
        }
        rc.push_back(tp / static_cast<double>(gts.size()));
        pr.push_back(tp / static_cast<double>(d + 1));
    }
    double sum = 0;
    for (int r = 0; r <= 100; ++r) {
        const double level = r / 100.0;
        double p = 0;
        for (size_t i = 0; i < rc.size(); ++i) {
            if (rc[i] >= level) {
                p = std::max(p, pr[i]);
            }
        }
        sum += p;
    }
    return sum / 101.0;
}

}  // namespace oracle
