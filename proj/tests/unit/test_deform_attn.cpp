#include "mcsam/deform_attn.hpp"
#include "mcsam/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include "doctest_torch.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace mcsam;

namespace {

LevelShapes random_shapes(std::mt19937& rng, int64_t levels) {
    std::uniform_int_distribution<int64_t> side(1, 4);
    LevelShapes s;
    for (int64_t l = 0; l < levels; ++l) {
        s.emplace_back(side(rng), side(rng));
    }
    return s;
}

int64_t total(const LevelShapes& s) {
    int64_t n = 0;
    for (auto [h, w] : s) {
        n += h * w;
    }
    return n;
}

}  // namespace

TEST_CASE("level start index") {
    CHECK(level_start_index({{2, 2}, {4, 4}, {8, 8}}) == std::vector<int64_t>{0, 4, 20});
    CHECK(level_start_index({{3, 1}}) == std::vector<int64_t>{0});
}

TEST_CASE("core sampling equals the dense loop oracle on random small cases") {
    std::mt19937 rng(7);
    torch::manual_seed(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t L = 1 + trial % 3;
        const auto shapes = random_shapes(rng, L);
        const int64_t B = 1 + trial % 2, heads = 2, D = 3, Q = 3, P = 2;
        auto value = torch::randn({B, total(shapes), heads, D}, torch::kDouble);
        // Include locations slightly outside [0, 1] to exercise border clamping.
        auto loc = torch::rand({B, Q, heads, L, P, 2}, torch::kDouble) * 1.2 - 0.1;
        auto w = torch::softmax(torch::randn({B, Q, heads, L * P}, torch::kDouble), -1).view({B, Q, heads, L, P});
        auto got = ms_deform_attn_core(value, shapes, loc, w);
        CHECK(testutil::max_abs_diff(got, oracle::dense_deform_attn(value, shapes, loc, w)) <= 1e-6);

        auto got32 = ms_deform_attn_core(value.to(torch::kFloat), shapes, loc.to(torch::kFloat), w.to(torch::kFloat));
        CHECK(testutil::max_abs_diff(got32, oracle::dense_deform_attn(value, shapes, loc, w)) <= 1e-6);
    }
}

TEST_CASE("module output equals the oracle built from its own sampling trace") {
    torch::manual_seed(21);
    const LevelShapes shapes{{4, 4}, {2, 3}};
    MSDeformAttn attn(8, 2, 2, 2);
    attn->to(torch::kDouble);
    {
        torch::NoGradGuard ng;
        attn->sampling_offsets->weight.normal_(0.0, 0.5);
        attn->attention_weights->weight.normal_(0.0, 0.5);
    }
    auto input = torch::randn({1, total(shapes), 8}, torch::kDouble);
    auto query = torch::randn({1, 3, 8}, torch::kDouble);
    auto ref = torch::rand({1, 3, 2, 2}, torch::kDouble);
    DeformAttnTrace trace;
    auto out = attn(query, ref, input, shapes, &trace);

    auto wsum = trace.attention_weights.sum({3, 4});
    CHECK(testutil::max_abs_diff(wsum, torch::ones_like(wsum)) <= 1e-6);
    CHECK(trace.attention_weights.min().item<double>() >= 0.0);

    auto value = attn->value_proj(input).view({1, total(shapes), 2, 4});
    auto expect = attn->output_proj(oracle::dense_deform_attn(value, shapes, trace.sampling_locations, trace.attention_weights));
    CHECK(testutil::max_abs_diff(out, expect) <= 1e-6);
}

namespace {

MSDeformAttn neutral_attention(int64_t dim, int64_t levels, int64_t heads, int64_t points) {
    MSDeformAttn attn(dim, levels, heads, points);
    torch::NoGradGuard ng;
    attn->sampling_offsets->weight.zero_();
    attn->sampling_offsets->bias.zero_();
    attn->attention_weights->weight.zero_();
    attn->attention_weights->bias.zero_();
    attn->output_proj->weight.copy_(torch::eye(dim));
    attn->output_proj->bias.zero_();
    return attn;
}

}  // namespace

TEST_CASE("zero offsets at a pixel center read that pixel") {
    torch::manual_seed(2);
    const LevelShapes shapes{{3, 4}};
    auto attn = neutral_attention(4, 1, 2, 3);
    auto input = torch::randn({1, 12, 4});
    auto projected = attn->value_proj(input);
    for (int64_t y = 0; y < 3; ++y) {
        for (int64_t x = 0; x < 4; ++x) {
            auto ref = torch::tensor({(x + 0.5) / 4.0, (y + 0.5) / 3.0}).view({1, 1, 2});
            auto out = attn(torch::randn({1, 1, 4}), ref, input, shapes);
            CHECK(testutil::max_abs_diff(out[0][0], projected[0][y * 4 + x]) <= 1e-6);
        }
    }
}

TEST_CASE("zero offsets between four pixels average them") {
    torch::manual_seed(3);
    const LevelShapes shapes{{2, 2}};
    auto attn = neutral_attention(4, 1, 1, 4);
    auto input = torch::randn({1, 4, 4});
    auto out = attn(torch::randn({1, 1, 4}), torch::full({1, 1, 2}, 0.5), input, shapes);
    CHECK(testutil::max_abs_diff(out[0][0], attn->value_proj(input)[0].mean(0)) <= 1e-6);
}

TEST_CASE("bilinear sampling is exact on linear fields") {
    // v(x, y) = a + b*px + c*py in pixel coordinates; interior samples reproduce it.
    const int64_t H = 4, W = 5;
    auto value = torch::empty({1, H * W, 1, 1}, torch::kDouble);
    const double a = 0.3, b = -1.7, c = 2.2;
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            value[0][y * W + x][0][0] = a + b * x + c * y;
        }
    }
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> ux(0.5 / W, 1.0 - 0.5 / W), uy(0.5 / H, 1.0 - 0.5 / H);
    for (int i = 0; i < 40; ++i) {
        const double u = ux(rng), v = uy(rng);
        auto loc = torch::tensor({u, v}, torch::kDouble).view({1, 1, 1, 1, 1, 2});
        auto out = ms_deform_attn_core(value, {{H, W}}, loc, torch::ones({1, 1, 1, 1, 1}, torch::kDouble));
        const double expect = a + b * (u * W - 0.5) + c * (v * H - 0.5);
        CHECK(out.item<double>() == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("reference points outside the unit square are clamped") {
    torch::manual_seed(4);
    const LevelShapes shapes{{3, 3}};
    auto attn = neutral_attention(4, 1, 1, 1);
    auto input = torch::randn({1, 9, 4});
    auto outside = attn(torch::zeros({1, 1, 4}), torch::tensor({1.7, -0.4}).view({1, 1, 2}), input, shapes);
    auto corner = attn(torch::zeros({1, 1, 4}), torch::tensor({1.0, 0.0}).view({1, 1, 2}), input, shapes);
    CHECK(testutil::max_abs_diff(outside, corner) == 0.0);
}

TEST_CASE("empty pyramid and shape mismatches are rejected") {
    auto v = torch::randn({1, 4, 1, 2});
    auto loc = torch::rand({1, 1, 1, 1, 1, 2});
    auto w = torch::ones({1, 1, 1, 1, 1});
    CHECK_THROWS_AS(ms_deform_attn_core(v, {}, loc, w), ConfigError);
    CHECK_THROWS_AS(ms_deform_attn_core(v, {{3, 3}}, loc, w), ShapeError);
}

TEST_CASE("gradients match central differences in float64") {
    torch::manual_seed(8);
    const LevelShapes shapes{{3, 3}, {2, 2}};
    MSDeformAttn attn(4, 2, 2, 2);
    attn->to(torch::kDouble);
    {
        torch::NoGradGuard ng;
        attn->sampling_offsets->weight.normal_(0.0, 0.3);
        attn->attention_weights->weight.normal_(0.0, 0.3);
    }
    auto input = torch::randn({1, 13, 4}, torch::kDouble).requires_grad_(true);
    auto query = torch::randn({1, 2, 4}, torch::kDouble).requires_grad_(true);
    auto ref = torch::tensor({0.31, 0.47, 0.62, 0.23}, torch::kDouble).view({1, 2, 2});
    auto w = torch::randn({1, 2, 4}, torch::kDouble);
    auto f = [&] { return (attn(query, ref, input, shapes) * w).sum(); };
    auto params = attn->parameters();
    params.push_back(input);
    params.push_back(query);
    CHECK(testutil::gradient_check(f, params) <= 1e-4);
}
