// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on failure.

#include "mcsam/config.hpp"
#include "mcsam/data.hpp"
#include "mcsam/errors.hpp"
#include "mcsam/eval.hpp"
#include "mcsam/loss.hpp"
#include "mcsam/model.hpp"
#include "mcsam/peft.hpp"
#include "mcsam/train.hpp"
#include "../unit/oracles.hpp"
#include "../unit/test_util.hpp"
#include "../unit/tiny_model.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace mcsam;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::path(MCSAM_TEST_DATA_DIR).parent_path().parent_path();

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_seconds;
    std::function<Outcome()> run;
};

Outcome fail(std::string why) {
    return {false, std::move(why)};
}

// Copies every parameter and buffer of `from` whose name exists in `to`.
void copy_shared(torch::nn::Module& from, torch::nn::Module& to) {
    torch::NoGradGuard ng;
    auto src = from.named_parameters();
    for (auto& p : to.named_parameters()) {
        if (auto* s = src.find(p.key())) {
            p.value().copy_(*s);
        }
    }
}

Outcome identity_at_init() {
    torch::manual_seed(101);
    double worst = 0.0;
    for (const char* method : {"mona", "adapter", "lora"}) {
        const std::string m = method;
        auto kind = m == "mona" ? BlockAdapter::Mona : m == "adapter" ? BlockAdapter::Bottleneck : BlockAdapter::None;
        MCSamSeg adapted(testutil::tiny_model(kind));
        if (m == "lora") {
            apply_lora(*adapted, LoraConfig{});
        }
        MCSamSeg base(testutil::tiny_model(BlockAdapter::None));
        copy_shared(*adapted, *base);
        adapted->eval();
        base->eval();
        torch::NoGradGuard ng;
        for (int i = 0; i < 10; ++i) {
            auto x = torch::randn({1, 3, 64, 64});
            auto a = adapted(x);
            auto b = base(x);
            const double d = std::max(testutil::max_abs_diff(a.class_logits, b.class_logits),
                                      testutil::max_abs_diff(a.mask_logits, b.mask_logits));
            worst = std::max(worst, d);
        }
    }
    return {worst <= 1e-6, fmt::format("max |adapted - base| = {:.3g} over 3 methods x 10 inputs", worst)};
}

Outcome gradient_checks() {
    torch::manual_seed(202);
    std::vector<std::pair<std::string, double>> errs;

    {
        MonaConfig mc;
        mc.input_channels = 8;
        mc.bottleneck_channels = 4;
        mc.kernel_sizes = {1, 3};
        Mona mona(mc);
        {
            torch::NoGradGuard ng;
            for (auto& p : mona->parameters()) {
                p.add_(torch::randn_like(p) * 0.3);
            }
        }
        auto params = testutil::double_params(*mona);
        auto x = torch::randn({1, 4, 4, 8}, torch::kDouble).requires_grad_(true);
        auto w = torch::randn({1, 4, 4, 8}, torch::kDouble);
        params.push_back(x);
        errs.emplace_back("mona", testutil::gradient_check([&] { return (mona(x) * w).sum(); }, params));
    }

    auto pl = torch::randn({2, 16}, torch::kDouble).requires_grad_(true);
    auto gt = (torch::rand({2, 16}, torch::kDouble) > 0.5).to(torch::kDouble);
    errs.emplace_back("dice", testutil::gradient_check([&] { return loss_dice({pl, gt}, 2.0, 1.0); }, {pl}));
    errs.emplace_back("point_ce", testutil::gradient_check([&] { return loss_ce_seg({pl, gt}, 2.0); }, {pl}));

    auto cls = torch::randn({2, 3, 3}, torch::kDouble).requires_grad_(true);
    auto tgt = torch::tensor({{0, 2, 1}, {2, 2, 0}}, torch::kLong);
    LossConfig lc;
    errs.emplace_back("class_ce", testutil::gradient_check([&] { return loss_ce_cls(cls, tgt, lc); }, {cls}));

    {
        const LevelShapes shapes{{4, 4}, {2, 2}};
        MSDeformAttn attn(4, 2, 2, 2);
        attn->to(torch::kDouble);
        {
            torch::NoGradGuard ng;
            attn->sampling_offsets->weight.normal_(0.0, 0.3);
            attn->attention_weights->weight.normal_(0.0, 0.3);
        }
        auto input = torch::randn({1, 20, 4}, torch::kDouble).requires_grad_(true);
        auto query = torch::randn({1, 2, 4}, torch::kDouble).requires_grad_(true);
        auto ref = torch::tensor({0.31, 0.47, 0.62, 0.23}, torch::kDouble).view({1, 2, 2});
        auto w = torch::randn({1, 2, 4}, torch::kDouble);
        auto params = attn->parameters();
        params.push_back(input);
        params.push_back(query);
        errs.emplace_back("deform_attn", testutil::gradient_check(
                                             [&] { return (attn(query, ref, input, shapes) * w).sum(); }, params));
    }

    bool ok = true;
    std::string detail;
    for (const auto& [name, e] : errs) {
        ok = ok && e <= 1e-4;
        detail += fmt::format("{}{}={:.2g}", detail.empty() ? "" : " ", name, e);
    }
    return {ok, "relative error: " + detail};
}

Outcome freeze_invariant() {
    torch::manual_seed(303);
    MCSamSeg model(testutil::tiny_model());
    apply_policy(*model, builtin_policy(PeftMethod::Mona));
    std::map<std::string, torch::Tensor> before;
    for (const auto& p : model->named_parameters()) {
        before[p.key()] = p.value().detach().clone();
    }
    std::vector<torch::Tensor> trainable;
    for (auto& p : model->parameters()) {
        if (p.requires_grad()) {
            trainable.push_back(p);
        }
    }
    torch::optim::AdamW opt(trainable, torch::optim::AdamWOptions(1e-3).weight_decay(1e-3));
    LossConfig lc;
    lc.num_points = 64;
    for (int s = 0; s < 5; ++s) {
        opt.zero_grad();
        auto pred = model(torch::randn({2, 3, 64, 64}));
        std::vector<InstanceTarget> t{testutil::box_target(64, 4, 8, 20, 30), testutil::box_target(64, 30, 2, 16, 16)};
        total_loss(pred, t, lc).total.backward();
        opt.step();
    }
    int frozen = 0, frozen_moved = 0, mona = 0, mona_still = 0;
    for (const auto& p : model->named_parameters()) {
        const bool same = torch::equal(before.at(p.key()), p.value());
        if (!p.value().requires_grad()) {
            ++frozen;
            frozen_moved += !same;
        } else if (p.key().find(".mona") != std::string::npos) {
            ++mona;
            mona_still += same;
        }
    }
    return {frozen > 0 && mona > 0 && frozen_moved == 0 && mona_still == 0,
            fmt::format("{} frozen tensors ({} changed), {} Mona tensors ({} unchanged)", frozen, frozen_moved, mona,
                        mona_still)};
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

Outcome oracle_equivalences() {
    std::string detail;
    bool ok = true;

    // (a) assignment vs permutation brute force.
    {
        std::mt19937 rng(404);
        std::uniform_int_distribution<size_t> dim(1, 6);
        std::uniform_real_distribution<double> u(0.0, 10.0);
        int bad = 0;
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::vector<double>> c(dim(rng));
            const size_t cols = dim(rng);
            for (auto& r : c) {
                r.resize(cols);
                for (auto& x : r) {
                    x = u(rng);
                }
            }
            const auto a = linear_sum_assignment(c);
            double total = 0.0;
            for (size_t i = 0; i < a.row_to_col.size(); ++i) {
                if (a.row_to_col[i] >= 0) {
                    total += c[i][static_cast<size_t>(a.row_to_col[i])];
                }
            }
            bad += std::abs(total - oracle::brute_force_assignment(c)) > 1e-9;
        }
        ok = ok && bad == 0;
        detail += fmt::format("hungarian {}/200", 200 - bad);
    }

    // (b) deformable attention vs dense loops.
    {
        std::mt19937 rng(405);
        torch::manual_seed(405);
        std::uniform_int_distribution<int64_t> side(1, 4), small(1, 3);
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const auto L = small(rng), heads = small(rng), P = small(rng), D = small(rng), Q = small(rng);
            LevelShapes shapes;
            int64_t S = 0;
            for (int64_t l = 0; l < L; ++l) {
                shapes.emplace_back(side(rng), side(rng));
                S += shapes.back().first * shapes.back().second;
            }
            auto value = torch::randn({2, S, heads, D}, torch::kDouble);
            auto loc = torch::rand({2, Q, heads, L, P, 2}, torch::kDouble) * 1.4 - 0.2;
            auto w = torch::softmax(torch::randn({2, Q, heads, L * P}, torch::kDouble), -1).view({2, Q, heads, L, P});
            auto got = ms_deform_attn_core(value, shapes, loc, w);
            worst = std::max(worst, testutil::max_abs_diff(got, oracle::dense_deform_attn(value, shapes, loc, w)));
        }
        ok = ok && worst <= 1e-6;
        detail += fmt::format(", deform max err {:.2g}", worst);
    }

    // (c) AP vs hand-enumerated PR integration.
    {
        const auto gt = [](const BinaryMask& m) {
            auto r = rle_encode(m);
            return EvalGt{1, 1, r, rle_to_bbox(r), false};
        };
        const auto det = [](double s, const BinaryMask& m) {
            auto r = rle_encode(m);
            return Detection{1, 1, s, r, rle_to_bbox(r)};
        };
        std::vector<EvalGt> gts{gt(rect(12, 12, 0, 0, 4, 4)), gt(rect(12, 12, 4, 4, 4, 4)),
                                gt(rect(12, 12, 8, 8, 4, 4))};
        // TP FP TP FP: 34 recall points at precision 1, 33 at 2/3.
        std::vector<Detection> a{det(0.9, rect(12, 12, 0, 0, 4, 4)), det(0.8, rect(12, 12, 0, 8, 4, 4)),
                                 det(0.7, rect(12, 12, 4, 4, 4, 4)), det(0.6, rect(12, 12, 8, 0, 4, 4))};
        // FP TP TP TP: precision 3/4 at every recall point.
        std::vector<Detection> b{det(0.9, rect(12, 12, 0, 8, 4, 4)), det(0.8, rect(12, 12, 0, 0, 4, 4)),
                                 det(0.7, rect(12, 12, 4, 4, 4, 4)), det(0.6, rect(12, 12, 8, 8, 4, 4))};
        // One TP only: precision 1 for the first 34 recall points.
        std::vector<Detection> c{det(0.5, rect(12, 12, 4, 4, 4, 4))};
        const double ea = (34.0 + 33.0 * 2.0 / 3.0) / 101.0;
        const double eb = 0.75;
        const double ec = 34.0 / 101.0;
        const auto ra = compute_ap(a, gts, {0.5}, IouKind::Mask, 100).ap;
        const auto rb = compute_ap(b, gts, {0.5}, IouKind::Mask, 100).ap;
        const auto rc = compute_ap(c, gts, {0.5}, IouKind::Mask, 100).ap;
        const double err = std::max({std::abs(ra - ea), std::abs(rb - eb), std::abs(rc - ec)});
        ok = ok && err <= 1e-12;

        std::mt19937_64 rng(406);
        std::uniform_int_distribution<int64_t> pos(0, 6), side(1, 4);
        std::uniform_real_distribution<double> score(0.0, 1.0);
        int mismatches = 0;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<EvalGt> g;
            for (int k = 0; k < 1 + static_cast<int>(rng() % 4); ++k) {
                g.push_back(gt(rect(10, 10, pos(rng), pos(rng), side(rng), side(rng))));
            }
            std::vector<Detection> d;
            for (int k = 0; k < static_cast<int>(rng() % 6); ++k) {
                d.push_back(det(score(rng), rect(10, 10, pos(rng), pos(rng), side(rng), side(rng))));
            }
            const auto thr = coco_iou_thresholds();
            const auto r = compute_ap(d, g, thr, IouKind::Mask, 100);
            for (size_t t = 0; t < thr.size(); ++t) {
                mismatches += std::abs(r.per_threshold[t] - oracle::brute_ap(d, g, thr[t])) > 1e-12;
            }
        }
        ok = ok && mismatches == 0;
        detail += fmt::format(", AP fixtures err {:.2g}, random mismatches {}", err, mismatches);
    }

    // (d) LoRA merged vs unmerged.
    {
        torch::manual_seed(407);
        LoraLinear lin(12, 10);
        lin->enable_lora(4, 8.0);
        ConvSpec spec{3, 6, 3, 1, 1, true};
        LoraConv2d conv(spec);
        conv->enable_lora(3, 6.0);
        lin->to(torch::kDouble);
        conv->to(torch::kDouble);
        {
            torch::NoGradGuard ng;
            lin->lora_b.normal_();
            conv->lora_b.normal_();
        }
        torch::NoGradGuard ng;
        auto x = torch::randn({5, 12}, torch::kDouble);
        auto img = torch::randn({2, 3, 6, 6}, torch::kDouble);
        namespace F = torch::nn::functional;
        const double e1 = testutil::max_abs_diff(lin(x), F::linear(x, lin->merged_weight(), lin->bias));
        const double e2 = testutil::max_abs_diff(
            conv(img), F::conv2d(img, conv->merged_weight(), F::Conv2dFuncOptions().padding(1).bias(conv->bias)));
        ok = ok && std::max(e1, e2) <= 1e-6;
        detail += fmt::format(", LoRA merge err {:.2g}", std::max(e1, e2));
    }
    return {ok, detail};
}

Outcome adapter_accounting() {
    const auto enc = sam_vit_b_config();
    const auto n = count_adapters(enc);
    ModelConfig cfg;
    cfg.encoder = enc;
    cfg.encoder.adapter = BlockAdapter::Mona;
    cfg.encoder.mona.input_channels = cfg.encoder.embed_dim;
    MCSamSeg model(cfg);
    apply_policy(*model, builtin_policy(PeftMethod::Mona));
    int64_t total = 0, expected = 0, mona_params = 0;
    for (const auto& p : model->named_parameters()) {
        const auto& k = p.key();
        total += p.value().numel();
        const bool mona = k.rfind("encoder.", 0) == 0 && k.find(".mona") != std::string::npos;
        mona_params += mona ? p.value().numel() : 0;
        if (mona || k.rfind("neck.", 0) == 0 || k.rfind("decoder.", 0) == 0) {
            expected += p.value().numel();
        }
    }
    const double frac = trainable_fraction(*model);
    const double want = static_cast<double>(expected) / static_cast<double>(total);
    const bool closed_form = mona_params == n * mona_param_count(cfg.encoder.mona) &&
                             partition_report(*model).trainable == expected;
    return {n == 24 && frac == want && closed_form,
            fmt::format("count_adapters = {}; trainable {} of {} ({:.4f}%), enumeration {:.4f}%", n,
                        partition_report(*model).trainable, total, 100.0 * frac, 100.0 * want)};
}

Outcome overfit() {
    const auto tmp = fs::temp_directory_path() / fmt::format("mcsam_accept_{}", std::random_device{}());
    write_synthetic_rectangles(tmp / "data", 4, 256, 0);
    auto cfg = load_config(kRoot / "configs" / "tiny" / "overfit.conf");
    apply_override(cfg, "data.train_annotations=" + (tmp / "data" / "annotations.json").string());
    apply_override(cfg, "data.train_images=" + (tmp / "data" / "images").string());
    apply_override(cfg, "data.val_annotations=" + (tmp / "data" / "annotations.json").string());
    apply_override(cfg, "data.val_images=" + (tmp / "data" / "images").string());
    apply_override(cfg, "train.output_dir=" + (tmp / "run").string());

    bool finite = true;
    std::deque<double> window;
    double window_sum = 0.0;
    double prev_avg = std::numeric_limits<double>::infinity();
    double max_rise = 0.0;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& rec, MCSamSeg&) {
        for (const auto& [k, v] : rec.losses) {
            finite = finite && std::isfinite(v);
        }
        const double l = rec.losses.at("loss_total");
        window.push_back(l);
        window_sum += l;
        if (window.size() > 20) {
            window_sum -= window.front();
            window.pop_front();
        }
        if (window.size() == 20) {
            const double avg = window_sum / 20.0;
            if (std::isfinite(prev_avg)) {
                max_rise = std::max(max_rise, avg - prev_avg);
            }
            prev_avg = avg;
        }
    };
    auto res = train(cfg, std::nullopt, hooks);
    double final50 = 0.0;
    int64_t first_step = -1;
    for (const auto& line : read_checkpoint_meta(res.last_checkpoint).metrics) {
        const double v = line.value("ap_mask_50", 0.0);
        if (v >= 100.0 && first_step < 0) {
            first_step = line.value("step", int64_t{-1});
        }
        final50 = v;
    }
    fs::remove_all(tmp);
    const bool ok = res.steps <= 200 && final50 >= 100.0 && finite && max_rise <= 0.01;
    return {ok, fmt::format("{} steps, final AP50_mask {:.1f} (first 100 at step {}), finite {}, max smoothed rise {:.4f} (limit 0.01)",
                            res.steps, final50, first_step, finite, max_rise)};
}

Outcome masked_attention_identities() {
    torch::manual_seed(808);
    int checked = 0;
    bool ok = true;
    for (int trial = 0; trial < 5; ++trial) {
        MultiHeadAttention mha(8, 2);
        auto q = torch::randn({2, 3, 8});
        auto kv = torch::randn({2, 6, 8});
        auto unmasked = mha(q, kv, kv);
        auto open = mha(q, kv, kv, torch::zeros({2, 3, 6}, torch::kBool));
        ok = ok && torch::equal(unmasked, open);

        // All-foreground logits leave nothing blocked; all-background rows fall back to unmasked.
        auto fg = build_attention_mask(torch::full({2, 3, 4, 4}, 5.0), 2, 3, 0.5);
        auto bg = build_attention_mask(torch::full({2, 3, 4, 4}, -5.0), 2, 3, 0.5);
        ok = ok && !fg.any().item<bool>() && !bg.any().item<bool>();
        ok = ok && torch::equal(mha(q, kv, kv, fg), unmasked);
        ok = ok && torch::equal(mha(q, kv, kv, bg), unmasked);

        // Mixed: one query sees nothing in front, the others keep their masks.
        auto logits = torch::randn({1, 3, 4, 4});
        logits[0][1].fill_(-5.0);
        auto mixed = build_attention_mask(logits, 4, 4, 0.5);
        ok = ok && !mixed[0][1].any().item<bool>();
        auto expect = logits[0][0].flatten() < 0.0;
        ok = ok && torch::equal(mixed[0][0], expect.all().item<bool>() ? torch::zeros_like(expect) : expect);
        checked += 4;
    }
    return {ok, fmt::format("{} identities on random toys", checked)};
}

Outcome loss_anchors() {
    LossConfig cfg;
    cfg.no_object_weight = 1.0;
    auto logits = torch::zeros({1, 1, 2}, torch::kDouble);
    const double ce = loss_ce_cls(logits, torch::zeros({1, 1}, torch::kLong), cfg).item<double>();
    const double e1 = std::abs(ce - std::log(2.0));

    const int64_t n = 37;
    auto ones = torch::ones({1, n}, torch::kDouble);
    auto zeros = torch::zeros({1, n}, torch::kDouble);
    const double perfect = dice_terms(ones, ones, 1.0).item<double>();
    const double empty = dice_terms(zeros, ones, 1.0).item<double>();
    const double e2 = std::abs(perfect);
    const double e3 = std::abs(empty - (1.0 - 1.0 / (static_cast<double>(n) + 1.0)));
    return {e1 <= 1e-6 && e2 <= 1e-9 && e3 <= 1e-9,
            fmt::format("|CE - ln2| = {:.2g}, |dice perfect| = {:.2g}, |dice disjoint - (1 - e/(n+e))| = {:.2g}", e1,
                        e2, e3)};
}

Outcome dry_runs() {
    const char* names[] = {"weights_vit_frozen", "weights_vit_mona", "weights_sam_frozen", "weights_sam_mona",
                           "peft_adapter",       "peft_lora",        "peft_mona"};
    int good = 0;
    std::string failed;
    for (const char* n : names) {
        try {
            auto r = dry_run(load_config(kRoot / "configs" / "tiny" / (std::string(n) + ".conf")));
            if (r.finite && r.grads_present && r.trainable_params > 0) {
                ++good;
            } else {
                failed += std::string(" ") + n;
            }
        } catch (const std::exception& e) {
            failed += fmt::format(" {} ({})", n, e.what());
        }
    }
    return {good == 7, fmt::format("{}/7 configurations built and stepped{}", good,
                                   failed.empty() ? "" : "; failed:" + failed)};
}

Outcome full_scale_substitution(bool suite_ok) {
    int loaded = 0;
    std::string detail;
    for (const char* n : {"whu", "hrsid"}) {
        try {
            auto cfg = load_config(kRoot / "configs" / "full" / (std::string(n) + ".conf"));
            cfg.model.validate();
            MCSamSeg model(cfg.model);
            apply_policy(*model, policy_for(cfg));
            detail += fmt::format("{} q={} {:.2f}% trainable; ", n, cfg.model.decoder.num_queries,
                                  100.0 * trainable_fraction(*model));
            ++loaded;
        } catch (const std::exception& e) {
            detail += fmt::format("{}: {}; ", n, e.what());
        }
    }
    return {loaded == 2 && suite_ok,
            detail + "full-scale AP not measured here (needs full datasets, SAM weights, 300 epochs); "
                     "substituted by the property suite"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria, one PASS/FAIL line each"};
    bool report_only = false;
    std::string report_path;
    app.add_flag("--report-only", report_only, "exit 0 whenever every criterion reached a verdict");
    app.add_option("--report", report_path, "also write the verdict lines to this file");
    CLI11_PARSE(app, argc, argv);

    spdlog::set_level(spdlog::level::warn);
    torch::set_num_threads(1);

    std::vector<Criterion> criteria{
        {"identity at init (Mona, Adapter, LoRA)", 30, identity_at_init},
        {"gradient correctness", 120, gradient_checks},
        {"freeze-policy invariant", 60, freeze_invariant},
        {"oracle equivalences", 180, oracle_equivalences},
        {"adapter count and accounting", 60, adapter_accounting},
        {"overfit smoke test", 600, overfit},
        {"masked-attention identities", 30, masked_attention_identities},
        {"loss analytic anchors", 10, loss_anchors},
        {"config harness dry runs", 300, dry_runs},
    };

    bool all = true;
    bool crashed = false;
    std::vector<std::string> lines;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
            crashed = true;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_seconds;
        const bool pass = o.pass && in_time;
        all = all && pass;
        lines.push_back(fmt::format("{} {} [{:.1f}s / {:.0f}s] {}", pass ? "PASS" : "FAIL", c.name, secs,
                                    c.budget_seconds, o.detail));
        fmt::print("{}\n", lines.back());
        std::fflush(stdout);
    }

    auto sub = full_scale_substitution(all);
    all = all && sub.pass;
    lines.push_back(fmt::format("{} full-scale results (substituted) {}", sub.pass ? "PASS" : "FAIL", sub.detail));
    fmt::print("{}\n", lines.back());
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        for (const auto& l : lines) {
            out << l << '\n';
        }
    }
    if (report_only) {
        return crashed ? 1 : 0;
    }
    return all ? 0 : 1;
}
