#include "mcsam/config.hpp"
#include "mcsam/errors.hpp"
#include "mcsam/peft.hpp"
#include "mcsam/train.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "run config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
}

mcsam::RunConfig load(const Common& c) {
    auto cfg = mcsam::load_config(c.config);
    for (const auto& o : c.overrides) {
        mcsam::apply_override(cfg, o);
    }
    return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream(path) << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MC-SAM SEG instance segmentation: training, evaluation and prediction"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");

    Common train_opts;
    std::string resume;
    int64_t stop_at = 0;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd, train_opts);
    train_cmd->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);
    train_cmd->add_option("--stop-at-step", stop_at, "end after this many optimizer steps");

    Common eval_opts;
    std::string eval_ckpt;
    std::string eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the val split");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval_out, "write the key-value report here");

    Common pred_opts;
    std::string pred_ckpt;
    std::string input_dir;
    std::string output_dir = "predictions";
    bool viz = false;
    double score_thr = -1.0;
    auto* pred_cmd = app.add_subcommand("predict", "segment a directory of images");
    add_common(pred_cmd, pred_opts);
    pred_cmd->add_option("--ckpt", pred_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--input", input_dir, "image directory")->required();
    pred_cmd->add_option("--output", output_dir, "output directory")->capture_default_str();
    pred_cmd->add_flag("--viz", viz, "write overlays and instance-id maps");
    pred_cmd->add_option("--score-thr", score_thr, "minimum score (default: run.score_threshold)");

    Common params_opts;
    bool list_names = false;
    auto* params_cmd = app.add_subcommand("params", "report the trainable/frozen partition");
    add_common(params_cmd, params_opts);
    params_cmd->add_flag("--names", list_names, "also list every trainable parameter");

    std::vector<std::string> dry_configs;
    std::vector<std::string> dry_overrides;
    auto* dry_cmd = app.add_subcommand("dryrun", "build each config and run one forward/backward step");
    dry_cmd->add_option("configs", dry_configs, "config files")->required()->check(CLI::ExistingFile);
    dry_cmd->add_option("--set", dry_overrides, "override applied to every config");

    std::string synth_dir;
    int64_t synth_count = 4;
    int64_t synth_size = 256;
    uint64_t synth_seed = 0;
    int64_t synth_per_image = 1;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic rectangle dataset");
    synth_cmd->add_option("dir", synth_dir, "output directory")->required();
    synth_cmd->add_option("--count", synth_count, "images")->capture_default_str();
    synth_cmd->add_option("--size", synth_size, "image side")->capture_default_str();
    synth_cmd->add_option("--seed", synth_seed, "seed")->capture_default_str();
    synth_cmd->add_option("--per-image", synth_per_image, "rectangles per image")->capture_default_str();

    Common show_opts;
    auto* show_cmd = app.add_subcommand("config", "print the resolved config in canonical form");
    add_common(show_cmd, show_opts);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*train_cmd) {
            auto cfg = load(train_opts);
            auto result = mcsam::train(cfg, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume),
                                       {}, stop_at);
            if (result.best) {
                std::cout << result.best->to_table();
            }
            std::cout << "best: " << result.best_checkpoint.string() << "\nlast: " << result.last_checkpoint.string()
                      << "\n";
        } else if (*eval_cmd) {
            auto cfg = load(eval_opts);
            const auto report = mcsam::evaluate(cfg, eval_ckpt);
            std::cout << report.to_table() << report.to_kv();
            if (!eval_out.empty()) {
                write_text(eval_out, report.to_kv());
            }
        } else if (*pred_cmd) {
            auto cfg = load(pred_opts);
            const double thr = score_thr >= 0 ? score_thr : cfg.score_threshold;
            const auto s = mcsam::predict(cfg, pred_ckpt, input_dir, output_dir, thr, viz);
            std::cout << s.images << " images, " << s.detections << " detections, " << s.failures << " failures -> "
                      << s.results_file.string() << "\n";
            return s.failures > 0 ? 3 : 0;
        } else if (*params_cmd) {
            auto cfg = load(params_opts);
            auto built = mcsam::build_model(cfg, /*import_weights=*/false);
            std::cout << "policy:\n" << built.policy.to_text() << "\n" << built.partition.to_text();
            if (list_names) {
                for (const auto& n : built.partition.trainable_names) {
                    std::cout << "  " << n << "\n";
                }
            }
        } else if (*dry_cmd) {
            int failures = 0;
            for (const auto& path : dry_configs) {
                auto cfg = mcsam::load_config(path);
                for (const auto& o : dry_overrides) {
                    mcsam::apply_override(cfg, o);
                }
                const auto r = mcsam::dry_run(cfg);
                const bool ok = r.finite && r.grads_present;
                failures += ok ? 0 : 1;
                std::printf("%-4s %-24s params %10lld trainable %9lld loss %.4f  %.1fs\n", ok ? "ok" : "FAIL",
                            r.name.c_str(), static_cast<long long>(r.total_params),
                            static_cast<long long>(r.trainable_params), r.loss, r.seconds);
            }
            return failures == 0 ? 0 : 1;
        } else if (*synth_cmd) {
            const auto ann = mcsam::write_synthetic_rectangles(synth_dir, synth_count, synth_size, synth_seed,
                                                               synth_per_image);
            std::cout << ann.string() << "\n";
        } else if (*show_cmd) {
            std::cout << mcsam::serialize_config(load(show_opts));
        }
    } catch (const mcsam::ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
