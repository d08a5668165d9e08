#include "mcsam/train.hpp"

#include "mcsam/errors.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mcsam {

using nlohmann::json;
namespace F = torch::nn::functional;

double LrSchedule::at(int64_t step) const {
    const auto w = std::max<int64_t>(1, warmup_steps);
    if (step < w) {
        return lr_max * static_cast<double>(step + 1) / static_cast<double>(w);
    }
    const auto span = std::max<int64_t>(1, total_steps - w);
    const double progress = std::min(1.0, static_cast<double>(step - w) / static_cast<double>(span));
    return min_lr + (lr_max - min_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

FreezePolicy policy_for(const RunConfig& cfg) {
    if (!cfg.peft.policy_file.empty()) {
        return FreezePolicy::load(cfg.resolve(cfg.peft.policy_file));
    }
    const bool train_neck = cfg.peft.train_encoder_neck || cfg.weights.source != WeightSource::Sam;
    return builtin_policy(cfg.peft.method, train_neck);
}

namespace {

std::filesystem::path default_name_map(WeightSource source) {
    const std::filesystem::path dir(MCSAM_DATA_DIR);
    return dir / (source == WeightSource::Sam ? "sam_vit_b_name_map.txt" : "vit_b16_name_map.txt");
}

std::vector<torch::Tensor> trainable_parameters(torch::nn::Module& model) {
    std::vector<torch::Tensor> out;
    for (auto& p : model.parameters()) {
        if (p.requires_grad()) {
            out.push_back(p);
        }
    }
    return out;
}

at::Generator step_generator(uint64_t seed, int64_t step) {
    return at::make_generator<at::CPUGeneratorImpl>(mix_seed(seed, static_cast<uint64_t>(step)));
}

void set_lr(torch::optim::Optimizer& opt, double lr) {
    for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
    }
}

json categories_to_json(const std::vector<CocoCategory>& cats) {
    json out = json::array();
    for (const auto& c : cats) {
        out.push_back({{"id", c.id}, {"name", c.name}});
    }
    return out;
}

std::vector<CocoCategory> categories_from_json(const json& j) {
    std::vector<CocoCategory> out;
    for (const auto& c : j) {
        out.push_back({c.at("id").get<int64_t>(), c.value("name", std::string())});
    }
    return out;
}

bool same_categories(const std::vector<CocoCategory>& a, const std::vector<CocoCategory>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].id != b[i].id || a[i].name != b[i].name) {
            return false;
        }
    }
    return true;
}

}  // namespace

BuiltModel build_model(const RunConfig& cfg_in, bool import_weights) {
    RunConfig cfg = cfg_in;
    cfg.sync();
    cfg.model.validate();
    torch::manual_seed(cfg.train.seed);

    BuiltModel b;
    b.model = MCSamSeg(cfg.model);
    if (import_weights && cfg.weights.source != WeightSource::Random) {
        const auto path = cfg.resolve(cfg.weights.path);
        const auto map_path = cfg.weights.name_map.empty() ? default_name_map(cfg.weights.source)
                                                           : cfg.resolve(cfg.weights.name_map);
        const auto source = read_state_dict(path);
        b.import = import_encoder_weights(b.model->encoder, source, NameMap::load(map_path));
        spdlog::info("imported {} encoder tensors from {} ({} unmapped, {} left at init)", b.import->loaded.size(),
                     path.string(), b.import->unmapped.size(), b.import->missing.size());
    }
    if (cfg.peft.method == PeftMethod::Lora) {
        b.lora_layers = apply_lora(*b.model, cfg.peft.lora);
    }
    b.policy = policy_for(cfg);
    b.partition = apply_policy(*b.model, b.policy);
    return b;
}

void save_checkpoint(const std::filesystem::path& path, MCSamSeg& model, torch::optim::Optimizer* optimizer,
                     const CheckpointMeta& meta) {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive params;
    for (const auto& item : model->named_parameters(true)) {
        params.write(item.key(), item.value().detach());
    }
    for (const auto& item : model->named_buffers(true)) {
        params.write(item.key(), item.value(), /*is_buffer=*/true);
    }
    archive.write("model", params);
    if (optimizer != nullptr) {
        torch::serialize::OutputArchive opt;
        optimizer->save(opt);
        archive.write("optimizer", opt);
    }
    json m{{"epoch", meta.epoch},
           {"step", meta.step},
           {"config", meta.config},
           {"metrics", meta.metrics},
           {"categories", categories_to_json(meta.categories)},
           {"mean", meta.mean},
           {"std", meta.std}};
    archive.write("meta", c10::IValue(m.dump()));
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const auto tmp = path.string() + ".tmp";
    archive.save_to(tmp);
    std::filesystem::rename(tmp, path);
}

namespace {

CheckpointMeta meta_from_archive(torch::serialize::InputArchive& archive) {
    c10::IValue value;
    archive.read("meta", value);
    const auto m = json::parse(value.toStringRef());
    CheckpointMeta meta;
    meta.epoch = m.at("epoch").get<int64_t>();
    meta.step = m.at("step").get<int64_t>();
    meta.config = m.at("config").get<std::string>();
    meta.metrics = m.at("metrics");
    meta.categories = categories_from_json(m.at("categories"));
    meta.mean = m.at("mean").get<std::array<double, 3>>();
    meta.std = m.at("std").get<std::array<double, 3>>();
    return meta;
}

}  // namespace

CheckpointMeta load_checkpoint(const std::filesystem::path& path, MCSamSeg& model,
                               torch::optim::Optimizer* optimizer) {
    if (!std::filesystem::exists(path)) {
        throw DataError("checkpoint " + path.string() + " does not exist");
    }
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        torch::serialize::InputArchive params;
        archive.read("model", params);
        torch::NoGradGuard no_grad;
        for (auto& item : model->named_parameters(true)) {
            torch::Tensor t;
            params.read(item.key(), t);
            if (t.sizes() != item.value().sizes()) {
                throw DataError("checkpoint tensor '" + item.key() + "' has shape " + c10::str(t.sizes()) +
                                ", model expects " + c10::str(item.value().sizes()));
            }
            item.value().copy_(t);
        }
        if (optimizer != nullptr) {
            torch::serialize::InputArchive opt;
            if (!archive.try_read("optimizer", opt)) {
                throw DataError("checkpoint " + path.string() + " has no optimizer state to resume from");
            }
            optimizer->load(opt);
        }
        return meta_from_archive(archive);
    } catch (const c10::Error& e) {
        throw DataError("cannot load checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        return meta_from_archive(archive);
    } catch (const c10::Error& e) {
        throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

Predictions run_inference(MCSamSeg& model, const DatasetSplit& split, const PreprocessConfig& pre,
                          int64_t batch_size) {
    torch::NoGradGuard no_grad;
    model->eval();
    Predictions out;
    BatchStream stream(split, pre, batch_size, /*train=*/false, 0);
    const auto S = pre.image_size;
    for (int64_t b = 0; b < stream.batches_per_epoch(); ++b) {
        auto batch = stream.batch(0, b);
        auto pred = model(batch.images);
        const auto q = pred.class_logits.size(1);
        for (size_t i = 0; i < batch.samples.size(); ++i) {
            const auto& s = batch.samples[i];
            auto logits = pred.mask_logits[static_cast<int64_t>(i)].unsqueeze(0);
            logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{S, S})
                                                .mode(torch::kBilinear)
                                                .align_corners(false));
            logits = logits.narrow(2, 0, s.valid_height).narrow(3, 0, s.valid_width);
            logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{s.orig_height, s.orig_width})
                                                .mode(torch::kBilinear)
                                                .align_corners(false))
                         .squeeze(0);
            for (auto& r : instance_inference(pred.class_logits[static_cast<int64_t>(i)], logits, q)) {
                BinaryMask bm(s.orig_height, s.orig_width);
                auto m = r.mask.to(torch::kUInt8).contiguous();
                std::copy(m.data_ptr<uint8_t>(), m.data_ptr<uint8_t>() + m.numel(), bm.data.begin());
                Detection d;
                d.image_id = s.image_id;
                d.category_id = split.category_of(r.label);
                d.score = r.score;
                d.mask = rle_encode(bm);
                d.box = rle_to_bbox(d.mask);
                out.detections.push_back(std::move(d));
            }
        }
    }
    return out;
}

EvalReport evaluate_split(MCSamSeg& model, const DatasetSplit& split, const PreprocessConfig& pre,
                          int64_t batch_size) {
    const auto preds = run_inference(model, split, pre, batch_size);
    return evaluate(preds.detections, ground_truth_from_split(split),
                    model->config().decoder.num_queries);
}

TrainResult train(RunConfig cfg, const std::optional<std::filesystem::path>& resume, const TrainHooks& hooks,
                  int64_t stop_at_step) {
    cfg.sync();
    cfg.validate(/*require_data=*/true);
    torch::set_num_threads(static_cast<int>(cfg.train.threads));

    const auto train_split =
        load_coco(cfg.resolve(cfg.data.train_annotations), cfg.resolve(cfg.data.train_images), "train");
    const auto val_split = load_coco(cfg.resolve(cfg.data.val_annotations), cfg.resolve(cfg.data.val_images), "val");
    if (train_split.num_classes() != cfg.model.decoder.num_classes) {
        throw ConfigError("decoder.num_classes = " + std::to_string(cfg.model.decoder.num_classes) +
                          " but the training annotations define " + std::to_string(train_split.num_classes()) +
                          " categories");
    }
    if (!same_categories(train_split.categories, val_split.categories)) {
        throw DataError("train and val category tables differ");
    }
    if (cfg.data.normalization == "dataset") {
        std::tie(cfg.data.mean, cfg.data.std) = channel_statistics(train_split);
        cfg.data.normalization = "custom";
    } else if (cfg.data.normalization == "sam") {
        cfg.data.mean = kSamPixelMean;
        cfg.data.std = kSamPixelStd;
    }
    const auto pre = cfg.preprocess();

    auto built = build_model(cfg, /*import_weights=*/!resume.has_value());
    auto& model = built.model;
    spdlog::info("{}: {} of {} parameters trainable ({:.3f}%)", cfg.name, built.partition.trainable,
                 built.partition.total, 100.0 * built.partition.fraction());
    auto trainable = trainable_parameters(*model);
    if (trainable.empty()) {
        throw ConfigError("freeze policy leaves no trainable parameters");
    }
    torch::optim::AdamW optimizer(trainable, torch::optim::AdamWOptions(cfg.optim.lr)
                                                 .weight_decay(cfg.optim.weight_decay)
                                                 .betas({cfg.optim.beta1, cfg.optim.beta2}));

    BatchStream stream(train_split, pre, cfg.train.batch_size, /*train=*/true, cfg.train.seed, cfg.data.workers);
    const auto bpe = stream.batches_per_epoch();
    const auto accum = cfg.train.accumulation;
    const auto steps_per_epoch = (bpe + accum - 1) / accum;
    const auto total_steps = cfg.train.max_steps > 0 ? cfg.train.max_steps : cfg.train.epochs * steps_per_epoch;
    const auto warmup = std::clamp<int64_t>(
        cfg.schedule.warmup_steps > 0
            ? cfg.schedule.warmup_steps
            : static_cast<int64_t>(std::llround(cfg.schedule.warmup_epochs * static_cast<double>(steps_per_epoch))),
        1, total_steps);
    const LrSchedule schedule{cfg.optim.lr, cfg.schedule.min_lr, warmup, total_steps};
    const auto stop = stop_at_step > 0 ? std::min(stop_at_step, total_steps) : total_steps;

    const auto out_dir = cfg.output_dir();
    std::filesystem::create_directories(out_dir);
    CheckpointMeta meta;
    meta.config = serialize_config(cfg);
    meta.categories = train_split.categories;
    meta.mean = cfg.data.mean;
    meta.std = cfg.data.std;

    TrainResult result;
    result.best_checkpoint = out_dir / "best.pt";
    result.last_checkpoint = out_dir / "last.pt";
    int64_t start = 0;
    double best_ap = -1.0;
    std::string last_good = "none";
    if (resume) {
        const auto rm = load_checkpoint(*resume, model, &optimizer);
        if (!same_categories(rm.categories, train_split.categories)) {
            throw DataError("checkpoint categories differ from the dataset's");
        }
        start = rm.step;
        meta.metrics = rm.metrics;
        for (const auto& m : meta.metrics) {
            best_ap = std::max(best_ap, m.value("ap_mask", -1.0));
        }
        last_good = resume->string();
        spdlog::info("resumed from {} at step {}", resume->string(), start);
    }
    std::ofstream log(out_dir / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);

    auto run_eval = [&](int64_t step, int64_t epoch) {
        auto report = evaluate_split(model, val_split, pre, cfg.train.batch_size);
        model->train();
        json entry = report.to_json();
        entry["step"] = step;
        entry["epoch"] = epoch;
        meta.metrics.push_back(entry);
        json line = entry;
        line["type"] = "eval";
        log << line.dump() << '\n' << std::flush;
        meta.step = step;
        meta.epoch = epoch;
        save_checkpoint(result.last_checkpoint, model, &optimizer, meta);
        last_good = result.last_checkpoint.string();
        result.last = report;
        if (report.ap_mask > best_ap || !std::filesystem::exists(result.best_checkpoint)) {
            best_ap = std::max(best_ap, report.ap_mask);
            save_checkpoint(result.best_checkpoint, model, nullptr, meta);
            result.best = report;
        }
        spdlog::info("step {} epoch {}: AP_mask {:.2f} AP50 {:.2f} AP75 {:.2f}", step, epoch, report.ap_mask,
                     report.ap_mask_50, report.ap_mask_75);
    };

    model->train();
    bool evaluated_at_end = false;
    for (int64_t step = start; step < stop; ++step) {
        const double lr = schedule.at(step);
        set_lr(optimizer, lr);
        optimizer.zero_grad();
        auto gen = step_generator(cfg.train.seed, step);
        StepRecord rec;
        rec.step = step;
        rec.lr = lr;
        for (int64_t k = 0; k < accum; ++k) {
            const int64_t micro = step * accum + k;
            const int64_t epoch = micro / bpe;
            rec.epoch = epoch;
            auto batch = stream.batch(epoch, micro % bpe);
            LossOutput lo;
            try {
                auto pred = model(batch.images);
                lo = total_loss(pred, batch.targets, cfg.loss, gen);
            } catch (const std::bad_alloc&) {
                throw std::runtime_error("out of memory at step " + std::to_string(step) +
                                         "; reduce train.batch_size and raise train.accumulation");
            }
            if (!std::isfinite(lo.components["loss_total"])) {
                throw NumericError("non-finite loss at step " + std::to_string(step) +
                                   "; last good checkpoint: " + last_good);
            }
            (lo.total / static_cast<double>(accum)).backward();
            for (const auto& [name, v] : lo.components) {
                rec.losses[name] += v / static_cast<double>(accum);
            }
        }
        if (cfg.optim.clip_grad_norm > 0) {
            torch::nn::utils::clip_grad_norm_(trainable, cfg.optim.clip_grad_norm);
        }
        optimizer.step();

        json line{{"type", "step"}, {"step", step}, {"epoch", rec.epoch}, {"lr", lr}};
        for (const auto& [name, v] : rec.losses) {
            line[name] = v;
        }
        log << line.dump() << '\n';
        if (cfg.train.log_interval > 0 && (step + 1) % cfg.train.log_interval == 0) {
            log.flush();
            spdlog::info("step {}/{} lr {:.3g} loss {:.4f}", step + 1, total_steps, lr, rec.losses["loss_total"]);
        }
        result.history.push_back(rec);
        if (hooks.on_step) {
            hooks.on_step(rec, model);
        }

        const int64_t done_epochs = ((step + 1) * accum) / bpe;
        const bool epoch_end = ((step + 1) * accum) % bpe < accum && done_epochs > 0;
        const bool last_step = step + 1 == stop;
        if ((epoch_end && done_epochs % std::max<int64_t>(1, cfg.train.eval_interval) == 0) || last_step) {
            run_eval(step + 1, done_epochs);
            evaluated_at_end = last_step;
        }
    }
    if (!evaluated_at_end && start >= stop) {
        run_eval(stop, (stop * accum) / bpe);
    }
    result.steps = stop;
    return result;
}

namespace {

RunConfig config_with_checkpoint_stats(RunConfig cfg, const CheckpointMeta& meta) {
    cfg.sync();
    cfg.data.mean = meta.mean;
    cfg.data.std = meta.std;
    return cfg;
}

}  // namespace

EvalReport evaluate(const RunConfig& cfg_in, const std::filesystem::path& checkpoint) {
    const auto meta = read_checkpoint_meta(checkpoint);
    const auto cfg = config_with_checkpoint_stats(cfg_in, meta);
    torch::set_num_threads(static_cast<int>(cfg.train.threads));
    const auto split = load_coco(cfg.resolve(cfg.data.val_annotations), cfg.resolve(cfg.data.val_images), "val");
    if (!same_categories(split.categories, meta.categories)) {
        throw DataError("category table of " + cfg.data.val_annotations + " does not match checkpoint " +
                        checkpoint.string());
    }
    auto built = build_model(cfg, /*import_weights=*/false);
    load_checkpoint(checkpoint, built.model);
    return evaluate_split(built.model, split, cfg.preprocess(), cfg.train.batch_size);
}

torch::Tensor instance_id_map(const std::vector<Detection>& detections, int64_t height, int64_t width) {
    auto ids = torch::zeros({height, width}, torch::kInt32);
    std::vector<size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return detections[a].score < detections[b].score; });
    auto acc = ids.accessor<int32_t, 2>();
    for (size_t k : order) {
        const auto m = rle_decode(detections[k].mask);
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                if (m.at(y, x)) {
                    acc[y][x] = static_cast<int32_t>(k + 1);
                }
            }
        }
    }
    return ids;
}

PredictSummary predict(const RunConfig& cfg_in, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                       double score_threshold, bool viz) {
    const auto meta = read_checkpoint_meta(checkpoint);
    const auto cfg = config_with_checkpoint_stats(cfg_in, meta);
    torch::set_num_threads(static_cast<int>(cfg.train.threads));
    auto built = build_model(cfg, /*import_weights=*/false);
    load_checkpoint(checkpoint, built.model);

    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(input_dir)) {
        throw DataError("input directory " + input_dir.string() + " does not exist");
    }
    for (const auto& entry : std::filesystem::directory_iterator(input_dir)) {
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff" || ext == ".bmp") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::filesystem::create_directories(output_dir);

    PredictSummary summary;
    json results = json::array();
    for (size_t i = 0; i < files.size(); ++i) {
        ++summary.images;
        try {
            const cv::Mat rgb = read_image_rgb(files[i]);
            DatasetSplit single;
            single.name = "predict";
            single.categories = meta.categories;
            CocoSample s;
            s.image_id = static_cast<int64_t>(i + 1);
            s.file_name = files[i].filename().string();
            s.image_path = files[i];
            s.height = rgb.rows;
            s.width = rgb.cols;
            single.samples.push_back(s);
            auto preds = run_inference(built.model, single, cfg.preprocess(), 1);
            std::vector<Detection> kept;
            for (auto& d : preds.detections) {
                if (d.score >= score_threshold) {
                    kept.push_back(std::move(d));
                }
            }
            auto j = detections_to_json(kept);
            for (auto& item : j) {
                item["file_name"] = s.file_name;
                results.push_back(item);
            }
            summary.detections += static_cast<int64_t>(kept.size());
            if (viz) {
                const auto ids = instance_id_map(kept, rgb.rows, rgb.cols);
                cv::Mat id_img(rgb.rows, rgb.cols, CV_16U);
                cv::Mat overlay;
                cv::cvtColor(rgb, overlay, cv::COLOR_RGB2BGR);
                auto acc = ids.accessor<int32_t, 2>();
                for (int y = 0; y < rgb.rows; ++y) {
                    for (int x = 0; x < rgb.cols; ++x) {
                        const int id = acc[y][x];
                        id_img.at<uint16_t>(y, x) = static_cast<uint16_t>(id);
                        if (id > 0) {
                            cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar((id * 47) % 180, 220, 255));
                            cv::Mat bgr;
                            cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
                            auto& px = overlay.at<cv::Vec3b>(y, x);
                            const auto c = bgr.at<cv::Vec3b>(0, 0);
                            for (int ch = 0; ch < 3; ++ch) {
                                px[ch] = static_cast<uint8_t>((px[ch] + c[ch]) / 2);
                            }
                        }
                    }
                }
                const auto stem = files[i].stem().string();
                cv::imwrite((output_dir / (stem + "_overlay.png")).string(), overlay);
                cv::imwrite((output_dir / (stem + "_ids.png")).string(), id_img);
            }
        } catch (const std::exception& e) {
            ++summary.failures;
            spdlog::error("{}: {}", files[i].string(), e.what());
        }
    }
    summary.results_file = output_dir / "results.json";
    std::ofstream(summary.results_file) << results.dump(1);
    return summary;
}

DryRunReport dry_run(const RunConfig& cfg_in) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = cfg_in;
    cfg.sync();
    cfg.validate(/*require_data=*/false);
    DryRunReport report;
    report.name = cfg.name;
    auto built = build_model(cfg);
    auto& model = built.model;
    report.total_params = built.partition.total;
    report.trainable_params = built.partition.trainable;

    const auto S = cfg.model.encoder.image_size;
    auto gen = step_generator(cfg.train.seed, 0);
    auto images = torch::randn({1, 3, S, S}, gen, torch::TensorOptions());
    InstanceTarget target;
    target.labels = torch::zeros({1}, torch::kLong);
    target.masks = torch::zeros({1, S, S});
    target.masks.narrow(1, S / 4, S / 2).narrow(2, S / 4, S / 2).fill_(1.0);

    auto trainable = trainable_parameters(*model);
    torch::optim::AdamW optimizer(trainable, torch::optim::AdamWOptions(cfg.optim.lr));
    model->train();
    auto pred = model(images);
    auto lo = total_loss(pred, {target}, cfg.loss, gen);
    lo.total.backward();
    report.loss = lo.components["loss_total"];
    report.finite = std::isfinite(report.loss);
    report.grads_present = !trainable.empty();
    for (const auto& item : model->named_parameters(true)) {
        if (item.value().requires_grad() && !item.value().grad().defined()) {
            spdlog::warn("{}: no gradient reached {}", cfg.name, item.key());
            report.grads_present = false;
        }
    }
    optimizer.step();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace mcsam
