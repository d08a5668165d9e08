#include "mcsam/config.hpp"

#include "mcsam/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace mcsam {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config key '" + key + "': cannot read '" + value + "' as " + expected);
}

int64_t read_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const auto x = std::stoll(v, &pos);
        if (pos != v.size()) {
            bad_value(key, v, "an integer");
        }
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, v, "an integer");
    }
}

double read_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const auto x = std::stod(v, &pos);
        if (pos != v.size()) {
            bad_value(key, v, "a number");
        }
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a number");
    }
}

struct Field {
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

using Registry = std::map<std::string, Field>;

void bind_key(Registry& r, const std::string& key, int64_t& x) {
    r[key] = {[&x] { return std::to_string(x); }, [&x, key](const std::string& v) { x = read_int(key, v); }};
}

void bind_key(Registry& r, const std::string& key, uint64_t& x) {
    r[key] = {[&x] { return std::to_string(x); },
              [&x, key](const std::string& v) {
                  const auto i = read_int(key, v);
                  if (i < 0) {
                      bad_value(key, v, "a non-negative integer");
                  }
                  x = static_cast<uint64_t>(i);
              }};
}

void bind_key(Registry& r, const std::string& key, double& x) {
    r[key] = {[&x] { return fmt::format("{}", x); }, [&x, key](const std::string& v) { x = read_double(key, v); }};
}

void bind_key(Registry& r, const std::string& key, bool& x) {
    r[key] = {[&x] { return std::string(x ? "true" : "false"); },
              [&x, key](const std::string& v) {
                  if (v == "true" || v == "1" || v == "yes") {
                      x = true;
                  } else if (v == "false" || v == "0" || v == "no") {
                      x = false;
                  } else {
                      bad_value(key, v, "a boolean");
                  }
              }};
}

void bind_key(Registry& r, const std::string& key, std::string& x) {
    r[key] = {[&x] { return x; }, [&x](const std::string& v) { x = v; }};
}

void bind_key(Registry& r, const std::string& key, std::vector<int64_t>& x) {
    r[key] = {[&x] {
                  std::string s;
                  for (size_t i = 0; i < x.size(); ++i) {
                      s += (i ? "," : "") + std::to_string(x[i]);
                  }
                  return s;
              },
              [&x, key](const std::string& v) {
                  x.clear();
                  for (const auto& item : split_list(v)) {
                      x.push_back(read_int(key, item));
                  }
              }};
}

void bind_key(Registry& r, const std::string& key, std::vector<std::string>& x) {
    r[key] = {[&x] {
                  std::string s;
                  for (size_t i = 0; i < x.size(); ++i) {
                      s += (i ? "," : "") + x[i];
                  }
                  return s;
              },
              [&x](const std::string& v) { x = split_list(v); }};
}

void bind_key(Registry& r, const std::string& key, std::array<double, 3>& x) {
    r[key] = {[&x] { return fmt::format("{},{},{}", x[0], x[1], x[2]); },
              [&x, key](const std::string& v) {
                  const auto items = split_list(v);
                  if (items.size() != 3) {
                      bad_value(key, v, "three comma-separated numbers");
                  }
                  for (size_t i = 0; i < 3; ++i) {
                      x[i] = read_double(key, items[i]);
                  }
              }};
}

template <typename E>
void bind_enum(Registry& r, const std::string& key, E& x, std::vector<std::pair<E, std::string>> names) {
    r[key] = {[&x, names] {
                  for (const auto& [e, n] : names) {
                      if (e == x) {
                          return n;
                      }
                  }
                  return std::string("?");
              },
              [&x, key, names](const std::string& v) {
                  std::string options;
                  for (const auto& [e, n] : names) {
                      if (n == v) {
                          x = e;
                          return;
                      }
                      options += (options.empty() ? "" : "|") + n;
                  }
                  bad_value(key, v, options);
              }};
}

Registry registry(RunConfig& c) {
    Registry r;
    bind_key(r, "run.name", c.name);
    bind_key(r, "run.score_threshold", c.score_threshold);

    auto& e = c.model.encoder;
    bind_key(r, "encoder.image_size", e.image_size);
    bind_key(r, "encoder.patch_size", e.patch_size);
    bind_key(r, "encoder.embed_dim", e.embed_dim);
    bind_key(r, "encoder.depth", e.depth);
    bind_key(r, "encoder.num_heads", e.num_heads);
    bind_key(r, "encoder.mlp_ratio", e.mlp_ratio);
    bind_key(r, "encoder.neck_out_channels", e.neck_out_channels);
    bind_key(r, "encoder.tap_indices", e.tap_indices);
    bind_key(r, "encoder.window_size", e.window_size);
    bind_key(r, "encoder.global_attn_indices", e.global_attn_indices);
    bind_key(r, "encoder.use_rel_pos", e.use_rel_pos);
    bind_key(r, "encoder.norm_epsilon", e.norm_epsilon);

    bind_key(r, "mona.bottleneck_channels", e.mona.bottleneck_channels);
    bind_key(r, "mona.kernel_sizes", e.mona.kernel_sizes);
    bind_key(r, "mona.norm_epsilon", e.mona.norm_epsilon);
    bind_key(r, "adapter.bottleneck", e.adapter_bottleneck);

    auto& a = c.model.aggregator;
    bind_key(r, "aggregator.mid_channels", a.mid_channels);
    bind_enum(r, "aggregator.fusion", a.fusion, {{TapFusion::Sum, "sum"}, {TapFusion::Concat, "concat"}});

    auto& p = c.model.pixel;
    bind_key(r, "pixel_decoder.conv_dim", p.conv_dim);
    bind_key(r, "pixel_decoder.mask_dim", p.mask_dim);
    bind_key(r, "pixel_decoder.num_layers", p.num_layers);
    bind_key(r, "pixel_decoder.num_heads", p.num_heads);
    bind_key(r, "pixel_decoder.num_points", p.num_points);
    bind_key(r, "pixel_decoder.ffn_dim", p.ffn_dim);

    auto& d = c.model.decoder;
    bind_key(r, "decoder.num_queries", d.num_queries);
    bind_key(r, "decoder.num_layers", d.num_layers);
    bind_key(r, "decoder.hidden_dim", d.hidden_dim);
    bind_key(r, "decoder.num_heads", d.num_heads);
    bind_key(r, "decoder.ffn_dim", d.ffn_dim);
    bind_key(r, "decoder.num_classes", d.num_classes);
    bind_key(r, "decoder.mask_threshold", d.mask_threshold);

    auto& l = c.loss;
    bind_key(r, "loss.lambda_cls", l.lambda_cls);
    bind_key(r, "loss.lambda_ce_seg", l.lambda_ce_seg);
    bind_key(r, "loss.lambda_dice", l.lambda_dice);
    bind_key(r, "loss.num_points", l.num_points);
    bind_key(r, "loss.dice_eps", l.dice_eps);
    bind_key(r, "loss.no_object_weight", l.no_object_weight);
    bind_key(r, "loss.deep_supervision", l.deep_supervision);

    bind_enum(r, "weights.source", c.weights.source,
              {{WeightSource::Random, "random"}, {WeightSource::Sam, "sam"}, {WeightSource::Vit, "vit"}});
    bind_key(r, "weights.path", c.weights.path);
    bind_key(r, "weights.name_map", c.weights.name_map);

    bind_enum(r, "peft.method", c.peft.method,
              {{PeftMethod::None, "none"},
               {PeftMethod::Mona, "mona"},
               {PeftMethod::Adapter, "adapter"},
               {PeftMethod::Lora, "lora"},
               {PeftMethod::Full, "full"}});
    bind_key(r, "peft.policy_file", c.peft.policy_file);
    bind_key(r, "peft.train_encoder_neck", c.peft.train_encoder_neck);
    bind_key(r, "lora.rank", c.peft.lora.rank);
    bind_key(r, "lora.alpha", c.peft.lora.alpha);
    bind_key(r, "lora.target_patterns", c.peft.lora.target_patterns);

    bind_key(r, "data.train_annotations", c.data.train_annotations);
    bind_key(r, "data.train_images", c.data.train_images);
    bind_key(r, "data.val_annotations", c.data.val_annotations);
    bind_key(r, "data.val_images", c.data.val_images);
    bind_key(r, "data.normalization", c.data.normalization);
    bind_key(r, "data.mean", c.data.mean);
    bind_key(r, "data.std", c.data.std);
    bind_key(r, "data.workers", c.data.workers);

    bind_key(r, "optim.lr", c.optim.lr);
    bind_key(r, "optim.weight_decay", c.optim.weight_decay);
    bind_key(r, "optim.beta1", c.optim.beta1);
    bind_key(r, "optim.beta2", c.optim.beta2);
    bind_key(r, "optim.clip_grad_norm", c.optim.clip_grad_norm);

    bind_key(r, "schedule.warmup_epochs", c.schedule.warmup_epochs);
    bind_key(r, "schedule.warmup_steps", c.schedule.warmup_steps);
    bind_key(r, "schedule.min_lr", c.schedule.min_lr);

    bind_key(r, "train.batch_size", c.train.batch_size);
    bind_key(r, "train.accumulation", c.train.accumulation);
    bind_key(r, "train.epochs", c.train.epochs);
    bind_key(r, "train.max_steps", c.train.max_steps);
    bind_key(r, "train.seed", c.train.seed);
    bind_key(r, "train.eval_interval", c.train.eval_interval);
    bind_key(r, "train.log_interval", c.train.log_interval);
    bind_key(r, "train.threads", c.train.threads);
    bind_key(r, "train.deterministic", c.train.deterministic);
    bind_key(r, "train.output_dir", c.train.output_dir);
    return r;
}

void set_key(RunConfig& cfg, Registry& reg, const std::string& key, const std::string& value) {
    auto it = reg.find(key);
    if (it == reg.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    it->second.set(value);
}

}  // namespace

std::string to_string(WeightSource s) {
    switch (s) {
        case WeightSource::Random: return "random";
        case WeightSource::Sam: return "sam";
        case WeightSource::Vit: return "vit";
    }
    return "random";
}

void RunConfig::sync() {
    auto& e = model.encoder;
    switch (peft.method) {
        case PeftMethod::Mona: e.adapter = BlockAdapter::Mona; break;
        case PeftMethod::Adapter: e.adapter = BlockAdapter::Bottleneck; break;
        default: e.adapter = BlockAdapter::None; break;
    }
    e.mona.input_channels = e.embed_dim;
    auto& a = model.aggregator;
    a.in_channels = e.embed_dim;
    a.out_channels = e.neck_out_channels;
    a.num_taps = static_cast<int64_t>(e.tap_indices.size());
    model.pixel.in_channels = e.neck_out_channels;
    model.decoder.in_channels = model.pixel.conv_dim;
    model.decoder.mask_dim = model.pixel.mask_dim;
}

void RunConfig::validate(bool require_data) const {
    model.validate();
    loss.validate();
    if (!(optim.lr > 0)) {
        throw ConfigError("optim.lr must be positive");
    }
    if (train.epochs < 1) {
        throw ConfigError("train.epochs must be >= 1");
    }
    if (train.batch_size < 1 || train.accumulation < 1) {
        throw ConfigError("train.batch_size and train.accumulation must be >= 1");
    }
    if (schedule.min_lr < 0 || schedule.min_lr > optim.lr) {
        throw ConfigError("schedule.min_lr must lie in [0, optim.lr]");
    }
    if (data.normalization != "sam" && data.normalization != "dataset" && data.normalization != "custom") {
        throw ConfigError("data.normalization must be sam, dataset or custom");
    }
    if (weights.source != WeightSource::Random) {
        if (weights.path.empty() || !std::filesystem::exists(resolve(weights.path))) {
            throw ConfigError("weights.path '" + weights.path + "' does not exist");
        }
    }
    if (!peft.policy_file.empty() && !std::filesystem::exists(resolve(peft.policy_file))) {
        throw ConfigError("peft.policy_file '" + peft.policy_file + "' does not exist");
    }
    if (require_data) {
        for (const auto* p : {&data.train_annotations, &data.train_images, &data.val_annotations, &data.val_images}) {
            if (p->empty() || !std::filesystem::exists(resolve(*p))) {
                throw ConfigError("data path '" + *p + "' does not exist");
            }
        }
    }
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) {
        return p;
    }
    return base_dir / p;
}

std::filesystem::path RunConfig::output_dir() const {
    if (!train.output_dir.empty()) {
        return resolve(train.output_dir);
    }
    if (const char* cache = std::getenv("MCSAM_CACHE_DIR")) {
        return std::filesystem::path(cache) / "runs" / name;
    }
    return std::filesystem::path("runs") / name;
}

PreprocessConfig RunConfig::preprocess() const {
    PreprocessConfig p;
    p.image_size = model.encoder.image_size;
    p.mean = data.mean;
    p.std = data.std;
    return p;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    auto reg = registry(cfg);
    std::istringstream lines(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        if (!section.empty()) {
            key = section + "." + key;
        }
        set_key(cfg, reg, key, trim(line.substr(eq + 1)));
    }
    cfg.sync();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    auto reg = registry(cfg);
    set_key(cfg, reg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    cfg.sync();
}

std::string serialize_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    auto reg = registry(copy);
    std::string out;
    for (const auto& [key, field] : reg) {
        out += key + " = " + field.get() + "\n";
    }
    return out;
}

std::vector<std::string> config_keys() {
    RunConfig cfg;
    std::vector<std::string> keys;
    for (const auto& [key, field] : registry(cfg)) {
        keys.push_back(key);
    }
    return keys;
}

}  // namespace mcsam
