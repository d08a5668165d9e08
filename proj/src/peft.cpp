#include "mcsam/peft.hpp"

#include "mcsam/errors.hpp"
#include "mcsam/layers.hpp"

#include <fmt/format.h>
#include <fnmatch.h>

#include <fstream>
#include <sstream>

namespace mcsam {

namespace {

bool glob_match(const std::string& pattern, const std::string& name) {
    return fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

}  // namespace

FreezePolicy FreezePolicy::parse(const std::string& text) {
    std::vector<PolicyRule> rules;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string sign;
        if (!(fields >> sign) || sign[0] == '#') {
            continue;
        }
        std::string glob;
        if (sign.size() > 1) {
            glob = sign.substr(1);
            sign = sign.substr(0, 1);
        } else {
            fields >> glob;
        }
        if ((sign != "+" && sign != "-") || glob.empty()) {
            throw ConfigError("policy line " + std::to_string(line_no) + ": expected '+ <glob>' or '- <glob>'");
        }
        rules.push_back({sign == "+", glob});
    }
    return FreezePolicy(std::move(rules));
}

FreezePolicy FreezePolicy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open policy file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<bool> FreezePolicy::decide(const std::string& name) const {
    bool frozen = false;
    for (const auto& rule : rules_) {
        if (!glob_match(rule.glob, name)) {
            continue;
        }
        if (rule.trainable) {
            return true;
        }
        frozen = true;
    }
    if (frozen) {
        return false;
    }
    return std::nullopt;
}

std::vector<std::string> FreezePolicy::trainable_patterns() const {
    std::vector<std::string> out;
    for (const auto& r : rules_) {
        if (r.trainable) {
            out.push_back(r.glob);
        }
    }
    return out;
}

std::vector<std::string> FreezePolicy::frozen_patterns() const {
    std::vector<std::string> out;
    for (const auto& r : rules_) {
        if (!r.trainable) {
            out.push_back(r.glob);
        }
    }
    return out;
}

std::string FreezePolicy::to_text() const {
    std::string out;
    for (const auto& r : rules_) {
        out += (r.trainable ? "+ " : "- ") + r.glob + "\n";
    }
    return out;
}

PeftMethod parse_peft_method(const std::string& name) {
    if (name == "none" || name == "frozen") {
        return PeftMethod::None;
    }
    if (name == "mona") {
        return PeftMethod::Mona;
    }
    if (name == "adapter") {
        return PeftMethod::Adapter;
    }
    if (name == "lora") {
        return PeftMethod::Lora;
    }
    if (name == "full") {
        return PeftMethod::Full;
    }
    throw ConfigError("unknown PEFT method '" + name + "' (expected none, mona, adapter, lora, full)");
}

std::string to_string(PeftMethod method) {
    switch (method) {
        case PeftMethod::None: return "none";
        case PeftMethod::Mona: return "mona";
        case PeftMethod::Adapter: return "adapter";
        case PeftMethod::Lora: return "lora";
        case PeftMethod::Full: return "full";
    }
    return "none";
}

FreezePolicy builtin_policy(PeftMethod method, bool train_encoder_neck) {
    std::vector<PolicyRule> rules;
    if (method == PeftMethod::Full) {
        rules.push_back({true, "*"});
        return FreezePolicy(std::move(rules));
    }
    rules.push_back({false, "encoder.*"});
    switch (method) {
        case PeftMethod::Mona: rules.push_back({true, "encoder.*.mona*"}); break;
        case PeftMethod::Adapter: rules.push_back({true, "encoder.*.adapter*"}); break;
        case PeftMethod::Lora: rules.push_back({true, "encoder.*.lora_*"}); break;
        default: break;
    }
    if (train_encoder_neck) {
        rules.push_back({true, "encoder.neck_*"});
    }
    rules.push_back({true, "neck.*"});
    rules.push_back({true, "decoder.*"});
    return FreezePolicy(std::move(rules));
}

std::string parameter_group(const std::string& name) {
    size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        pos = name.find('.', pos);
        if (pos == std::string::npos) {
            break;
        }
        if (i < 2) {
            ++pos;
        }
    }
    if (pos == std::string::npos) {
        // Fewer than four components: drop the leaf tensor name if there is one.
        const auto last = name.rfind('.');
        return last == std::string::npos ? name : name.substr(0, last);
    }
    return name.substr(0, pos);
}

namespace {

void account(PartitionReport& report, const std::string& name, const torch::Tensor& p) {
    const auto n = p.numel();
    const auto bytes = n * static_cast<int64_t>(p.element_size());
    auto& g = report.groups[parameter_group(name)];
    report.total += n;
    report.total_bytes += bytes;
    if (p.requires_grad()) {
        g.trainable += n;
        g.trainable_bytes += bytes;
        report.trainable += n;
        report.trainable_bytes += bytes;
        report.trainable_names.push_back(name);
    } else {
        g.frozen += n;
        g.frozen_bytes += bytes;
    }
}

}  // namespace

PartitionReport apply_policy(torch::nn::Module& model, const FreezePolicy& policy) {
    auto params = model.named_parameters(/*recurse=*/true);
    std::vector<std::string> unmatched;
    for (const auto& item : params) {
        if (!policy.decide(item.key())) {
            unmatched.push_back(item.key());
        }
    }
    if (!unmatched.empty()) {
        std::string msg = "freeze policy does not cover " + std::to_string(unmatched.size()) + " parameter(s): ";
        for (size_t i = 0; i < unmatched.size() && i < 5; ++i) {
            msg += (i ? ", " : "") + unmatched[i];
        }
        throw ConfigError(msg);
    }
    for (auto& item : params) {
        item.value().set_requires_grad(*policy.decide(item.key()));
    }
    return partition_report(model);
}

PartitionReport partition_report(const torch::nn::Module& model) {
    PartitionReport report;
    for (const auto& item : model.named_parameters(/*recurse=*/true)) {
        account(report, item.key(), item.value());
    }
    return report;
}

double trainable_fraction(const torch::nn::Module& model) {
    return partition_report(model).fraction();
}

std::string PartitionReport::to_text() const {
    std::string out = fmt::format("{:<40} {:>12} {:>12}\n", "group", "trainable", "frozen");
    for (const auto& [name, g] : groups) {
        out += fmt::format("{:<40} {:>12} {:>12}\n", name, g.trainable, g.frozen);
    }
    out += fmt::format("total parameters      {}\n", total);
    out += fmt::format("trainable parameters  {} ({:.4f}%)\n", trainable, 100.0 * fraction());
    out += fmt::format("trainable bytes       {} of {}\n", trainable_bytes, total_bytes);
    return out;
}

int64_t apply_lora(torch::nn::Module& model, const LoraConfig& config) {
    int64_t adapted = 0;
    for (const auto& item : model.named_modules("", /*include_self=*/false)) {
        bool match = false;
        for (const auto& g : config.target_patterns) {
            match = match || glob_match(g, item.key());
        }
        if (!match) {
            continue;
        }
        if (auto* lin = item.value()->as<LoraLinearImpl>()) {
            lin->enable_lora(config.rank, config.alpha);
            ++adapted;
        } else if (auto* conv = item.value()->as<LoraConv2dImpl>()) {
            conv->enable_lora(config.rank, config.alpha);
            ++adapted;
        }
    }
    if (adapted == 0) {
        throw ConfigError("LoRA target patterns matched no linear/conv layer");
    }
    return adapted;
}

}  // namespace mcsam
