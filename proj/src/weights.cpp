#include "mcsam/weights.hpp"

#include "mcsam/errors.hpp"

#include <fnmatch.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mcsam {

namespace F = torch::nn::functional;

namespace {

bool glob_match(const std::string& pattern, const std::string& name) {
    return fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

bool is_peft_parameter(const std::string& name) {
    return name.find(".mona") != std::string::npos || name.find(".adapter") != std::string::npos ||
           name.find("lora_") != std::string::npos;
}

TensorMap dict_to_map(const c10::impl::GenericDict& dict) {
    TensorMap out;
    for (const auto& entry : dict) {
        if (!entry.key().isString()) {
            continue;
        }
        const auto& key = entry.key().toStringRef();
        if (entry.value().isTensor()) {
            out.emplace(key, entry.value().toTensor());
        }
    }
    return out;
}

std::string regex_escape(const std::string& s) {
    static const std::regex special{R"([.^$|()\[\]{}*+?\\])"};
    return std::regex_replace(s, special, R"(\$&)");
}

torch::Tensor resize_pos_embed(const torch::Tensor& src, int64_t grid, int64_t dim) {
    torch::Tensor table = src;
    if (table.dim() == 3) {
        const auto n = table.size(1);
        const auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
        if (side * side != n) {
            const auto side_wo_cls = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n - 1))));
            if (side_wo_cls * side_wo_cls != n - 1) {
                throw DataError("positional table with " + std::to_string(n) + " tokens is not a square grid");
            }
            table = table.index({torch::indexing::Slice(), torch::indexing::Slice(1)});
        }
        const auto g = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(table.size(1)))));
        table = table.reshape({1, g, g, table.size(2)});
    }
    if (table.dim() != 4 || table.size(3) != dim) {
        throw DataError("positional table shape " + c10::str(src.sizes()) + " incompatible with width " +
                        std::to_string(dim));
    }
    if (table.size(1) != grid || table.size(2) != grid) {
        table = F::interpolate(table.permute({0, 3, 1, 2}).to(torch::kFloat),
                               F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{grid, grid})
                                   .mode(torch::kBicubic)
                                   .align_corners(false))
                    .permute({0, 2, 3, 1});
    }
    return table;
}

torch::Tensor resize_rel_pos(const torch::Tensor& src, int64_t length) {
    if (src.size(0) == length) {
        return src;
    }
    auto r = F::interpolate(src.to(torch::kFloat).t().unsqueeze(0),
                            F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{length})
                                .mode(torch::kLinear)
                                .align_corners(false));
    return r.squeeze(0).t();
}

}  // namespace

TensorMap read_state_dict(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    c10::IValue root;
    try {
        root = torch::pickle_load(bytes);
    } catch (const c10::Error& e) {
        throw DataError("cannot decode checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    if (!root.isGenericDict()) {
        throw DataError("checkpoint " + path.string() + " does not hold a dictionary");
    }
    auto dict = root.toGenericDict();
    for (const char* wrapper : {"model", "state_dict"}) {
        if (dict.contains(wrapper) && dict.at(wrapper).isGenericDict()) {
            return dict_to_map(dict.at(wrapper).toGenericDict());
        }
    }
    return dict_to_map(dict);
}

NameMap NameMap::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open name map " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

NameMap NameMap::parse(const std::string& text) {
    NameMap map;
    std::istringstream lines(text);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string first;
        if (!(fields >> first) || first[0] == '#') {
            continue;
        }
        std::string second;
        if (!(fields >> second)) {
            throw DataError("name map line " + std::to_string(line_no) + ": expected two fields");
        }
        if (first == "@strip") {
            map.strip_prefixes_.push_back(second);
        } else if (first == "@ignore") {
            map.ignore_globs_.push_back(second);
        } else {
            Rule rule;
            std::string pattern = regex_escape(first);
            const std::string index_token = regex_escape("{i}");
            rule.indexed = pattern.find(index_token) != std::string::npos;
            if (rule.indexed) {
                pattern.replace(pattern.find(index_token), index_token.size(), "([0-9]+)");
            }
            rule.pattern = std::regex(pattern);
            rule.target = second;
            map.rules_.push_back(std::move(rule));
        }
    }
    return map;
}

std::string NameMap::strip(const std::string& source) const {
    for (const auto& prefix : strip_prefixes_) {
        if (source.rfind(prefix, 0) == 0) {
            return source.substr(prefix.size());
        }
    }
    return source;
}

bool NameMap::is_ignored(const std::string& source) const {
    const auto name = strip(source);
    for (const auto& g : ignore_globs_) {
        if (glob_match(g, source) || glob_match(g, name)) {
            return true;
        }
    }
    return false;
}

std::optional<std::string> NameMap::translate(const std::string& source) const {
    if (is_ignored(source)) {
        return std::nullopt;
    }
    const auto name = strip(source);
    for (const auto& rule : rules_) {
        std::smatch m;
        if (std::regex_match(name, m, rule.pattern)) {
            std::string target = rule.target;
            if (rule.indexed) {
                target.replace(target.find("{i}"), 3, m[1].str());
            }
            return target;
        }
    }
    return std::nullopt;
}

ImportReport import_encoder_weights(SamMonaEncoder& encoder, const TensorMap& source, const NameMap& names) {
    ImportReport report;
    auto params = encoder->named_parameters(/*recurse=*/true);
    const auto& cfg = encoder->config();

    torch::NoGradGuard no_grad;
    for (const auto& [src_name, tensor] : source) {
        if (names.is_ignored(src_name)) {
            continue;
        }
        auto target = names.translate(src_name);
        if (!target) {
            report.unmapped.push_back(src_name);
            continue;
        }
        auto* slot = params.find(*target);
        if (slot == nullptr) {
            throw DataError("name map sends '" + src_name + "' to '" + *target +
                            "', which the encoder does not have (check depth/layout settings)");
        }
        torch::Tensor value = tensor;
        if (*target == "pos_embed") {
            value = resize_pos_embed(tensor, cfg.grid_size(), cfg.embed_dim);
        } else if (target->find("rel_pos_") != std::string::npos && tensor.dim() == 2 &&
                   tensor.size(1) == slot->size(1)) {
            value = resize_rel_pos(tensor, slot->size(0));
        }
        if (value.sizes() != slot->sizes()) {
            throw DataError("shape mismatch for '" + src_name + "': checkpoint " + c10::str(tensor.sizes()) +
                            ", encoder " + c10::str(slot->sizes()));
        }
        slot->copy_(value.to(slot->dtype()));
        report.loaded.push_back(*target);
    }

    for (const auto& item : params) {
        if (is_peft_parameter(item.key())) {
            continue;
        }
        if (std::find(report.loaded.begin(), report.loaded.end(), item.key()) == report.loaded.end()) {
            report.missing.push_back(item.key());
        }
    }
    return report;
}

}  // namespace mcsam
