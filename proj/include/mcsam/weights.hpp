#pragma once

#include "mcsam/encoder.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace mcsam {

using TensorMap = std::map<std::string, torch::Tensor>;

// Reads a state dict written by Python's torch.save (zip archive). A nested
// {"model": {...}} or {"state_dict": {...}} wrapper is unwrapped.
TensorMap read_state_dict(const std::filesystem::path& path);

/// Parameter-name translation table.
///
/// Text format, one directive per line:
///   # comment
///   @strip <prefix>            drop this prefix from source names first
///   @ignore <glob>             source names to skip silently
///   <source> <target>          rename; `{i}` matches a block index
class NameMap {
public:
    static NameMap load(const std::filesystem::path& path);
    static NameMap parse(const std::string& text);

    // std::nullopt when the name is ignored or matches no rule.
    std::optional<std::string> translate(const std::string& source) const;
    bool is_ignored(const std::string& source) const;
    std::string strip(const std::string& source) const;

private:
    struct Rule {
        std::regex pattern;
        std::string target;
        bool indexed = false;
    };
    std::vector<std::string> strip_prefixes_;
    std::vector<std::string> ignore_globs_;
    std::vector<Rule> rules_;
};

struct ImportReport {
    std::vector<std::string> loaded;     // target names written
    std::vector<std::string> unmapped;   // source names without a rule
    std::vector<std::string> missing;    // base encoder parameters left at init
};

// Copies mapped tensors into the encoder. Positional tables are resized to
// the encoder's grid (a leading class token is dropped); relative position
// tables are linearly resized. Any other shape disagreement throws DataError.
// Adapter and LoRA parameters never count as missing.
ImportReport import_encoder_weights(SamMonaEncoder& encoder, const TensorMap& source, const NameMap& names);

}  // namespace mcsam
