#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcsam {

struct PolicyRule {
    bool trainable = false;
    std::string glob;
};

// Freeze policy over hierarchical parameter names. Text form: one rule per
// line, "+ <glob>" trainable, "- <glob>" frozen, '#' comments. A parameter
// matched by any trainable rule is trainable; else frozen if matched by a
// frozen rule; a parameter matched by no rule is an error.
class FreezePolicy {
public:
    FreezePolicy() = default;
    explicit FreezePolicy(std::vector<PolicyRule> rules) : rules_(std::move(rules)) {}

    static FreezePolicy parse(const std::string& text);
    static FreezePolicy load(const std::filesystem::path& path);

    std::optional<bool> decide(const std::string& name) const;
    std::vector<std::string> trainable_patterns() const;
    std::vector<std::string> frozen_patterns() const;
    const std::vector<PolicyRule>& rules() const { return rules_; }
    std::string to_text() const;

private:
    std::vector<PolicyRule> rules_;
};

enum class PeftMethod { None, Mona, Adapter, Lora, Full };

PeftMethod parse_peft_method(const std::string& name);
std::string to_string(PeftMethod method);

// Built-in policies. train_encoder_neck additionally trains encoder.neck_*.
FreezePolicy builtin_policy(PeftMethod method, bool train_encoder_neck = false);

struct GroupStats {
    int64_t trainable = 0;
    int64_t frozen = 0;
    int64_t trainable_bytes = 0;
    int64_t frozen_bytes = 0;
};

struct PartitionReport {
    std::map<std::string, GroupStats> groups;  // keyed by the first three name components
    int64_t trainable = 0;
    int64_t total = 0;
    int64_t trainable_bytes = 0;
    int64_t total_bytes = 0;
    std::vector<std::string> trainable_names;

    double fraction() const { return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total); }
    std::string to_text() const;
};

std::string parameter_group(const std::string& name);

// Sets requires_grad on every parameter and reports the partition.
PartitionReport apply_policy(torch::nn::Module& model, const FreezePolicy& policy);

// Report of the current requires_grad state, without changing it.
PartitionReport partition_report(const torch::nn::Module& model);

double trainable_fraction(const torch::nn::Module& model);

struct LoraConfig {
    int64_t rank = 4;
    double alpha = 4.0;
    std::vector<std::string> target_patterns = {"encoder.*"};
};

// Enables the low-rank branch on every LoraLinear / LoraConv2d whose module
// name matches a target glob. Returns the number of layers adapted.
int64_t apply_lora(torch::nn::Module& model, const LoraConfig& config);

}  // namespace mcsam
