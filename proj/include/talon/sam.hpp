#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "talon/autodiff.hpp"
#include "talon/backbone.hpp"
#include "talon/complexity.hpp"
#include "talon/params.hpp"
#include "talon/series.hpp"

namespace talon::sam {

/// Inputs of one token-adaptive prompt; rendering is a pure function of the
/// fields, byte-exact across runs and platforms.
struct PromptSpec {
    std::vector<std::string> expert_names;  // active experts, in order
    PatchMeta meta;
    ComplexityVector complexity;
};

/// Fixed text used by the static-prompt ablation.
extern const char* const STATIC_PROMPT_TEXT;

/// Three sections in order: routing hint, patch time context, complexity
/// features (numeric features last, fixed 4 decimal places).
std::string build_prompt(const PromptSpec& spec);

/// Prompt embedding service over the frozen backbone: caches by prompt bytes
/// and counts every prompt build / backbone encode, so the prompt-free
/// inference contract is checkable.
template <typename T>
class PromptEncoder {
public:
    PromptEncoder(const ParamStore<T>* store, backbone::BackboneConfig cfg)
        : store_(store), cfg_(cfg) {}

    /// p_i = encode_prompt(tokenize(build_prompt(spec))); cached by bytes.
    Tensor<T> embed(const PromptSpec& spec, bool static_prompt = false);
    Tensor<T> embed_text(const std::string& prompt);

    std::uint64_t prompt_builds() const { return prompt_builds_.load(); }
    std::uint64_t backbone_encodes() const { return backbone_encodes_.load(); }
    std::size_t cache_size() const { return cache_.size(); }

    /// Rendered prompt audit log (one escaped prompt per line).
    void set_dump_path(const std::string& path) { dump_path_ = path; }

private:
    const ParamStore<T>* store_;
    backbone::BackboneConfig cfg_;
    std::unordered_map<std::string, Tensor<T>> cache_;
    mutable std::mutex mutex_;
    std::atomic<std::uint64_t> prompt_builds_{0};
    std::atomic<std::uint64_t> backbone_encodes_{0};
    std::string dump_path_;
};

/// Token-level InfoNCE over l2-normalized rows: pulls e_i toward its own
/// prompt embedding against the other prompts in the batch.
template <typename T>
ad::Var<T> align_loss(ad::Var<T> temporal, ad::Var<T> prompts, T tau);

/// Plain-value variant for diagnostics (no graph).
double align_loss_value(const std::vector<std::vector<double>>& temporal,
                        const std::vector<std::vector<double>>& prompts, double tau);

/// Mean diagonal cosine similarity between paired rows.
template <typename T>
double mean_diag_cosine(const Tensor<T>& e, const Tensor<T>& p);

}  // namespace talon::sam
