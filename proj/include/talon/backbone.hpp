#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "talon/autodiff.hpp"
#include "talon/params.hpp"

namespace talon::backbone {

inline constexpr std::size_t VOCAB_SIZE = 259;  // 256 bytes + BOS/EOS/PAD
inline constexpr std::size_t BOS = 256;
inline constexpr std::size_t EOS = 257;
inline constexpr std::size_t PAD = 258;

struct BackboneConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t max_positions = 256;
    std::size_t vocab_size = VOCAB_SIZE;
};

/// Closed-form parameter count for a config; lets tests pin the init.
std::size_t param_count(const BackboneConfig& cfg);

/// Seeded pre-norm decoder stack, every group frozen (trainable = false).
/// Layout per layer: LN -> causal MHA -> LN -> 2-layer GELU FF, plus token
/// and position embeddings and a final LN.
template <typename T>
void init_frozen(ParamStore<T>& store, const BackboneConfig& cfg, std::uint64_t seed);

/// BOS + raw bytes + EOS; over-long input keeps the byte suffix so the run
/// never exceeds max_positions.
std::vector<std::size_t> tokenize(const std::string& text, std::size_t max_positions);

/// Transformer blocks over a prepared (N x d) input; both entry points share
/// these weights.
template <typename T>
ad::Var<T> run_blocks(ad::Var<T> x, const Binding<T>& params, const BackboneConfig& cfg);

/// Frozen forward over token ids; returns the final position's hidden state
/// as a 1 x d row.
template <typename T>
Tensor<T> encode_prompt(const std::vector<std::size_t>& tokens, const ParamStore<T>& store,
                        const BackboneConfig& cfg);

/// Causal reasoning over already-embedded segment rows (N x d): positions are
/// added, token embedding is bypassed. Output row i depends on inputs 0..i.
template <typename T>
ad::Var<T> forward_causal(ad::Var<T> embeddings, const Binding<T>& params,
                          const BackboneConfig& cfg);

}  // namespace talon::backbone
