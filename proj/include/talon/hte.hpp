#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "talon/autodiff.hpp"
#include "talon/complexity.hpp"
#include "talon/params.hpp"
#include "talon/rng.hpp"

namespace talon::hte {

inline constexpr std::size_t NUM_EXPERTS = 3;  // Linear / CNN / LSTM
inline const char* const EXPERT_NAMES[NUM_EXPERTS] = {"Linear", "CNN", "LSTM"};

struct HteConfig {
    std::size_t patch_len = 96;  // S
    std::size_t d_model = 64;
    std::size_t top_k = 2;
    std::vector<std::uint8_t> expert_mask = {1, 1, 1};  // allowed experts
    bool disable_routing = false;  // uniform gates over allowed experts
    bool disable_hte = false;  // single shared linear embedder instead

    std::size_t allowed_count() const {
        std::size_t n = 0;
        for (auto m : expert_mask) n += m != 0;
        return n;
    }
};

/// Trainable router + expert parameters (or the shared embedder when the
/// encoder is ablated away).
template <typename T>
void init_params(ParamStore<T>& store, const HteConfig& cfg, std::uint64_t seed);

/// How routing noise is produced for one patch.
struct NoiseSpec {
    enum class Mode { Draw, Fixed, Zero } mode = Mode::Zero;
    Rng* rng = nullptr;  // Draw
    std::vector<double> values;  // Fixed
};

/// Everything the gating step produced for one patch; gate/logit handles stay
/// valid for loss terms built on the same graph.
template <typename T>
struct RoutingRecord {
    ad::Var<T> gate;  // 1 x K, sparse simplex
    ad::Var<T> noisy_logits;  // h, 1 x K
    ad::Var<T> clean_logits;  // z-tilde * mix, noise-free path
    ad::Var<T> noise_scale;  // softplus(c-tilde), 1 x K
    std::vector<double> noise;  // drawn epsilon
    bool uniform = false;  // routing disabled
};

/// Noisy top-k gating (gate plus the record needed for the load loss).
template <typename T>
RoutingRecord<T> route(ad::Graph<T>& g, const Binding<T>& params, const HteConfig& cfg,
                       const std::vector<double>& patch, const ComplexityVector& c,
                       const NoiseSpec& noise);

/// Gate construction from given logits; exposed for direct testing.
template <typename T>
ad::Var<T> gate_from_logits(ad::Var<T> logits, std::size_t k,
                            const std::vector<std::uint8_t>& allowed);

template <typename T>
ad::Var<T> expert_linear(ad::Graph<T>& g, const Binding<T>& params,
                         const std::vector<double>& patch);
template <typename T>
ad::Var<T> expert_cnn(ad::Graph<T>& g, const Binding<T>& params,
                      const std::vector<double>& patch);
template <typename T>
ad::Var<T> expert_lstm(ad::Graph<T>& g, const Binding<T>& params, const HteConfig& cfg,
                       const std::vector<double>& patch);

/// Weighted aggregation; experts with zero gate weight are never evaluated.
template <typename T>
ad::Var<T> encode_patch(ad::Graph<T>& g, const Binding<T>& params, const HteConfig& cfg,
                        const std::vector<double>& patch, const ComplexityVector& c,
                        const NoiseSpec& noise, RoutingRecord<T>* record_out);

/// Importance + load balancing regularizer over a batch of routing records
/// (coefficient-of-variation squared for each term).
template <typename T>
ad::Var<T> moe_loss(ad::Graph<T>& g, const std::vector<RoutingRecord<T>>& records,
                    const HteConfig& cfg);

}  // namespace talon::hte
