#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "talon/adam.hpp"
#include "talon/backbone.hpp"
#include "talon/config.hpp"
#include "talon/hte.hpp"
#include "talon/params.hpp"
#include "talon/sam.hpp"
#include "talon/series.hpp"

namespace talon {

/// One training/eval sample: a window plus the prompt context of its patches.
struct TrainSample {
    Window window;
    std::vector<PatchMeta> metas;
};

std::vector<TrainSample> prepare_samples(const MultivariateSeries& series, const RunConfig& cfg,
                                         std::size_t horizon, std::size_t stride);

/// Chronological split from explicit counts when configured; fractional
/// shares otherwise (counts win when both are present).
std::array<MultivariateSeries, 3> split_by_config(const MultivariateSeries& series,
                                                  const RunConfig& cfg);

/// Loads the configured data source (CSV path or synthetic spec). The regime
/// labels are non-empty only for synthetic data.
std::pair<MultivariateSeries, std::vector<std::string>> load_series_by_config(
    const RunConfig& cfg);

template <typename T>
struct Model {
    RunConfig cfg;
    backbone::BackboneConfig bb_cfg;
    hte::HteConfig hte_cfg;
    ParamStore<T> params;
    std::unique_ptr<sam::PromptEncoder<T>> prompts;
    std::uint64_t step = 0;
    std::map<std::string, std::uint64_t> rng_counters;

    std::size_t patches_per_window() const { return cfg.lookback / cfg.patch_len; }
    std::vector<std::string> active_expert_names() const;
};

/// Builds every parameter group (frozen backbone + trainable encoder/head)
/// deterministically from (config, seed).
template <typename T>
Model<T> init_model(const RunConfig& cfg);

template <typename T>
struct ForwardResult {
    ad::Var<T> total, mse, moe, align;
    std::vector<hte::RoutingRecord<T>> records;
    ad::Var<T> temporal;  // N x d segment embeddings
    Tensor<T> prompt_mat;  // N x d prompt embeddings (empty when SAM is off)
};

/// Teacher-forced forward pass over one window: position i predicts patch
/// i+1; losses are composed on the caller's graph.
template <typename T>
ForwardResult<T> forward_train(ad::Graph<T>& g, const Binding<T>& bound, Model<T>& model,
                               const TrainSample& sample, const hte::NoiseSpec& noise);

/// Plain composite loss with finiteness checks.
double total_loss_value(double mse, double moe, double align, double alpha, double beta);

/// Prompt-free rolling decode: re-standardize the raw context each step,
/// predict the next patch from the final position, feed it back. Output is
/// de-standardized, trimmed to the requested horizon.
template <typename T>
std::vector<double> autoregressive_forecast(Model<T>& model, const std::vector<double>& lookback,
                                            std::size_t horizon,
                                            std::optional<std::uint64_t> noise_seed = {});

struct CurveRow {
    std::uint64_t step = 0;
    double total = 0, mse = 0, moe = 0, align = 0;
    double val_mse = -1;  // -1: not evaluated at this step
};

struct TrainResult {
    std::vector<CurveRow> curve;
    double best_val = -1;
    std::uint64_t best_step = 0;
};

/// Adam over the trainable groups; per-epoch validation MSE; the best-val
/// parameters are retained in the model. Aborts on non-finite loss.
TrainResult train(Model<float>& model, const std::vector<TrainSample>& train_samples,
                  const std::vector<TrainSample>& val_samples);

/// Teacher-forced MSE in eval mode (no noise); shared by validation and the
/// diagnostics paths.
template <typename T>
double teacher_forced_mse(Model<T>& model, const TrainSample& sample);

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path);

// ---- checkpointing ----
// Layout: "TLNC" magic, u32 version, u64 header length, UTF-8 JSON header
// {config, step, rng, params: names/dtypes/shapes/trainable/offsets},
// then little-endian f32 payloads in header order.

inline constexpr std::uint32_t CHECKPOINT_VERSION = 1;

void save_checkpoint(const Model<float>& model, const std::string& path);
Model<float> load_checkpoint(const std::string& path);
/// Loads payloads into an existing model; shapes must match exactly.
void load_checkpoint_params(Model<float>& model, const std::string& path);

/// SHA-256 over the serialized f32 bytes of the frozen backbone groups.
template <typename T>
std::string backbone_hash(const Model<T>& model);

}  // namespace talon
