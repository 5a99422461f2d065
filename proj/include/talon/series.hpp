#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace talon {

/// Timestamped T x C matrix; the raw forecasting substrate.
struct MultivariateSeries {
    std::vector<std::string> timestamps;  // ISO-8601 strings or decimal indices
    std::vector<std::vector<double>> values;  // T rows of C channels
    std::vector<std::string> channel_names;
    std::string dataset_id;

    std::size_t length() const { return values.size(); }
    std::size_t channels() const { return values.empty() ? channel_names.size() : values[0].size(); }
    double at(std::size_t t, std::size_t c) const { return values[t][c]; }
};

struct CsvSchema {
    std::string date_column = "date";  // empty: synthesize integer indices
    std::vector<std::string> value_columns;  // empty: every non-date column
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

/// One univariate training/eval sample: lookback plus the following target.
struct Window {
    std::size_t channel = 0;
    std::size_t start = 0;  // time index of the first lookback sample
    std::vector<double> lookback;
    std::vector<double> target;
    NormStats stats;  // of the lookback only
};

/// Position and time context of one patch, the source of prompt text.
struct PatchMeta {
    std::size_t index = 0;  // 1-based
    std::size_t token_len = 0;  // S
    std::string patch_start, patch_end;
    std::string x_start, x_end;
    std::size_t seq_len = 0;  // L
};

MultivariateSeries load_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const MultivariateSeries& series, const std::string& path);

/// Contiguous chronological prefixes; throws when the counts exceed T.
std::array<MultivariateSeries, 3> chronological_split(const MultivariateSeries& series,
                                                      std::size_t n_train, std::size_t n_val,
                                                      std::size_t n_test);

/// Channel-independent sliding windows; count per channel is
/// floor((T-L-H)/stride)+1.
std::vector<Window> make_windows(const MultivariateSeries& series, std::size_t lookback,
                                 std::size_t horizon, std::size_t stride);

/// Splits a lookback into N = L/S non-overlapping patches. S must divide L.
std::vector<std::vector<double>> segment(const std::vector<double>& lookback, std::size_t patch_len);

/// Patch metadata for every patch of a window, using series timestamps.
std::vector<PatchMeta> patch_metadata(const MultivariateSeries& series, const Window& window,
                                      std::size_t patch_len);

/// Instance standardization from lookback statistics (population std,
/// clamped below at 1e-5).
NormStats lookback_stats(const std::vector<double>& lookback);
std::vector<double> standardize(const std::vector<double>& xs, const NormStats& stats);
std::vector<double> destandardize(const std::vector<double>& xs, const NormStats& stats);

// ---- synthetic corpus ----

struct RegimeSpec {
    std::string name;
    std::string kind;  // linear-trend | sinusoid | ar1 | white-noise
    std::size_t length = 0;  // 0: equal share of the remainder
    double slope = 1.0;  // linear-trend
    double amplitude = 1.0;  // sinusoid
    double period = 24.0;  // sinusoid
    double rho = 0.9;  // ar1
    double scale = 1.0;  // ar1 / white-noise innovation scale
    double noise = 0.0;  // additive observation noise (trend/sinusoid)
};

struct SynthSpec {
    std::size_t length = 0;
    std::size_t channels = 1;
    std::vector<RegimeSpec> regimes;
};

struct SynthResult {
    MultivariateSeries series;
    std::vector<std::string> regime_labels;  // one per time step
};

/// Deterministic given (spec, seed); regime labels come out alongside for
/// routing diagnostics.
SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed);

/// Labels sidecar: one "index,regime" row per time step.
void write_regime_labels(const SynthResult& result, const std::string& path);
std::vector<std::string> load_regime_labels(const std::string& path);

/// Flat key=value synth spec (length, channels, regimes=..., regime.<name>.*).
SynthSpec parse_synth_spec_text(const std::string& text);
SynthSpec parse_synth_spec_file(const std::string& path);

}  // namespace talon
