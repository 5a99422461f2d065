#pragma once

#include <map>
#include <string>
#include <vector>

#include "talon/forecaster.hpp"
#include "talon/series.hpp"

namespace talon::bench {

struct MetricReport {
    std::string dataset;
    std::size_t horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    std::size_t n_predictions = 0;
    std::string protocol;  // one-for-all | one-for-one | zero-shot
    std::string tag;  // e.g. "source->target" for transfer runs
    std::string variant = "baseline";
};

struct ImpReport {
    std::map<std::string, double> per_dataset;  // relative reduction
    double average = 0.0;
};

double mse(const std::vector<double>& y, const std::vector<double>& y_hat);
double mae(const std::vector<double>& y, const std::vector<double>& y_hat);

/// Average per-dataset relative reduction of `ours` vs `baseline`
/// ((base - ours) / base); keys must match and baselines must be positive.
ImpReport imp(const std::map<std::string, double>& baseline,
              const std::map<std::string, double>& ours);

/// One-for-all protocol: every valid test window rolls once to the largest
/// horizon; smaller horizons are sliced from the same roll. Metrics are
/// computed in original units.
std::vector<MetricReport> rolling_eval(Model<float>& model, const MultivariateSeries& test,
                                       const std::vector<std::size_t>& horizons);

/// One-for-one bookkeeping: each horizon is evaluated over its own window
/// set (window count differs per horizon); the trained objective is shared.
std::vector<MetricReport> one_for_one_eval(Model<float>& model, const MultivariateSeries& test,
                                           const std::vector<std::size_t>& horizons);

/// Identical to rolling_eval with no parameter updates; reports are tagged
/// source->target.
std::vector<MetricReport> zero_shot_eval(Model<float>& model, const MultivariateSeries& target,
                                         const std::vector<std::size_t>& horizons);

struct ExpertDistribution {
    std::vector<double> histogram;  // fraction of patches per expert (argmax)
    std::map<std::string, std::vector<double>> per_regime;
    std::size_t n_patches = 0;
};

/// Argmax-gate histogram over non-overlapping windows of the series
/// (eval mode, zero noise; ties break to the lowest expert index).
/// `regime_labels` (optional, one per time step) adds per-regime histograms.
ExpertDistribution expert_distribution(Model<float>& model, const MultivariateSeries& series,
                                       const std::vector<std::string>& regime_labels = {});

/// JSON-lines dump of per-patch routing records (gates + argmax).
void write_routing_records(Model<float>& model, const MultivariateSeries& series,
                           const std::string& path);

struct EmbeddingDistance {
    double mean_l2 = 0.0;
    std::size_t n_tokens = 0;
    double mean_diag_cosine = 0.0;
};

/// Mean ||e_i - p_i||_2 over sampled tokens (raw embeddings); optionally
/// dumps one CSV row per token with both vectors for external plotting.
EmbeddingDistance embedding_distance(Model<float>& model,
                                     const std::vector<TrainSample>& samples,
                                     const std::string& dump_csv = "",
                                     std::size_t max_windows = 16);

struct AblationRow {
    std::string variant;
    MetricReport report;
    double final_train_mse = 0.0;
};

/// Trains and evaluates each named switch variant (plus "baseline") under an
/// identical seed and data; one row per variant.
std::vector<AblationRow> ablate(const RunConfig& base, const MultivariateSeries& data,
                                const std::vector<std::string>& switches);

void write_reports_jsonl(const std::vector<MetricReport>& reports, const RunConfig& cfg,
                         const std::string& path);
void write_reports_csv(const std::vector<MetricReport>& reports, const std::string& path);

/// Evaluation worker cap for window sharding (>=1).
void set_threads(int n);
int threads();

}  // namespace talon::bench
