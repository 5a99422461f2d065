#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace talon {

/// Config parse / validation failures map to the usage exit code (2) rather
/// than runtime failures (1).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One reproducible run, parsed from flat key=value text with dotted
/// namespaces. The raw map is kept verbatim for provenance.
struct RunConfig {
    // data
    std::string data_csv;  // or:
    std::string data_synth;  // synth spec path
    std::string date_column = "date";
    std::vector<std::string> value_columns;  // empty: all
    // split (counts win over fractions when both present)
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    double frac_train = 0.7, frac_val = 0.1, frac_test = 0.2;
    // windows
    std::size_t lookback = 672;  // L
    std::size_t horizon = 96;  // H
    std::size_t patch_len = 96;  // S
    std::size_t stride = 1;
    std::size_t period = 24;
    // model
    std::size_t d_model = 64;
    std::size_t backbone_layers = 2;
    std::size_t backbone_heads = 4;
    std::size_t max_positions = 256;
    std::size_t top_k = 2;
    std::vector<std::string> experts = {"linear", "cnn", "lstm"};
    // loss
    double alpha = 0.06;
    double beta = 0.06;
    double tau = 0.07;
    // optimizer
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch = 32;
    std::size_t max_steps = 0;  // 0: bounded by epochs only
    // run
    std::uint64_t seed = 42;
    int threads = 1;
    bool eval_deterministic = true;
    std::size_t eval_stride = 1;
    std::string out_dir = "runs/default";
    std::string dump_prompts;  // optional prompt audit file
    // ablation switches
    bool disable_hte = false;
    bool disable_routing = false;
    bool disable_sam = false;
    bool static_prompt = false;
    bool disable_llm = false;

    std::map<std::string, std::string> raw;  // exact parsed key/values

    /// Canonical flat key=value text covering every effective field.
    std::string canonical_text() const;
    /// Expert mask over {linear, cnn, lstm}.
    std::vector<std::uint8_t> expert_mask() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

/// Applies one `key=value` override on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

/// Ablation switch vocabulary (`w/o-sam`, `w/o-hte`, ...); throws UsageError
/// naming the switch when unknown.
void apply_switch(RunConfig& cfg, const std::string& switch_name);
std::vector<std::string> known_switches();

/// Compile-time build identifier (git describe when available).
const char* build_id();

}  // namespace talon
