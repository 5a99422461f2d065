// talon command line: training, evaluation, diagnostics, ablations, and
// synthetic data generation over the C API.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "talon/talon.h"

namespace {

void print_error_json(int code, const std::string& message) {
    std::string escaped;
    for (char c : message) {
        if (c == '"' || c == '\\') escaped += '\\';
        if (c == '\n') {
            escaped += "\\n";
            continue;
        }
        escaped += c;
    }
    std::fprintf(stderr, "{\"error\":{\"code\":%d,\"message\":\"%s\"}}\n", code,
                 escaped.c_str());
}

int finish(int rc) {
    if (rc != TALON_OK) print_error_json(rc, talon_last_error());
    return rc;
}

int resolve_threads(int flag_value) {
    if (const char* env = std::getenv("TALON_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return flag_value;
}

struct ConfigHandle {
    talon_config* ptr = nullptr;
    ~ConfigHandle() { talon_config_close(ptr); }
};
struct ModelHandle {
    talon_model* ptr = nullptr;
    ~ModelHandle() { talon_model_close(ptr); }
};
struct SeriesHandle {
    talon_series* ptr = nullptr;
    ~SeriesHandle() { talon_series_close(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TALON time-series forecaster"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker cap (1 = bitwise reproducible)");

    // train
    auto* train = app.add_subcommand("train", "train a model from a config file");
    std::string train_config;
    std::vector<std::string> train_sets;
    train->add_option("--config", train_config, "config file")->required();
    train->add_option("--set", train_sets, "key=value override (repeatable)");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_horizons = "96", eval_protocol = "one-for-all";
    std::string eval_out = "runs/eval", eval_date = "date";
    eval->add_option("--ckpt", eval_ckpt)->required();
    eval->add_option("--data", eval_data, "CSV to evaluate on")->required();
    eval->add_option("--horizons", eval_horizons, "comma-separated horizons");
    eval->add_option("--protocol", eval_protocol, "one-for-all | one-for-one");
    eval->add_option("--out", eval_out, "output directory");
    eval->add_option("--date-column", eval_date);

    // zeroshot
    auto* zs = app.add_subcommand("zeroshot", "zero-shot transfer evaluation");
    std::string zs_ckpt, zs_target, zs_horizons = "96", zs_out = "runs/zeroshot",
                zs_date = "date";
    zs->add_option("--ckpt", zs_ckpt)->required();
    zs->add_option("--target", zs_target, "target-domain CSV")->required();
    zs->add_option("--horizons", zs_horizons);
    zs->add_option("--out", zs_out);
    zs->add_option("--date-column", zs_date);

    // analyze
    auto* an = app.add_subcommand("analyze", "diagnostics: experts | embeddings");
    std::string an_what, an_ckpt, an_data, an_labels, an_out = "runs/analyze",
                an_date = "date";
    an->add_option("what", an_what, "experts | embeddings")->required();
    an->add_option("--ckpt", an_ckpt)->required();
    an->add_option("--data", an_data)->required();
    an->add_option("--labels", an_labels, "regime labels sidecar CSV");
    an->add_option("--out", an_out);
    an->add_option("--date-column", an_date);

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and report ablation variants");
    std::string ab_config, ab_switches;
    ab->add_option("--config", ab_config)->required();
    ab->add_option("--switches", ab_switches, "comma-separated switch names")->required();

    // synth
    auto* sy = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string sy_spec, sy_out;
    std::uint64_t sy_seed = 42;
    sy->add_option("--spec", sy_spec)->required();
    sy->add_option("--out", sy_out, "output CSV path")->required();
    sy->add_option("--seed", sy_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        print_error_json(TALON_ERR_USAGE, e.what());
        return TALON_ERR_USAGE;
    }

    talon_set_threads(resolve_threads(threads));

    if (*train) {
        ConfigHandle cfg;
        int rc = talon_config_open(train_config.c_str(), &cfg.ptr);
        if (rc != TALON_OK) return finish(rc);
        for (const auto& kv : train_sets) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) {
                print_error_json(TALON_ERR_USAGE, "--set expects key=value");
                return TALON_ERR_USAGE;
            }
            rc = talon_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
            if (rc != TALON_OK) return finish(rc);
        }
        return finish(talon_train(cfg.ptr));
    }
    if (*eval) {
        ModelHandle m;
        SeriesHandle s;
        int rc = talon_model_open(eval_ckpt.c_str(), &m.ptr);
        if (rc != TALON_OK) return finish(rc);
        rc = talon_series_open_csv(eval_data.c_str(), eval_date.c_str(), &s.ptr);
        if (rc != TALON_OK) return finish(rc);
        return finish(talon_eval(m.ptr, s.ptr, eval_horizons.c_str(), eval_protocol.c_str(),
                                 eval_out.c_str()));
    }
    if (*zs) {
        ModelHandle m;
        SeriesHandle s;
        int rc = talon_model_open(zs_ckpt.c_str(), &m.ptr);
        if (rc != TALON_OK) return finish(rc);
        rc = talon_series_open_csv(zs_target.c_str(), zs_date.c_str(), &s.ptr);
        if (rc != TALON_OK) return finish(rc);
        return finish(talon_zeroshot(m.ptr, s.ptr, zs_horizons.c_str(), zs_out.c_str()));
    }
    if (*an) {
        ModelHandle m;
        SeriesHandle s;
        int rc = talon_model_open(an_ckpt.c_str(), &m.ptr);
        if (rc != TALON_OK) return finish(rc);
        rc = talon_series_open_csv(an_data.c_str(), an_date.c_str(), &s.ptr);
        if (rc != TALON_OK) return finish(rc);
        return finish(talon_analyze(m.ptr, s.ptr, an_what.c_str(),
                                    an_labels.empty() ? nullptr : an_labels.c_str(),
                                    an_out.c_str()));
    }
    if (*ab) {
        ConfigHandle cfg;
        int rc = talon_config_open(ab_config.c_str(), &cfg.ptr);
        if (rc != TALON_OK) return finish(rc);
        return finish(talon_ablate(cfg.ptr, ab_switches.c_str()));
    }
    if (*sy) return finish(talon_synth(sy_spec.c_str(), sy_out.c_str(), sy_seed));

    print_error_json(TALON_ERR_USAGE, "no subcommand");
    return TALON_ERR_USAGE;
}
