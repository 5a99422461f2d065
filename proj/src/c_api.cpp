#include "talon/talon.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "talon/bench.hpp"
#include "talon/config.hpp"
#include "talon/forecaster.hpp"
#include "talon/series.hpp"

namespace fs = std::filesystem;

namespace {

thread_local std::string t_last_error;

int fail(int code, const std::string& msg) {
    t_last_error = msg;
    return code;
}

template <typename F>
int guarded(F&& f) {
    try {
        f();
        return TALON_OK;
    } catch (const talon::UsageError& e) {
        return fail(TALON_ERR_USAGE, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(TALON_ERR_USAGE, e.what());
    } catch (const std::exception& e) {
        return fail(TALON_ERR_RUNTIME, e.what());
    }
}

std::vector<std::size_t> parse_horizons(const char* csv) {
    if (!csv || !*csv) throw talon::UsageError("horizons list is empty");
    std::vector<std::size_t> out;
    std::string cur;
    for (const char* p = csv;; ++p) {
        if (*p == ',' || *p == '\0') {
            if (!cur.empty()) {
                long long v = std::stoll(cur);
                if (v < 1) throw talon::UsageError("horizon must be >= 1");
                out.push_back(std::size_t(v));
                cur.clear();
            }
            if (*p == '\0') break;
        } else {
            cur.push_back(*p);
        }
    }
    if (out.empty()) throw talon::UsageError("horizons list is empty");
    return out;
}

std::vector<std::string> parse_list(const char* csv) {
    std::vector<std::string> out;
    if (!csv) return out;
    std::string cur;
    for (const char* p = csv;; ++p) {
        if (*p == ',' || *p == '\0') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
            if (*p == '\0') break;
        } else {
            cur.push_back(*p);
        }
    }
    return out;
}

void ensure_dirs(const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "reports");
    fs::create_directories(fs::path(out_dir) / "ckpt");
}

std::string labels_path_for(const std::string& csv_path) {
    fs::path p(csv_path);
    p.replace_extension();
    return p.string() + ".labels.csv";
}

}  // namespace

struct talon_config {
    talon::RunConfig cfg;
};

struct talon_model {
    talon::Model<float> model;
};

struct talon_series {
    talon::MultivariateSeries series;
};

extern "C" {

const char* talon_build_id(void) { return talon::build_id(); }

const char* talon_last_error(void) { return t_last_error.c_str(); }

void talon_set_threads(int n) { talon::bench::set_threads(n); }

int talon_config_open(const char* path, talon_config** out) {
    return guarded([&] {
        if (!path || !out) throw talon::UsageError("config_open: null argument");
        auto cfg = std::make_unique<talon_config>();
        cfg->cfg = talon::parse_config_file(path);
        *out = cfg.release();
    });
}

int talon_config_create(talon_config** out) {
    return guarded([&] {
        if (!out) throw talon::UsageError("config_create: null argument");
        *out = new talon_config();
    });
}

int talon_config_set(talon_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        if (!cfg || !key || !value) throw talon::UsageError("config_set: null argument");
        talon::apply_override(cfg->cfg, key, value);
    });
}

void talon_config_close(talon_config* cfg) { delete cfg; }

int talon_series_open_csv(const char* path, const char* date_column, talon_series** out) {
    return guarded([&] {
        if (!path || !out) throw talon::UsageError("series_open: null argument");
        talon::CsvSchema schema;
        if (date_column) schema.date_column = date_column;
        auto s = std::make_unique<talon_series>();
        s->series = talon::load_csv(path, schema);
        *out = s.release();
    });
}

void talon_series_close(talon_series* s) { delete s; }

int talon_series_dims(const talon_series* s, uint64_t* length, uint64_t* channels) {
    return guarded([&] {
        if (!s) throw talon::UsageError("series_dims: null series");
        if (length) *length = s->series.length();
        if (channels) *channels = s->series.channels();
    });
}

int talon_synth(const char* spec_path, const char* out_csv, uint64_t seed) {
    return guarded([&] {
        if (!spec_path || !out_csv) throw talon::UsageError("synth: null argument");
        talon::SynthResult r = talon::synth_generate(talon::parse_synth_spec_file(spec_path), seed);
        talon::write_csv(r.series, out_csv);
        talon::write_regime_labels(r, labels_path_for(out_csv));
    });
}

int talon_train(const talon_config* cfg) {
    return guarded([&] {
        if (!cfg) throw talon::UsageError("train: null config");
        const talon::RunConfig& rc = cfg->cfg;
        auto [series, labels] = talon::load_series_by_config(rc);
        auto splits = talon::split_by_config(series, rc);
        talon::Model<float> model = talon::init_model<float>(rc);
        auto train_samples = talon::prepare_samples(splits[0], rc, 0, rc.stride);
        auto val_samples = talon::prepare_samples(splits[1], rc, 0, rc.stride);
        talon::TrainResult res = talon::train(model, train_samples, val_samples);
        ensure_dirs(rc.out_dir);
        talon::save_checkpoint(model, (fs::path(rc.out_dir) / "ckpt" / "best.tlnc").string());
        talon::write_curve_csv(res.curve, (fs::path(rc.out_dir) / "loss_curve.csv").string());
    });
}

int talon_model_open(const char* ckpt_path, talon_model** out) {
    return guarded([&] {
        if (!ckpt_path || !out) throw talon::UsageError("model_open: null argument");
        auto m = std::make_unique<talon_model>(talon_model{talon::load_checkpoint(ckpt_path)});
        *out = m.release();
    });
}

void talon_model_close(talon_model* m) { delete m; }

int talon_forecast(talon_model* m, const double* context, size_t context_len, size_t horizon,
                   double* out) {
    return guarded([&] {
        if (!m || !context || !out) throw talon::UsageError("forecast: null argument");
        std::vector<double> ctx(context, context + context_len);
        std::vector<double> pred = talon::autoregressive_forecast(m->model, ctx, horizon);
        std::copy(pred.begin(), pred.end(), out);
    });
}

int talon_eval(talon_model* m, talon_series* data, const char* horizons, const char* protocol,
               const char* out_dir) {
    return guarded([&] {
        if (!m || !data || !out_dir) throw talon::UsageError("eval: null argument");
        std::string proto = protocol ? protocol : "one-for-all";
        std::vector<std::size_t> hs = parse_horizons(horizons);
        std::vector<talon::bench::MetricReport> reports;
        if (proto == "one-for-all")
            reports = talon::bench::rolling_eval(m->model, data->series, hs);
        else if (proto == "one-for-one")
            reports = talon::bench::one_for_one_eval(m->model, data->series, hs);
        else
            throw talon::UsageError("unknown protocol '" + proto + "'");
        ensure_dirs(out_dir);
        talon::bench::write_reports_jsonl(reports, m->model.cfg,
                                          (fs::path(out_dir) / "reports" / "metrics.jsonl").string());
        talon::bench::write_reports_csv(reports,
                                        (fs::path(out_dir) / "reports" / "metrics.csv").string());
    });
}

int talon_zeroshot(talon_model* m, talon_series* target, const char* horizons,
                   const char* out_dir) {
    return guarded([&] {
        if (!m || !target || !out_dir) throw talon::UsageError("zeroshot: null argument");
        std::vector<std::size_t> hs = parse_horizons(horizons);
        auto reports = talon::bench::zero_shot_eval(m->model, target->series, hs);
        ensure_dirs(out_dir);
        talon::bench::write_reports_jsonl(reports, m->model.cfg,
                                          (fs::path(out_dir) / "reports" / "zeroshot.jsonl").string());
        talon::bench::write_reports_csv(reports,
                                        (fs::path(out_dir) / "reports" / "zeroshot.csv").string());
    });
}

int talon_analyze(talon_model* m, talon_series* data, const char* what, const char* labels_csv,
                  const char* out_dir) {
    return guarded([&] {
        if (!m || !data || !what || !out_dir) throw talon::UsageError("analyze: null argument");
        ensure_dirs(out_dir);
        const std::string kind = what;
        if (kind == "experts") {
            std::vector<std::string> labels;
            if (labels_csv && *labels_csv) labels = talon::load_regime_labels(labels_csv);
            auto dist = talon::bench::expert_distribution(m->model, data->series, labels);
            std::ofstream out(fs::path(out_dir) / "reports" / "expert_distribution.json");
            out << "{\"histogram\":[";
            for (std::size_t i = 0; i < dist.histogram.size(); ++i)
                out << (i ? "," : "") << dist.histogram[i];
            out << "],\"n_patches\":" << dist.n_patches << ",\"per_regime\":{";
            bool first = true;
            for (const auto& [name, h] : dist.per_regime) {
                out << (first ? "" : ",") << '"' << name << "\":[";
                for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
                out << ']';
                first = false;
            }
            out << "}}\n";
            talon::bench::write_routing_records(
                m->model, data->series,
                (fs::path(out_dir) / "reports" / "routing_records.jsonl").string());
        } else if (kind == "embeddings") {
            auto samples = talon::prepare_samples(data->series, m->model.cfg, 0,
                                                  m->model.cfg.lookback);
            auto res = talon::bench::embedding_distance(
                m->model, samples,
                (fs::path(out_dir) / "reports" / "embedding_pairs.csv").string());
            std::ofstream out(fs::path(out_dir) / "reports" / "embedding_distance.json");
            out << "{\"mean_l2\":" << res.mean_l2 << ",\"n_tokens\":" << res.n_tokens
                << ",\"mean_diag_cosine\":" << res.mean_diag_cosine
                << ",\"embedding_space\":\"raw\"}\n";
        } else {
            throw talon::UsageError("unknown analyze target '" + kind + "'");
        }
    });
}

int talon_ablate(const talon_config* cfg, const char* switches) {
    return guarded([&] {
        if (!cfg) throw talon::UsageError("ablate: null config");
        const talon::RunConfig& rc = cfg->cfg;
        // validate switch names before any training time is spent
        for (const auto& s : parse_list(switches)) {
            talon::RunConfig probe = rc;
            talon::apply_switch(probe, s);
        }
        auto [series, labels] = talon::load_series_by_config(rc);
        auto rows = talon::bench::ablate(rc, series, parse_list(switches));
        ensure_dirs(rc.out_dir);
        std::vector<talon::bench::MetricReport> reports;
        for (const auto& r : rows) reports.push_back(r.report);
        talon::bench::write_reports_jsonl(reports, rc,
                                          (fs::path(rc.out_dir) / "reports" / "ablation.jsonl").string());
        talon::bench::write_reports_csv(reports,
                                        (fs::path(rc.out_dir) / "reports" / "ablation.csv").string());
    });
}

}  // extern "C"
