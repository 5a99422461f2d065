#include "talon/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "talon/complexity.hpp"
#include "talon/numerics.hpp"

namespace talon::bench {

using nlohmann::json;

namespace {
std::atomic<int> g_threads{1};
}

void set_threads(int n) { g_threads.store(std::max(1, n)); }
int threads() { return g_threads.load(); }

double mse(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.empty() || y.size() != y_hat.size())
        throw std::invalid_argument("mse: length mismatch or empty");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    return s / double(y.size());
}

double mae(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.empty() || y.size() != y_hat.size())
        throw std::invalid_argument("mae: length mismatch or empty");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - y_hat[i]);
    return s / double(y.size());
}

ImpReport imp(const std::map<std::string, double>& baseline,
              const std::map<std::string, double>& ours) {
    if (baseline.empty() || baseline.size() != ours.size())
        throw std::invalid_argument("imp: dataset keys mismatch");
    ImpReport rep;
    double sum = 0.0;
    for (const auto& [k, base] : baseline) {
        auto it = ours.find(k);
        if (it == ours.end()) throw std::invalid_argument("imp: missing dataset " + k);
        if (!(base > 0.0)) throw std::invalid_argument("imp: zero baseline for " + k);
        double r = (base - it->second) / base;
        rep.per_dataset[k] = r;
        sum += r;
    }
    rep.average = sum / double(baseline.size());
    return rep;
}

namespace {

/// Rolls every window once to max(horizons); per-horizon metrics are sliced
/// from the shared roll.
std::vector<MetricReport> eval_shared_roll(Model<float>& model, const MultivariateSeries& test,
                                           const std::vector<std::size_t>& horizons,
                                           const std::string& protocol) {
    if (horizons.empty()) throw std::invalid_argument("eval: no horizons");
    const std::size_t max_h = *std::max_element(horizons.begin(), horizons.end());
    if (*std::min_element(horizons.begin(), horizons.end()) < 1)
        throw std::invalid_argument("eval: horizon must be >= 1");
    const RunConfig& cfg = model.cfg;
    if (cfg.lookback + max_h > test.length())
        throw std::invalid_argument("eval: horizon unreachable (test series too short)");
    std::vector<Window> windows = make_windows(test, cfg.lookback, max_h, cfg.eval_stride);

    std::vector<std::vector<double>> preds(windows.size());
    const int nthreads = std::min<int>(threads(), int(windows.size()));
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < windows.size(); ++i)
            preds[i] = autoregressive_forecast(model, windows[i].lookback, max_h);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < windows.size();
                     i = next.fetch_add(1))
                    preds[i] = autoregressive_forecast(model, windows[i].lookback, max_h);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<MetricReport> reports;
    for (std::size_t h : horizons) {
        double se = 0.0, ae = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            for (std::size_t j = 0; j < h; ++j) {
                double d = windows[i].target[j] - preds[i][j];
                se += d * d;
                ae += std::abs(d);
                ++n;
            }
        }
        MetricReport r;
        r.dataset = test.dataset_id;
        r.horizon = h;
        r.mse = se / double(n);
        r.mae = ae / double(n);
        r.n_predictions = n;
        r.protocol = protocol;
        reports.push_back(r);
    }
    return reports;
}

}  // namespace

std::vector<MetricReport> rolling_eval(Model<float>& model, const MultivariateSeries& test,
                                       const std::vector<std::size_t>& horizons) {
    return eval_shared_roll(model, test, horizons, "one-for-all");
}

std::vector<MetricReport> one_for_one_eval(Model<float>& model, const MultivariateSeries& test,
                                           const std::vector<std::size_t>& horizons) {
    std::vector<MetricReport> out;
    for (std::size_t h : horizons) {
        std::vector<MetricReport> one = eval_shared_roll(model, test, {h}, "one-for-one");
        out.push_back(one[0]);
    }
    return out;
}

std::vector<MetricReport> zero_shot_eval(Model<float>& model, const MultivariateSeries& target,
                                         const std::vector<std::size_t>& horizons) {
    std::vector<MetricReport> out = eval_shared_roll(model, target, horizons, "zero-shot");
    for (auto& r : out) r.tag = model.cfg.out_dir + "->" + target.dataset_id;
    return out;
}

namespace {

struct PatchRoute {
    std::size_t channel = 0, start = 0, patch = 0;
    std::vector<double> gate;
    std::size_t argmax = 0;
    ComplexityVector cplx;
};

/// Gates for every patch of non-overlapping lookback windows, eval mode.
std::vector<PatchRoute> route_series(Model<float>& model, const MultivariateSeries& series) {
    const RunConfig& cfg = model.cfg;
    if (model.hte_cfg.disable_hte)
        throw std::runtime_error("expert distribution requires the heterogeneous encoder");
    if (series.length() < cfg.lookback)
        throw std::invalid_argument("expert distribution: series shorter than lookback");
    std::vector<PatchRoute> out;
    for (std::size_t c = 0; c < series.channels(); ++c) {
        for (std::size_t start = 0; start + cfg.lookback <= series.length();
             start += cfg.lookback) {
            std::vector<double> lb(cfg.lookback);
            for (std::size_t i = 0; i < cfg.lookback; ++i) lb[i] = series.at(start + i, c);
            NormStats st = lookback_stats(lb);
            std::vector<double> norm = standardize(lb, st);
            std::vector<std::vector<double>> patches = segment(norm, cfg.patch_len);
            ad::Graph<float> g;
            g.set_grad_enabled(false);
            Binding<float> bound(g, model.params);
            for (std::size_t i = 0; i < patches.size(); ++i) {
                PatchRoute pr;
                pr.channel = c;
                pr.start = start;
                pr.patch = i;
                pr.cplx = complexity_vector(patches[i], cfg.period);
                hte::NoiseSpec noise;  // zero: deterministic eval
                auto rec = hte::route(g, bound, model.hte_cfg, patches[i], pr.cplx, noise);
                pr.gate.resize(hte::NUM_EXPERTS);
                for (std::size_t j = 0; j < hte::NUM_EXPERTS; ++j)
                    pr.gate[j] = rec.gate.value()[j];
                pr.argmax = 0;
                for (std::size_t j = 1; j < pr.gate.size(); ++j)
                    if (pr.gate[j] > pr.gate[pr.argmax]) pr.argmax = j;  // ties keep lowest
                out.push_back(std::move(pr));
            }
        }
    }
    return out;
}

}  // namespace

ExpertDistribution expert_distribution(Model<float>& model, const MultivariateSeries& series,
                                       const std::vector<std::string>& regime_labels) {
    std::vector<PatchRoute> routes = route_series(model, series);
    ExpertDistribution dist;
    dist.histogram.assign(hte::NUM_EXPERTS, 0.0);
    dist.n_patches = routes.size();
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> per;
    const std::size_t S = model.cfg.patch_len;
    for (const auto& r : routes) {
        dist.histogram[r.argmax] += 1.0;
        if (!regime_labels.empty()) {
            // majority regime over the patch span
            std::map<std::string, std::size_t> counts;
            for (std::size_t t = r.start + r.patch * S;
                 t < r.start + (r.patch + 1) * S && t < regime_labels.size(); ++t)
                ++counts[regime_labels[t]];
            if (!counts.empty()) {
                auto best = std::max_element(counts.begin(), counts.end(),
                                             [](const auto& a, const auto& b) {
                                                 return a.second < b.second;
                                             });
                auto& slot = per[best->first];
                if (slot.first.empty()) slot.first.assign(hte::NUM_EXPERTS, 0.0);
                slot.first[r.argmax] += 1.0;
                ++slot.second;
            }
        }
    }
    for (auto& h : dist.histogram) h /= double(std::max<std::size_t>(1, dist.n_patches));
    for (auto& [name, slot] : per) {
        for (auto& v : slot.first) v /= double(slot.second);
        dist.per_regime[name] = slot.first;
    }
    return dist;
}

void write_routing_records(Model<float>& model, const MultivariateSeries& series,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write routing records: " + path);
    for (const auto& r : route_series(model, series)) {
        json j;
        j["channel"] = r.channel;
        j["window_start"] = r.start;
        j["patch"] = r.patch;
        j["gate"] = r.gate;
        j["argmax"] = r.argmax;
        j["complexity"] = {r.cplx.trend_strength, r.cplx.local_variation, r.cplx.autocorr};
        out << j.dump() << '\n';
    }
}

EmbeddingDistance embedding_distance(Model<float>& model,
                                     const std::vector<TrainSample>& samples,
                                     const std::string& dump_csv, std::size_t max_windows) {
    if (model.cfg.disable_sam)
        throw std::runtime_error("embedding distance requires the alignment module");
    std::ofstream dump;
    if (!dump_csv.empty()) {
        dump.open(dump_csv);
        if (!dump) throw std::runtime_error("cannot write embedding dump: " + dump_csv);
        dump << "token,l2";
        for (std::size_t c = 0; c < model.cfg.d_model; ++c) dump << ",e" << c;
        for (std::size_t c = 0; c < model.cfg.d_model; ++c) dump << ",p" << c;
        dump << '\n';
    }

    EmbeddingDistance res;
    double cos_acc = 0.0;
    std::size_t token = 0;
    const std::size_t n = std::min(samples.size(), max_windows);
    for (std::size_t w = 0; w < n; ++w) {
        ad::Graph<float> g;
        g.set_grad_enabled(false);
        Binding<float> bound(g, model.params);
        hte::NoiseSpec noise;  // eval: zero
        ForwardResult<float> r = forward_train(g, bound, model, samples[w], noise);
        const Tensor<float>& e = r.temporal.value();
        const Tensor<float>& p = r.prompt_mat;
        for (std::size_t i = 0; i < e.rows(); ++i) {
            double l2 = 0.0, dot = 0.0, ne = 0.0, np = 0.0;
            for (std::size_t c = 0; c < e.cols(); ++c) {
                double d = double(e.at(i, c)) - double(p.at(i, c));
                l2 += d * d;
                dot += double(e.at(i, c)) * double(p.at(i, c));
                ne += double(e.at(i, c)) * double(e.at(i, c));
                np += double(p.at(i, c)) * double(p.at(i, c));
            }
            l2 = std::sqrt(l2);
            res.mean_l2 += l2;
            cos_acc += dot / std::max(std::sqrt(ne * np), 1e-12);
            if (dump.is_open()) {
                dump << token << ',' << l2;
                for (std::size_t c = 0; c < e.cols(); ++c) dump << ',' << e.at(i, c);
                for (std::size_t c = 0; c < p.cols(); ++c) dump << ',' << p.at(i, c);
                dump << '\n';
            }
            ++token;
        }
    }
    if (token == 0) throw std::runtime_error("embedding distance: no tokens sampled");
    res.n_tokens = token;
    res.mean_l2 /= double(token);
    res.mean_diag_cosine = cos_acc / double(token);
    return res;
}

std::vector<AblationRow> ablate(const RunConfig& base, const MultivariateSeries& data,
                                const std::vector<std::string>& switches) {
    std::vector<std::string> variants = {"baseline"};
    for (const auto& s : switches)
        if (s != "baseline") variants.push_back(s);

    std::vector<AblationRow> rows;
    for (const auto& name : variants) {
        RunConfig cfg = base;
        apply_switch(cfg, name);  // throws UsageError on unknown switches
        auto splits = split_by_config(data, cfg);
        Model<float> model = init_model<float>(cfg);
        std::vector<TrainSample> train_samples = prepare_samples(splits[0], cfg, 0, cfg.stride);
        std::vector<TrainSample> val_samples = prepare_samples(splits[1], cfg, 0, cfg.stride);
        TrainResult tr = train(model, train_samples, val_samples);
        std::vector<MetricReport> reports = rolling_eval(model, splits[2], {cfg.horizon});
        AblationRow row;
        row.variant = name;
        row.report = reports[0];
        row.report.variant = name;
        row.final_train_mse = tr.curve.empty() ? -1.0 : tr.curve.back().mse;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_reports_jsonl(const std::vector<MetricReport>& reports, const RunConfig& cfg,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write reports: " + path);
    for (const auto& r : reports) {
        json j;
        j["dataset"] = r.dataset;
        j["horizon"] = r.horizon;
        j["mse"] = r.mse;
        j["mae"] = r.mae;
        j["n_predictions"] = r.n_predictions;
        j["protocol"] = r.protocol;
        if (!r.tag.empty()) j["tag"] = r.tag;
        j["variant"] = r.variant;
        j["build_id"] = build_id();
        json cj = json::object();
        std::istringstream in(cfg.canonical_text());
        std::string line;
        while (std::getline(in, line)) {
            auto eq = line.find('=');
            if (eq != std::string::npos) cj[line.substr(0, eq)] = line.substr(eq + 1);
        }
        j["config"] = cj;
        out << j.dump() << '\n';
    }
}

void write_reports_csv(const std::vector<MetricReport>& reports, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write reports: " + path);
    out << "dataset,horizon,protocol,variant,tag,mse,mae,n_predictions\n";
    out.precision(10);
    for (const auto& r : reports)
        out << r.dataset << ',' << r.horizon << ',' << r.protocol << ',' << r.variant << ','
            << r.tag << ',' << r.mse << ',' << r.mae << ',' << r.n_predictions << '\n';
}

}  // namespace talon::bench
