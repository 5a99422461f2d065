#include "talon/forecaster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "talon/complexity.hpp"
#include "talon/numerics.hpp"
#include "talon/rng.hpp"

namespace talon {

using ad::Graph;
using ad::Var;
using nlohmann::json;

std::vector<TrainSample> prepare_samples(const MultivariateSeries& series, const RunConfig& cfg,
                                         std::size_t horizon, std::size_t stride) {
    std::vector<TrainSample> out;
    for (Window& w : make_windows(series, cfg.lookback, horizon, stride)) {
        TrainSample s;
        s.metas = patch_metadata(series, w, cfg.patch_len);
        s.window = std::move(w);
        out.push_back(std::move(s));
    }
    return out;
}

std::array<MultivariateSeries, 3> split_by_config(const MultivariateSeries& series,
                                                  const RunConfig& cfg) {
    std::size_t n_train = cfg.n_train, n_val = cfg.n_val, n_test = cfg.n_test;
    if (n_train == 0 && n_val == 0 && n_test == 0) {
        const double T = double(series.length());
        n_train = std::size_t(cfg.frac_train * T);
        n_val = std::size_t(cfg.frac_val * T);
        n_test = series.length() - n_train - n_val;
    }
    return chronological_split(series, n_train, n_val, n_test);
}

std::pair<MultivariateSeries, std::vector<std::string>> load_series_by_config(
    const RunConfig& cfg) {
    if (!cfg.data_csv.empty() && !cfg.data_synth.empty())
        throw UsageError("config: data.csv and data.synth are mutually exclusive");
    if (!cfg.data_csv.empty()) {
        CsvSchema schema;
        schema.date_column = cfg.date_column;
        schema.value_columns = cfg.value_columns;
        return {load_csv(cfg.data_csv, schema), {}};
    }
    if (!cfg.data_synth.empty()) {
        SynthResult r = synth_generate(parse_synth_spec_file(cfg.data_synth), cfg.seed);
        return {std::move(r.series), std::move(r.regime_labels)};
    }
    throw UsageError("config: one of data.csv or data.synth is required");
}

template <typename T>
std::vector<std::string> Model<T>::active_expert_names() const {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < hte::NUM_EXPERTS; ++j)
        if (hte_cfg.expert_mask[j]) names.push_back(hte::EXPERT_NAMES[j]);
    return names;
}

template <typename T>
Model<T> init_model(const RunConfig& cfg) {
    if (cfg.patch_len == 0 || cfg.lookback % cfg.patch_len != 0)
        throw UsageError("model: window.patch must divide window.lookback");
    if (cfg.lookback / cfg.patch_len < 2)
        throw UsageError("model: need at least 2 patches per window");
    if (cfg.d_model % cfg.backbone_heads != 0)
        throw UsageError("model: model.d must be divisible by backbone.heads");
    if (cfg.lookback / cfg.patch_len > cfg.max_positions)
        throw UsageError("model: patch count exceeds backbone.max_positions");

    Model<T> m;
    m.cfg = cfg;
    m.bb_cfg.n_layers = cfg.backbone_layers;
    m.bb_cfg.d_model = cfg.d_model;
    m.bb_cfg.n_heads = cfg.backbone_heads;
    m.bb_cfg.max_positions = cfg.max_positions;
    m.hte_cfg.patch_len = cfg.patch_len;
    m.hte_cfg.d_model = cfg.d_model;
    m.hte_cfg.top_k = cfg.top_k;
    m.hte_cfg.expert_mask = cfg.expert_mask();
    m.hte_cfg.disable_routing = cfg.disable_routing;
    m.hte_cfg.disable_hte = cfg.disable_hte;

    backbone::init_frozen(m.params, m.bb_cfg, cfg.seed);
    hte::init_params(m.params, m.hte_cfg, cfg.seed);
    const std::size_t d = cfg.d_model, S = cfg.patch_len;
    m.params.add_uniform("head.hidden_weight", {d, 2 * d}, d, cfg.seed, true);
    m.params.add_uniform("head.hidden_bias", {1, 2 * d}, d, cfg.seed, true);
    m.params.add_uniform("head.out_weight", {2 * d, S}, 2 * d, cfg.seed, true);
    m.params.add_uniform("head.out_bias", {1, S}, 2 * d, cfg.seed, true);

    m.prompts = std::make_unique<sam::PromptEncoder<T>>(&m.params, m.bb_cfg);
    if (!cfg.dump_prompts.empty()) m.prompts->set_dump_path(cfg.dump_prompts);
    return m;
}

namespace {

template <typename T>
Var<T> head_forward(const Binding<T>& bound, Var<T> f) {
    using namespace ad;
    Var<T> hidden = gelu(add_row(matmul(f, bound["head.hidden_weight"]),
                                 bound["head.hidden_bias"]));
    return add_row(matmul(hidden, bound["head.out_weight"]), bound["head.out_bias"]);
}

template <typename T>
Tensor<T> stack_next_patches(const std::vector<std::vector<double>>& patches) {
    const std::size_t N = patches.size(), S = patches[0].size();
    Tensor<T> t({N - 1, S});
    for (std::size_t i = 1; i < N; ++i)
        for (std::size_t j = 0; j < S; ++j) t.at(i - 1, j) = static_cast<T>(patches[i][j]);
    return t;
}

}  // namespace

template <typename T>
ForwardResult<T> forward_train(Graph<T>& g, const Binding<T>& bound, Model<T>& model,
                               const TrainSample& sample, const hte::NoiseSpec& noise) {
    using namespace ad;
    const RunConfig& cfg = model.cfg;
    std::vector<double> norm = standardize(sample.window.lookback, sample.window.stats);
    std::vector<std::vector<double>> patches = segment(norm, cfg.patch_len);
    const std::size_t N = patches.size();
    if (N < 2) throw std::invalid_argument("forward_train: need at least 2 patches");
    if (!sample.metas.empty() && sample.metas.size() != N)
        throw std::invalid_argument("forward_train: patch metadata mismatch");

    std::vector<ComplexityVector> cplx(N);
    for (std::size_t i = 0; i < N; ++i) cplx[i] = complexity_vector(patches[i], cfg.period);

    ForwardResult<T> res;
    std::vector<Var<T>> embeddings(N);
    for (std::size_t i = 0; i < N; ++i) {
        hte::RoutingRecord<T> rec;
        embeddings[i] = hte::encode_patch(g, bound, model.hte_cfg, patches[i], cplx[i], noise,
                                          &rec);
        if (!model.hte_cfg.disable_hte) res.records.push_back(std::move(rec));
    }
    res.temporal = concat_rows(embeddings);

    Var<T> f = cfg.disable_llm ? res.temporal
                               : backbone::forward_causal(res.temporal, bound, model.bb_cfg);
    Var<T> preds = head_forward(bound, f);
    res.mse = mse_against(slice_rows(preds, 0, N - 1), stack_next_patches<T>(patches));

    res.moe = res.records.empty() ? g.constant(Tensor<T>::scalar(T(0)))
                                  : hte::moe_loss(g, res.records, model.hte_cfg);

    if (!cfg.disable_sam) {
        Tensor<T> pmat({N, cfg.d_model});
        for (std::size_t i = 0; i < N; ++i) {
            sam::PromptSpec spec;
            spec.expert_names = model.active_expert_names();
            spec.meta = sample.metas.empty() ? PatchMeta{} : sample.metas[i];
            spec.complexity = cplx[i];
            Tensor<T> p = model.prompts->embed(spec, cfg.static_prompt);
            for (std::size_t c = 0; c < cfg.d_model; ++c) pmat.at(i, c) = p[c];
        }
        res.prompt_mat = pmat;
        res.align = sam::align_loss(res.temporal, g.constant(pmat), static_cast<T>(cfg.tau));
    } else {
        res.align = g.constant(Tensor<T>::scalar(T(0)));
    }

    res.total = add(res.mse, add(scale(res.moe, static_cast<T>(cfg.alpha)),
                                 scale(res.align, static_cast<T>(cfg.beta))));
    return res;
}

double total_loss_value(double mse, double moe, double align, double alpha, double beta) {
    if (!std::isfinite(mse) || !std::isfinite(moe) || !std::isfinite(align))
        throw std::runtime_error("total_loss: non-finite component");
    return mse + alpha * moe + beta * align;
}

template <typename T>
std::vector<double> autoregressive_forecast(Model<T>& model, const std::vector<double>& lookback,
                                            std::size_t horizon,
                                            std::optional<std::uint64_t> noise_seed) {
    using namespace ad;
    const RunConfig& cfg = model.cfg;
    if (horizon < 1) throw std::invalid_argument("forecast: horizon must be >= 1");
    if (lookback.size() != cfg.lookback)
        throw std::invalid_argument("forecast: context length mismatch");
    const std::size_t S = cfg.patch_len;
    const std::size_t steps = (horizon + S - 1) / S;

    std::optional<Rng> noise_rng;
    if (noise_seed) noise_rng.emplace(*noise_seed, "eval/noise");

    std::vector<double> context = lookback;
    std::vector<double> out;
    out.reserve(steps * S);
    for (std::size_t it = 0; it < steps; ++it) {
        NormStats stats = lookback_stats(context);
        std::vector<double> norm = standardize(context, stats);
        std::vector<std::vector<double>> patches = segment(norm, S);
        const std::size_t N = patches.size();

        Graph<T> g;
        g.set_grad_enabled(false);
        Binding<T> bound(g, model.params);
        hte::NoiseSpec noise;
        if (noise_rng) {
            noise.mode = hte::NoiseSpec::Mode::Draw;
            noise.rng = &*noise_rng;
        }
        std::vector<Var<T>> embeddings(N);
        for (std::size_t i = 0; i < N; ++i) {
            ComplexityVector c = complexity_vector(patches[i], cfg.period);
            embeddings[i] = hte::encode_patch<T>(g, bound, model.hte_cfg, patches[i], c, noise,
                                                 nullptr);
        }
        Var<T> e = concat_rows(embeddings);
        Var<T> f = cfg.disable_llm ? e : backbone::forward_causal(e, bound, model.bb_cfg);
        Var<T> pred = head_forward(bound, slice_rows(f, N - 1, N));

        std::vector<double> seg(S);
        for (std::size_t j = 0; j < S; ++j) seg[j] = static_cast<double>(pred.value()[j]);
        seg = destandardize(seg, stats);
        out.insert(out.end(), seg.begin(), seg.end());
        context.erase(context.begin(), context.begin() + S);
        context.insert(context.end(), seg.begin(), seg.end());
    }
    out.resize(horizon);
    return out;
}

template <typename T>
double teacher_forced_mse(Model<T>& model, const TrainSample& sample) {
    Graph<T> g;
    g.set_grad_enabled(false);
    Binding<T> bound(g, model.params);
    bool sam_was_off = model.cfg.disable_sam;
    model.cfg.disable_sam = true;  // validation needs the MSE only
    hte::NoiseSpec noise;  // eval mode: zero noise
    double v;
    try {
        v = static_cast<double>(forward_train(g, bound, model, sample, noise).mse.value()[0]);
    } catch (...) {
        model.cfg.disable_sam = sam_was_off;
        throw;
    }
    model.cfg.disable_sam = sam_was_off;
    return v;
}

TrainResult train(Model<float>& model, const std::vector<TrainSample>& train_samples,
                  const std::vector<TrainSample>& val_samples) {
    if (train_samples.empty()) throw std::runtime_error("train: empty training set");
    const RunConfig& cfg = model.cfg;
    Adam<float> adam(AdamHyper{cfg.lr, 0.9, 0.999, 1e-8});
    adam.set_step_count(model.step);
    Rng shuffle_rng(cfg.seed, "train/shuffle");
    Rng noise_rng(cfg.seed, "train/noise");

    TrainResult res;
    ParamStore<float> best_params = model.params;
    std::uint64_t step = model.step;
    bool done = false;

    for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        std::vector<std::size_t> order(train_samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = std::size_t(shuffle_rng.uniform() * double(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }

        for (std::size_t b0 = 0; b0 < order.size() && !done; b0 += std::max<std::size_t>(1, cfg.batch)) {
            const std::size_t b1 = std::min(order.size(), b0 + std::max<std::size_t>(1, cfg.batch));
            Graph<float> g;
            Binding<float> bound(g, model.params);
            hte::NoiseSpec noise;
            noise.mode = hte::NoiseSpec::Mode::Draw;
            noise.rng = &noise_rng;

            Var<float> total, mse_sum, moe_sum, align_sum;
            for (std::size_t bi = b0; bi < b1; ++bi) {
                ForwardResult<float> r =
                    forward_train(g, bound, model, train_samples[order[bi]], noise);
                total = total ? ad::add(total, r.total) : r.total;
                mse_sum = mse_sum ? ad::add(mse_sum, r.mse) : r.mse;
                moe_sum = moe_sum ? ad::add(moe_sum, r.moe) : r.moe;
                align_sum = align_sum ? ad::add(align_sum, r.align) : r.align;
            }
            const float inv_b = 1.0f / float(b1 - b0);
            total = ad::scale(total, inv_b);

            CurveRow row;
            row.step = ++step;
            row.total = total.value()[0];
            row.mse = mse_sum.value()[0] * inv_b;
            row.moe = moe_sum.value()[0] * inv_b;
            row.align = align_sum.value()[0] * inv_b;
            if (!std::isfinite(row.total))
                throw std::runtime_error("train: loss diverged (non-finite) at step " +
                                         std::to_string(step));

            g.backward(total);
            std::unordered_map<std::string, Tensor<float>> grads;
            for (const auto& p : model.params.all())
                if (p.trainable) grads.emplace(p.name, bound.grad_of(p.name));
            adam.step(model.params, grads);

            res.curve.push_back(row);
            if (cfg.max_steps && step >= cfg.max_steps) done = true;
        }

        if (!val_samples.empty()) {
            double val = 0.0;
            for (const auto& s : val_samples) val += teacher_forced_mse(model, s);
            val /= double(val_samples.size());
            if (!res.curve.empty()) res.curve.back().val_mse = val;
            if (res.best_val < 0 || val < res.best_val) {
                res.best_val = val;
                res.best_step = step;
                best_params = model.params;
            }
        }
    }

    if (res.best_val >= 0) model.params = best_params;
    model.step = step;
    model.rng_counters["train/shuffle"] = shuffle_rng.counter();
    model.rng_counters["train/noise"] = noise_rng.counter();
    return res;
}

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write curve: " + path);
    out << "step,L,L_MSE,L_MoE,L_align,val_MSE\n";
    out.precision(10);
    for (const auto& r : curve) {
        out << r.step << ',' << r.total << ',' << r.mse << ',' << r.moe << ',' << r.align << ',';
        if (r.val_mse >= 0) out << r.val_mse;
        out << '\n';
    }
}

// ---- checkpointing ----

namespace {

json config_json(const RunConfig& cfg) {
    json j = json::object();
    std::istringstream in(cfg.canonical_text());
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    std::map<std::string, std::string> kv = j.get<std::map<std::string, std::string>>();
    for (const auto& [k, v] : kv) apply_override(cfg, k, v);
    return cfg;
}

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(char((v >> (8 * i)) & 0xFF));
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
    json params = json::array();
    std::uint64_t offset = 0;
    for (const auto& p : model.params.all()) {
        json e;
        e["name"] = p.name;
        e["dtype"] = "f32";
        e["shape"] = p.tensor.shape();
        e["trainable"] = p.trainable;
        e["offset"] = offset;
        e["nbytes"] = p.tensor.size() * 4;
        offset += p.tensor.size() * 4;
        params.push_back(e);
    }
    json header;
    header["format"] = "TLNC";
    header["version"] = CHECKPOINT_VERSION;
    header["build_id"] = build_id();
    header["config"] = config_json(model.cfg);
    header["step"] = model.step;
    header["rng"] = model.rng_counters;
    header["params"] = params;
    std::string hdr = header.dump();

    std::string bytes = "TLNC";
    put_u32(bytes, CHECKPOINT_VERSION);
    put_u64(bytes, hdr.size());
    bytes += hdr;
    bytes += serialize_params_f32(model.params);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

namespace {

struct RawCheckpoint {
    json header;
    std::string payload;
};

RawCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || bytes.compare(0, 4, "TLNC") != 0)
        throw std::runtime_error("corrupt checkpoint: bad magic");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= std::uint32_t(std::uint8_t(bytes[4 + i])) << (8 * i);
    if (version != CHECKPOINT_VERSION)
        throw std::runtime_error("checkpoint version mismatch: " + std::to_string(version));
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= std::uint64_t(std::uint8_t(bytes[8 + i])) << (8 * i);
    if (16 + hlen > bytes.size()) throw std::runtime_error("corrupt checkpoint: truncated header");
    RawCheckpoint raw;
    try {
        raw.header = json::parse(bytes.substr(16, hlen));
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
    }
    raw.payload = bytes.substr(16 + hlen);
    std::uint64_t expected = 0;
    for (const auto& e : raw.header.at("params")) expected += e.at("nbytes").get<std::uint64_t>();
    if (raw.payload.size() != expected)
        throw std::runtime_error("corrupt checkpoint: truncated payload");
    return raw;
}

void fill_params(ParamStore<float>& store, const RawCheckpoint& raw) {
    for (const auto& e : raw.header.at("params")) {
        const std::string name = e.at("name").get<std::string>();
        if (!store.has(name))
            throw std::runtime_error("checkpoint shape mismatch: unknown param " + name);
        Param<float>& p = store.get(name);
        std::vector<std::size_t> shape = e.at("shape").get<std::vector<std::size_t>>();
        if (shape != p.tensor.shape())
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        const std::uint64_t off = e.at("offset").get<std::uint64_t>();
        for (std::size_t i = 0; i < p.tensor.size(); ++i) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b)
                u |= std::uint32_t(std::uint8_t(raw.payload[off + 4 * i + b])) << (8 * b);
            float f;
            std::memcpy(&f, &u, 4);
            p.tensor[i] = f;
        }
    }
}

}  // namespace

Model<float> load_checkpoint(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    Model<float> model = init_model<float>(config_from_json(raw.header.at("config")));
    if (raw.header.at("params").size() != model.params.size())
        throw std::runtime_error("checkpoint shape mismatch: param count");
    fill_params(model.params, raw);
    model.step = raw.header.at("step").get<std::uint64_t>();
    model.rng_counters =
        raw.header.at("rng").get<std::map<std::string, std::uint64_t>>();
    return model;
}

void load_checkpoint_params(Model<float>& model, const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    if (raw.header.at("params").size() != model.params.size())
        throw std::runtime_error("checkpoint shape mismatch: param count");
    fill_params(model.params, raw);
    model.step = raw.header.at("step").get<std::uint64_t>();
}

template <typename T>
std::string backbone_hash(const Model<T>& model) {
    std::string bytes = serialize_params_f32(model.params, "backbone.");
    return sha256_hex(bytes);
}

#define TALON_INSTANTIATE_FORECASTER(T)                                                     \
    template std::vector<std::string> Model<T>::active_expert_names() const;               \
    template Model<T> init_model<T>(const RunConfig&);                                     \
    template ForwardResult<T> forward_train<T>(Graph<T>&, const Binding<T>&, Model<T>&,    \
                                               const TrainSample&, const hte::NoiseSpec&); \
    template std::vector<double> autoregressive_forecast<T>(                               \
        Model<T>&, const std::vector<double>&, std::size_t, std::optional<std::uint64_t>); \
    template double teacher_forced_mse<T>(Model<T>&, const TrainSample&);                  \
    template std::string backbone_hash<T>(const Model<T>&);

TALON_INSTANTIATE_FORECASTER(float)
TALON_INSTANTIATE_FORECASTER(double)

#undef TALON_INSTANTIATE_FORECASTER

}  // namespace talon
