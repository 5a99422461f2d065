#include "talon/hte.hpp"

#include <algorithm>
#include <stdexcept>

namespace talon::hte {

using ad::Var;

template <typename T>
void init_params(ParamStore<T>& store, const HteConfig& cfg, std::uint64_t seed) {
    const std::size_t S = cfg.patch_len, d = cfg.d_model, K = NUM_EXPERTS;
    if (cfg.expert_mask.size() != K)
        throw std::invalid_argument("hte: expert mask must cover all experts");
    if (cfg.allowed_count() == 0) throw std::invalid_argument("hte: no experts enabled");
    if (cfg.disable_hte) {
        store.add_uniform("hte.embed.weight", {S, d}, S, seed, true);
        return;
    }
    if (!cfg.disable_routing) {
        if (cfg.top_k < 1 || cfg.top_k > cfg.allowed_count())
            throw std::invalid_argument("hte: top_k out of range");
        store.add_uniform("hte.router.patch_hidden", {S, d}, S, seed, true);
        store.add_uniform("hte.router.patch_score", {d, K}, d, seed, true);
        store.add_uniform("hte.router.cplx_hidden", {3, d}, 3, seed, true);
        store.add_uniform("hte.router.cplx_score", {d, K}, d, seed, true);
        store.add_uniform("hte.router.score_mix", {K, K}, K, seed, true);
    }
    if (cfg.expert_mask[0])
        store.add_uniform("hte.expert.linear.weight", {S, d}, S, seed, true);
    if (cfg.expert_mask[1]) {
        store.add_uniform("hte.expert.cnn.conv1", {d, 1, 3}, 3, seed, true);
        store.add_uniform("hte.expert.cnn.conv2", {d, d, 3}, 3 * d, seed, true);
        store.add_uniform("hte.expert.cnn.proj", {d, d}, d, seed, true);
    }
    if (cfg.expert_mask[2]) {
        store.add_uniform("hte.expert.lstm.input_weight", {1, 4 * d}, d, seed, true);
        store.add_uniform("hte.expert.lstm.hidden_weight", {d, 4 * d}, d, seed, true);
        store.add_uniform("hte.expert.lstm.bias", {1, 4 * d}, d, seed, true);
        store.add_uniform("hte.expert.lstm.proj", {d, d}, d, seed, true);
    }
}

template <typename T>
Var<T> gate_from_logits(Var<T> logits, std::size_t k, const std::vector<std::uint8_t>& allowed) {
    return ad::softmax_rows(ad::keep_topk_row(logits, k, allowed));
}

namespace {

template <typename T>
Var<T> to_row(ad::Graph<T>& g, const std::vector<double>& v) {
    std::vector<T> data(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) data[i] = static_cast<T>(v[i]);
    return g.constant(Tensor<T>::row(std::move(data)));
}

}  // namespace

template <typename T>
RoutingRecord<T> route(ad::Graph<T>& g, const Binding<T>& params, const HteConfig& cfg,
                       const std::vector<double>& patch, const ComplexityVector& c,
                       const NoiseSpec& noise) {
    using namespace ad;
    const std::size_t K = NUM_EXPERTS;
    RoutingRecord<T> rec;
    if (cfg.disable_routing) {
        std::vector<T> gate(K, T(0));
        const T w = T(1) / T(cfg.allowed_count());
        for (std::size_t j = 0; j < K; ++j)
            if (cfg.expert_mask[j]) gate[j] = w;
        rec.gate = g.constant(Tensor<T>::row(std::move(gate)));
        rec.uniform = true;
        rec.noise.assign(K, 0.0);
        return rec;
    }
    if (patch.size() != cfg.patch_len)
        throw std::invalid_argument("route: patch length mismatch");

    Var<T> s = to_row(g, patch);
    Var<T> cv = to_row(g, {c.trend_strength, c.local_variation, c.autocorr});
    Var<T> z_tilde = matmul(relu(matmul(s, params["hte.router.patch_hidden"])),
                            params["hte.router.patch_score"]);
    Var<T> c_tilde = matmul(relu(matmul(cv, params["hte.router.cplx_hidden"])),
                            params["hte.router.cplx_score"]);
    Var<T> scale_v = softplus_v(c_tilde);

    rec.noise.assign(K, 0.0);
    switch (noise.mode) {
        case NoiseSpec::Mode::Draw:
            if (!noise.rng) throw std::invalid_argument("route: rng required to draw noise");
            for (std::size_t j = 0; j < K; ++j) rec.noise[j] = noise.rng->normal();
            break;
        case NoiseSpec::Mode::Fixed:
            if (noise.values.size() != K)
                throw std::invalid_argument("route: fixed noise size mismatch");
            rec.noise = noise.values;
            break;
        case NoiseSpec::Mode::Zero:
            break;
    }

    Var<T> z = z_tilde;
    bool any_noise = false;
    for (double e : rec.noise) any_noise = any_noise || e != 0.0;
    if (any_noise) {
        Var<T> eps = to_row(g, rec.noise);
        z = add(z_tilde, mul(eps, scale_v));
    }
    Var<T> mix = params["hte.router.score_mix"];
    rec.noisy_logits = matmul(z, mix);
    rec.clean_logits = matmul(z_tilde, mix);
    rec.noise_scale = scale_v;
    rec.gate = gate_from_logits(rec.noisy_logits, cfg.top_k, cfg.expert_mask);
    return rec;
}

template <typename T>
Var<T> expert_linear(ad::Graph<T>& g, const Binding<T>& params,
                     const std::vector<double>& patch) {
    return ad::matmul(to_row(g, patch), params["hte.expert.linear.weight"]);
}

template <typename T>
Var<T> expert_cnn(ad::Graph<T>& g, const Binding<T>& params, const std::vector<double>& patch) {
    using namespace ad;
    Var<T> x = to_row(g, patch);  // 1 x S == (Cin=1) x S
    Var<T> h1 = relu(conv1d_same(x, params["hte.expert.cnn.conv1"]));
    Var<T> h2 = conv1d_same(h1, params["hte.expert.cnn.conv2"]);
    Var<T> pooled = mean_rows_to_row(h2);  // 1 x d
    return matmul(pooled, params["hte.expert.cnn.proj"]);
}

template <typename T>
Var<T> expert_lstm(ad::Graph<T>& g, const Binding<T>& params, const HteConfig& cfg,
                   const std::vector<double>& patch) {
    using namespace ad;
    const std::size_t d = cfg.d_model;
    Var<T> x = to_row(g, patch);
    Var<T> h = g.constant(Tensor<T>::zeros({1, d}));
    Var<T> cell = g.constant(Tensor<T>::zeros({1, d}));
    Var<T> w_in = params["hte.expert.lstm.input_weight"];
    Var<T> w_hid = params["hte.expert.lstm.hidden_weight"];
    Var<T> bias = params["hte.expert.lstm.bias"];
    for (std::size_t t = 0; t < patch.size(); ++t) {
        Var<T> xt = slice_cols(x, t, t + 1);
        Var<T> gates = add(add(matmul(xt, w_in), matmul(h, w_hid)), bias);
        Var<T> in_g = sigmoid_v(slice_cols(gates, 0, d));
        Var<T> forget_g = sigmoid_v(slice_cols(gates, d, 2 * d));
        Var<T> cand = tanh_v(slice_cols(gates, 2 * d, 3 * d));
        Var<T> out_g = sigmoid_v(slice_cols(gates, 3 * d, 4 * d));
        cell = add(mul(forget_g, cell), mul(in_g, cand));
        h = mul(out_g, tanh_v(cell));
    }
    return matmul(h, params["hte.expert.lstm.proj"]);
}

template <typename T>
Var<T> encode_patch(ad::Graph<T>& g, const Binding<T>& params, const HteConfig& cfg,
                    const std::vector<double>& patch, const ComplexityVector& c,
                    const NoiseSpec& noise, RoutingRecord<T>* record_out) {
    using namespace ad;
    if (cfg.disable_hte) return matmul(to_row(g, patch), params["hte.embed.weight"]);

    RoutingRecord<T> rec = route(g, params, cfg, patch, c, noise);
    Var<T> out;
    for (std::size_t j = 0; j < NUM_EXPERTS; ++j) {
        if (rec.gate.value()[j] == T(0)) continue;  // lazy: unrouted experts stay cold
        Var<T> e;
        if (j == 0) e = expert_linear(g, params, patch);
        else if (j == 1) e = expert_cnn(g, params, patch);
        else e = expert_lstm(g, params, cfg, patch);
        Var<T> weighted = mul_by_scalar(e, gather_cols(rec.gate, {j}));
        out = out ? add(out, weighted) : weighted;
    }
    if (record_out) *record_out = std::move(rec);
    return out;
}

namespace {

/// Squared coefficient of variation of a 1xN row: Var(x) / Mean(x)^2.
template <typename T>
Var<T> cv_squared(Var<T> row) {
    using namespace ad;
    Var<T> m = mean_all(row);
    Var<T> var = sub(mean_all(square(row)), square(m));
    return div_elem(var, square(m));
}

}  // namespace

template <typename T>
Var<T> moe_loss(ad::Graph<T>& g, const std::vector<RoutingRecord<T>>& records,
                const HteConfig& cfg) {
    using namespace ad;
    if (records.empty()) throw std::invalid_argument("moe_loss: empty batch");
    if (cfg.disable_routing || cfg.disable_hte || records[0].uniform)
        return g.constant(Tensor<T>::scalar(T(0)));

    std::vector<std::size_t> allowed_idx;
    for (std::size_t j = 0; j < NUM_EXPERTS; ++j)
        if (cfg.expert_mask[j]) allowed_idx.push_back(j);
    const std::size_t Ka = allowed_idx.size();

    std::vector<Var<T>> gates;
    gates.reserve(records.size());
    for (const auto& r : records) gates.push_back(r.gate);
    Var<T> ones = g.constant(Tensor<T>::full({1, records.size()}, T(1)));
    Var<T> importance = matmul(ones, concat_rows(gates));  // 1 x K
    if (Ka < NUM_EXPERTS) importance = gather_cols(importance, allowed_idx);
    Var<T> loss = cv_squared(importance);

    // Load: differentiable probability that each expert clears the top-k
    // threshold under resampled noise (normal CDF, per-token noise scale).
    if (cfg.top_k < Ka) {
        std::vector<Var<T>> probs;
        for (const auto& r : records) {
            const auto& h = r.noisy_logits.value();
            std::vector<std::size_t> thresh_idx(Ka);
            for (std::size_t a = 0; a < Ka; ++a) {
                std::vector<std::size_t> others;
                for (std::size_t b = 0; b < Ka; ++b)
                    if (b != a) others.push_back(allowed_idx[b]);
                std::stable_sort(others.begin(), others.end(), [&](std::size_t x, std::size_t y) {
                    return h[x] > h[y];
                });
                thresh_idx[a] = others[cfg.top_k - 1];  // k-th largest excluding a
            }
            Var<T> clean = gather_cols(r.clean_logits, allowed_idx);
            Var<T> thresh = gather_cols(r.noisy_logits, thresh_idx);
            Var<T> scale_a = add_const(gather_cols(r.noise_scale, allowed_idx), T(1e-6));
            probs.push_back(normal_cdf_v(div_elem(sub(clean, thresh), scale_a)));
        }
        Var<T> load = matmul(ones, concat_rows(probs));  // 1 x Ka
        loss = add(loss, cv_squared(load));
    }
    return loss;
}

#define TALON_INSTANTIATE_HTE(T)                                                            \
    template void init_params<T>(ParamStore<T>&, const HteConfig&, std::uint64_t);         \
    template Var<T> gate_from_logits<T>(Var<T>, std::size_t,                               \
                                        const std::vector<std::uint8_t>&);                 \
    template RoutingRecord<T> route<T>(ad::Graph<T>&, const Binding<T>&, const HteConfig&, \
                                       const std::vector<double>&, const ComplexityVector&,\
                                       const NoiseSpec&);                                  \
    template Var<T> expert_linear<T>(ad::Graph<T>&, const Binding<T>&,                     \
                                     const std::vector<double>&);                          \
    template Var<T> expert_cnn<T>(ad::Graph<T>&, const Binding<T>&,                        \
                                  const std::vector<double>&);                             \
    template Var<T> expert_lstm<T>(ad::Graph<T>&, const Binding<T>&, const HteConfig&,     \
                                   const std::vector<double>&);                            \
    template Var<T> encode_patch<T>(ad::Graph<T>&, const Binding<T>&, const HteConfig&,    \
                                    const std::vector<double>&, const ComplexityVector&,   \
                                    const NoiseSpec&, RoutingRecord<T>*);                  \
    template Var<T> moe_loss<T>(ad::Graph<T>&, const std::vector<RoutingRecord<T>>&,       \
                                const HteConfig&);

TALON_INSTANTIATE_HTE(float)
TALON_INSTANTIATE_HTE(double)

#undef TALON_INSTANTIATE_HTE

}  // namespace talon::hte
