#include "talon/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace talon::backbone {

std::size_t param_count(const BackboneConfig& cfg) {
    const std::size_t d = cfg.d_model;
    const std::size_t per_layer = 2 * d              // attn norm
                                  + d * 3 * d + 3 * d  // qkv
                                  + d * d + d          // attn out
                                  + 2 * d              // ff norm
                                  + d * 4 * d + 4 * d  // ff in
                                  + 4 * d * d + d;     // ff out
    return cfg.vocab_size * d + cfg.max_positions * d + cfg.n_layers * per_layer + 2 * d;
}

template <typename T>
void init_frozen(ParamStore<T>& store, const BackboneConfig& cfg, std::uint64_t seed) {
    const std::size_t d = cfg.d_model;
    if (d % cfg.n_heads != 0)
        throw std::invalid_argument("backbone: d_model must be divisible by n_heads");
    store.add_uniform("backbone.token_embedding", {cfg.vocab_size, d}, d, seed, false);
    store.add_uniform("backbone.position_embedding", {cfg.max_positions, d}, d, seed, false);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "backbone.block" + std::to_string(l) + ".";
        store.add(p + "attn_norm.gain", Tensor<T>::full({1, d}, T(1)), false);
        store.add(p + "attn_norm.bias", Tensor<T>::zeros({1, d}), false);
        store.add_uniform(p + "attn.qkv_weight", {d, 3 * d}, d, seed, false);
        store.add(p + "attn.qkv_bias", Tensor<T>::zeros({1, 3 * d}), false);
        store.add_uniform(p + "attn.out_weight", {d, d}, d, seed, false);
        store.add(p + "attn.out_bias", Tensor<T>::zeros({1, d}), false);
        store.add(p + "ff_norm.gain", Tensor<T>::full({1, d}, T(1)), false);
        store.add(p + "ff_norm.bias", Tensor<T>::zeros({1, d}), false);
        store.add_uniform(p + "ff.in_weight", {d, 4 * d}, d, seed, false);
        store.add(p + "ff.in_bias", Tensor<T>::zeros({1, 4 * d}), false);
        store.add_uniform(p + "ff.out_weight", {4 * d, d}, 4 * d, seed, false);
        store.add(p + "ff.out_bias", Tensor<T>::zeros({1, d}), false);
    }
    store.add("backbone.final_norm.gain", Tensor<T>::full({1, d}, T(1)), false);
    store.add("backbone.final_norm.bias", Tensor<T>::zeros({1, d}), false);
}

std::vector<std::size_t> tokenize(const std::string& text, std::size_t max_positions) {
    if (max_positions < 2) throw std::invalid_argument("tokenize: max_positions too small");
    std::size_t keep = text.size();
    if (keep + 2 > max_positions) keep = max_positions - 2;
    std::vector<std::size_t> ids;
    ids.reserve(keep + 2);
    ids.push_back(BOS);
    for (std::size_t i = text.size() - keep; i < text.size(); ++i)
        ids.push_back(static_cast<unsigned char>(text[i]));
    ids.push_back(EOS);
    return ids;
}

namespace {

template <typename T>
ad::Var<T> attention(ad::Var<T> x, const Binding<T>& params, const std::string& prefix,
                     const BackboneConfig& cfg) {
    using namespace ad;
    const std::size_t d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    Var<T> qkv = add_row(matmul(x, params[prefix + "attn.qkv_weight"]),
                         params[prefix + "attn.qkv_bias"]);
    std::vector<Var<T>> heads;
    const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));
    for (std::size_t h = 0; h < H; ++h) {
        Var<T> q = slice_cols(qkv, h * dh, (h + 1) * dh);
        Var<T> k = slice_cols(qkv, d + h * dh, d + (h + 1) * dh);
        Var<T> v = slice_cols(qkv, 2 * d + h * dh, 2 * d + (h + 1) * dh);
        Var<T> scores = scale(matmul_nt(q, k), inv_sqrt_dh);
        heads.push_back(matmul(causal_softmax(scores), v));
    }
    Var<T> merged = concat_cols(heads);
    return add_row(matmul(merged, params[prefix + "attn.out_weight"]),
                   params[prefix + "attn.out_bias"]);
}

}  // namespace

template <typename T>
ad::Var<T> run_blocks(ad::Var<T> x, const Binding<T>& params, const BackboneConfig& cfg) {
    using namespace ad;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "backbone.block" + std::to_string(l) + ".";
        Var<T> normed = layer_norm_rows(x, params[p + "attn_norm.gain"],
                                        params[p + "attn_norm.bias"]);
        x = add(x, attention(normed, params, p, cfg));
        Var<T> normed2 = layer_norm_rows(x, params[p + "ff_norm.gain"],
                                         params[p + "ff_norm.bias"]);
        Var<T> hidden = gelu(add_row(matmul(normed2, params[p + "ff.in_weight"]),
                                     params[p + "ff.in_bias"]));
        Var<T> ff = add_row(matmul(hidden, params[p + "ff.out_weight"]),
                            params[p + "ff.out_bias"]);
        x = add(x, ff);
    }
    return layer_norm_rows(x, params["backbone.final_norm.gain"],
                           params["backbone.final_norm.bias"]);
}

template <typename T>
Tensor<T> encode_prompt(const std::vector<std::size_t>& tokens, const ParamStore<T>& store,
                        const BackboneConfig& cfg) {
    using namespace ad;
    if (tokens.empty()) throw std::invalid_argument("encode_prompt: empty token sequence");
    if (tokens.size() > cfg.max_positions)
        throw std::invalid_argument("encode_prompt: sequence over capacity");
    Graph<T> g;
    g.set_grad_enabled(false);
    Binding<T> params(g, store);
    Var<T> emb = gather_rows(params["backbone.token_embedding"], tokens);
    Var<T> pos = slice_rows(params["backbone.position_embedding"], 0, tokens.size());
    Var<T> out = run_blocks(add(emb, pos), params, cfg);
    Var<T> last = slice_rows(out, tokens.size() - 1, tokens.size());
    return last.value();
}

template <typename T>
ad::Var<T> forward_causal(ad::Var<T> embeddings, const Binding<T>& params,
                          const BackboneConfig& cfg) {
    using namespace ad;
    const std::size_t N = embeddings.rows();
    if (N == 0) throw std::invalid_argument("forward_causal: empty input");
    if (N > cfg.max_positions)
        throw std::invalid_argument("forward_causal: sequence over capacity");
    if (embeddings.cols() != cfg.d_model)
        throw std::invalid_argument("forward_causal: embedding width mismatch");
    Var<T> pos = slice_rows(params["backbone.position_embedding"], 0, N);
    return run_blocks(add(embeddings, pos), params, cfg);
}

template void init_frozen<float>(ParamStore<float>&, const BackboneConfig&, std::uint64_t);
template void init_frozen<double>(ParamStore<double>&, const BackboneConfig&, std::uint64_t);
template ad::Var<float> run_blocks<float>(ad::Var<float>, const Binding<float>&,
                                          const BackboneConfig&);
template ad::Var<double> run_blocks<double>(ad::Var<double>, const Binding<double>&,
                                            const BackboneConfig&);
template Tensor<float> encode_prompt<float>(const std::vector<std::size_t>&,
                                            const ParamStore<float>&, const BackboneConfig&);
template Tensor<double> encode_prompt<double>(const std::vector<std::size_t>&,
                                              const ParamStore<double>&, const BackboneConfig&);
template ad::Var<float> forward_causal<float>(ad::Var<float>, const Binding<float>&,
                                              const BackboneConfig&);
template ad::Var<double> forward_causal<double>(ad::Var<double>, const Binding<double>&,
                                                const BackboneConfig&);

}  // namespace talon::backbone
