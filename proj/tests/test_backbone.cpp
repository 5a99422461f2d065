#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "talon/backbone.hpp"
#include "talon/numerics.hpp"
#include "talon/params.hpp"
#include "talon/rng.hpp"

using namespace talon;
using namespace talon::backbone;
using ad::Graph;
using ad::Var;

namespace {

BackboneConfig tiny_cfg() {
    BackboneConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 16;
    cfg.n_heads = 4;
    cfg.max_positions = 64;
    return cfg;
}

Tensor<double> random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed, "emb");
    Tensor<double> t({n, d});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
    return t;
}

Tensor<double> causal_out(const ParamStore<double>& store, const BackboneConfig& cfg,
                          const Tensor<double>& emb) {
    Graph<double> g;
    g.set_grad_enabled(false);
    Binding<double> bound(g, store);
    return forward_causal(g.constant(emb), bound, cfg).value();
}

}  // namespace

TEST_CASE("init is deterministic and frozen") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore<float> a, b;
    init_frozen(a, cfg, 99);
    init_frozen(b, cfg, 99);
    CHECK(serialize_params_f32(a) == serialize_params_f32(b));
    for (const auto& p : a.all()) CHECK_FALSE(p.trainable);

    ParamStore<float> c;
    init_frozen(c, cfg, 100);
    CHECK(serialize_params_f32(a) != serialize_params_f32(c));
}

TEST_CASE("parameter count matches the closed-form oracle") {
    BackboneConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 64;
    cfg.n_heads = 4;
    cfg.max_positions = 256;
    // independent hand count: embeddings + per-block attention/ff + norms
    const std::size_t d = 64;
    std::size_t expected = 259 * d + 256 * d;
    std::size_t block = (2 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (2 * d) +
                        (d * 4 * d + 4 * d) + (4 * d * d + d);
    expected += 2 * block + 2 * d;
    CHECK(param_count(cfg) == expected);

    ParamStore<float> store;
    init_frozen(store, cfg, 1);
    CHECK(store.scalar_count(false) == expected);
    CHECK(store.scalar_count(true) == 0);
}

TEST_CASE("init rejects indivisible head width") {
    BackboneConfig cfg = tiny_cfg();
    cfg.n_heads = 3;
    ParamStore<float> store;
    CHECK_THROWS_AS(init_frozen(store, cfg, 1), std::invalid_argument);
}

TEST_CASE("tokenize") {
    CHECK(tokenize("AB", 64) == std::vector<std::size_t>{BOS, 65, 66, EOS});
    CHECK(tokenize("", 64) == std::vector<std::size_t>{BOS, EOS});

    std::string longtext(200, 'x');
    longtext += "TAIL";
    auto ids = tokenize(longtext, 64);
    CHECK(ids.size() == 64);
    CHECK(ids.front() == BOS);
    CHECK(ids.back() == EOS);
    // suffix kept: the last payload bytes spell TAIL
    CHECK(ids[62] == std::size_t('L'));
    CHECK(ids[61] == std::size_t('I'));
    CHECK(ids[60] == std::size_t('A'));
    CHECK(ids[59] == std::size_t('T'));
}

TEST_CASE("encode_prompt determinism and sensitivity") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore<double> store;
    init_frozen(store, cfg, 7);

    auto a = encode_prompt(tokenize("hello world", cfg.max_positions), store, cfg);
    auto b = encode_prompt(tokenize("hello world", cfg.max_positions), store, cfg);
    CHECK(a.values() == b.values());  // bit-for-bit

    auto c = encode_prompt(tokenize("hello worle", cfg.max_positions), store, cfg);
    double delta = 0;
    for (std::size_t i = 0; i < a.size(); ++i) delta += std::abs(a[i] - c[i]);
    CHECK(delta > 0.0);

    // order independence: encoding other prompts in between changes nothing
    encode_prompt(tokenize("unrelated", cfg.max_positions), store, cfg);
    auto d = encode_prompt(tokenize("hello world", cfg.max_positions), store, cfg);
    CHECK(a.values() == d.values());

    CHECK_THROWS_AS(encode_prompt({}, store, cfg), std::invalid_argument);
}

TEST_CASE("forward_causal strict causality (fuzz)") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore<double> store;
    init_frozen(store, cfg, 21);
    Rng rng(5, "fuzz");
    for (std::size_t n = 2; n <= 16; n += 2) {
        Tensor<double> emb = random_embeddings(n, cfg.d_model, 1000 + n);
        Tensor<double> base = causal_out(store, cfg, emb);
        std::size_t j = 1 + std::size_t(rng.uniform() * double(n - 1));
        Tensor<double> perturbed = emb;
        for (std::size_t c = 0; c < cfg.d_model; ++c)
            perturbed.at(j, c) += rng.uniform(-1, 1);
        Tensor<double> out = causal_out(store, cfg, perturbed);
        for (std::size_t r = 0; r < j; ++r)
            for (std::size_t c = 0; c < cfg.d_model; ++c)
                CHECK(std::abs(out.at(r, c) - base.at(r, c)) < 1e-6);
        // and the perturbed position itself must move
        double moved = 0;
        for (std::size_t c = 0; c < cfg.d_model; ++c)
            moved += std::abs(out.at(j, c) - base.at(j, c));
        CHECK(moved > 0.0);
    }
}

TEST_CASE("forward_causal suffix permutation leaves prefix outputs") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore<double> store;
    init_frozen(store, cfg, 22);
    Tensor<double> emb = random_embeddings(6, cfg.d_model, 33);
    Tensor<double> base = causal_out(store, cfg, emb);

    Tensor<double> swapped = emb;  // swap rows 4 and 5 (beyond position 3)
    for (std::size_t c = 0; c < cfg.d_model; ++c)
        std::swap(swapped.at(4, c), swapped.at(5, c));
    Tensor<double> out = causal_out(store, cfg, swapped);
    for (std::size_t r = 0; r <= 3; ++r)
        for (std::size_t c = 0; c < cfg.d_model; ++c)
            CHECK(out.at(r, c) == doctest::Approx(base.at(r, c)).epsilon(1e-12));
}

TEST_CASE("forward_causal single position and capacity") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore<double> store;
    init_frozen(store, cfg, 23);
    Tensor<double> one = random_embeddings(1, cfg.d_model, 3);
    Tensor<double> out1 = causal_out(store, cfg, one);
    Tensor<double> out2 = causal_out(store, cfg, one);
    CHECK(out1.values() == out2.values());

    Tensor<double> over = random_embeddings(cfg.max_positions + 1, cfg.d_model, 4);
    Graph<double> g;
    Binding<double> bound(g, store);
    CHECK_THROWS_AS(forward_causal(g.constant(over), bound, cfg), std::invalid_argument);
}

TEST_CASE("prompt and forecasting paths share one set of weights") {
    BackboneConfig cfg = tiny_cfg();
    ParamStore<double> store;
    init_frozen(store, cfg, 55);
    auto tokens = tokenize("shared weights", cfg.max_positions);
    Tensor<double> p_before = encode_prompt(tokens, store, cfg);
    Tensor<double> emb = random_embeddings(4, cfg.d_model, 5);
    Tensor<double> f_before = causal_out(store, cfg, emb);

    // perturb one attention weight; both entry points must react
    store.get("backbone.block0.attn.qkv_weight").tensor[0] += 0.5;
    Tensor<double> p_after = encode_prompt(tokens, store, cfg);
    Tensor<double> f_after = causal_out(store, cfg, emb);
    double dp = 0, df = 0;
    for (std::size_t i = 0; i < p_before.size(); ++i) dp += std::abs(p_after[i] - p_before[i]);
    for (std::size_t i = 0; i < f_before.size(); ++i) df += std::abs(f_after[i] - f_before[i]);
    CHECK(dp > 0.0);
    CHECK(df > 0.0);
}
