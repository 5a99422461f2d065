#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "talon/adam.hpp"
#include "talon/autodiff.hpp"
#include "talon/gradcheck.hpp"
#include "talon/numerics.hpp"
#include "talon/params.hpp"
#include "talon/rng.hpp"

using namespace talon;
using ad::Graph;
using ad::Var;

namespace {

constexpr double INF = std::numeric_limits<double>::infinity();

/// Runs grad_check over an autodiff expression built from the store's params.
double op_grad_err(ParamStore<double>& store,
                   const std::function<ad::Var<double>(Graph<double>&, const Binding<double>&)>& build,
                   double eps = 1e-6) {
    auto loss_fn = [&](ParamStore<double>& s,
                       std::unordered_map<std::string, Tensor<double>>* grads) {
        Graph<double> g;
        Binding<double> bound(g, s);
        Var<double> out = build(g, bound);
        Var<double> loss = out.value().size() == 1 ? out : ad::mean_all(ad::square(out));
        if (grads) {
            g.backward(loss);
            for (const auto& p : s.all())
                if (p.trainable) (*grads)[p.name] = bound.grad_of(p.name);
        }
        return static_cast<double>(loss.value()[0]);
    };
    return grad_check(loss_fn, store, eps).max_rel_err;
}

ParamStore<double> random_store(std::initializer_list<std::pair<const char*, std::vector<std::size_t>>> defs,
                                std::uint64_t seed = 7) {
    ParamStore<double> store;
    for (const auto& [name, shape] : defs) {
        Rng rng(seed, std::string("test/") + name);
        Tensor<double> t(shape);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
        store.add(name, std::move(t), true);
    }
    return store;
}

}  // namespace

TEST_CASE("softmax basics") {
    auto u = softmax({1.0, 1.0, 1.0});
    CHECK(u[0] == doctest::Approx(1.0 / 3).epsilon(1e-9));
    CHECK(u[2] == doctest::Approx(1.0 / 3).epsilon(1e-9));

    // hand oracle: exp(0.5)=1.64872, exp(0.9)=2.45960
    auto m = softmax({0.5, -INF, 0.9});
    CHECK(m[0] == doctest::Approx(0.4013).epsilon(1e-4));
    CHECK(m[1] == 0.0);
    CHECK(m[2] == doctest::Approx(0.5987).epsilon(1e-4));

    CHECK(softmax({5.0})[0] == doctest::Approx(1.0));
    CHECK_THROWS_WITH_AS(softmax({-INF, -INF}), "softmax: fully masked", std::invalid_argument);

    // probability vector for arbitrary finite inputs
    Rng rng(3, "softmax/fuzz");
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(1 + std::size_t(rng.uniform() * 8));
        for (auto& x : v) x = rng.uniform(-50.0, 50.0);
        auto p = softmax(v);
        double sum = 0;
        for (double x : p) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softplus") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-4));
    CHECK(softplus(100.0) == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(softplus(-100.0) >= 0.0);
    CHECK(softplus(-100.0) < 1e-40);
}

TEST_CASE("sigmoid and normal cdf") {
    CHECK(sigmoid(-1.0) == doctest::Approx(0.26894).epsilon(1e-5));
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(10.0) == doctest::Approx(1.0));
}

TEST_CASE("rng determinism and replay") {
    Rng a(42, "stream");
    Rng b(42, "stream");
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42, "other");
    CHECK(c.next_u64() != Rng(42, "stream").next_u64());

    // counter-based replay
    Rng d(42, "stream");
    std::vector<double> first;
    for (int i = 0; i < 10; ++i) first.push_back(d.normal());
    d.set_counter(0);
    for (int i = 0; i < 10; ++i) CHECK(d.normal() == first[std::size_t(i)]);

    // normals look standard: mean near 0, var near 1
    Rng e(1, "normal");
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = e.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(s / n == doctest::Approx(0.0).epsilon(0.05));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("adam hand-checked step") {
    ParamStore<float> store;
    store.add("w", Tensor<float>::scalar(1.0f), true);
    Adam<float> adam(AdamHyper{1e-3, 0.9, 0.999, 1e-8});
    std::unordered_map<std::string, Tensor<float>> grads;
    grads.emplace("w", Tensor<float>::scalar(1.0f));
    adam.step(store, grads);
    // m-hat = 1, v-hat = 1 by hand
    CHECK(store.get("w").tensor[0] == doctest::Approx(0.9990).epsilon(1e-4));
}

TEST_CASE("adam zero gradient leaves params") {
    ParamStore<float> store;
    store.add("w", Tensor<float>::row({1.5f, -2.0f}), true);
    Adam<float> adam;
    std::unordered_map<std::string, Tensor<float>> grads;
    grads.emplace("w", Tensor<float>::row({0.0f, 0.0f}));
    for (int i = 0; i < 5; ++i) adam.step(store, grads);
    CHECK(store.get("w").tensor[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(store.get("w").tensor[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("adam freeze contract is bit-exact") {
    ParamStore<float> store;
    store.add("frozen", Tensor<float>::row({0.25f, -0.75f}), false);
    const auto before = store.get("frozen").tensor.values();
    Adam<float> adam;
    std::unordered_map<std::string, Tensor<float>> grads;
    grads.emplace("frozen", Tensor<float>::row({10.0f, -3.0f}));
    for (int i = 0; i < 100; ++i) adam.step(store, grads);
    CHECK(store.get("frozen").tensor.values() == before);
}

TEST_CASE("adam shape mismatch") {
    ParamStore<float> store;
    store.add("w", Tensor<float>::row({1.0f, 2.0f}), true);
    Adam<float> adam;
    std::unordered_map<std::string, Tensor<float>> grads;
    grads.emplace("w", Tensor<float>::row({1.0f}));
    CHECK_THROWS_AS(adam.step(store, grads), std::invalid_argument);
}

TEST_CASE("grad_check quadratic exactness") {
    ParamStore<double> store;
    store.add("w", Tensor<double>::scalar(3.0), true);
    auto loss_fn = [](ParamStore<double>& s,
                      std::unordered_map<std::string, Tensor<double>>* grads) {
        Graph<double> g;
        Binding<double> bound(g, s);
        Var<double> loss = ad::square(bound["w"]);
        if (grads) {
            g.backward(loss);
            (*grads)["w"] = bound.grad_of("w");
        }
        return loss.value()[0];
    };
    auto res = grad_check(loss_fn, store, 1e-5);
    CHECK(res.checked == 1);
    CHECK(res.max_rel_err < 1e-8);
}

TEST_CASE("grad_check skips frozen-only stores") {
    ParamStore<double> store;
    store.add("frozen", Tensor<double>::scalar(2.0), false);
    auto loss_fn = [](ParamStore<double>& s,
                      std::unordered_map<std::string, Tensor<double>>*) {
        return s.get("frozen").tensor[0] * s.get("frozen").tensor[0];
    };
    auto res = grad_check(loss_fn, store, 1e-5);
    CHECK(res.checked == 0);
    CHECK(res.max_rel_err == 0.0);
}

TEST_CASE("matmul identity and basis selection") {
    Graph<double> g;
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Var<double> I = g.constant(eye);
    Var<double> X = g.constant(Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
    Var<double> Y = ad::matmul(I, X);
    CHECK(Y.value().values() == X.value().values());

    // basis row vector picks the matching row of W
    Var<double> e0 = g.constant(Tensor<double>::row({1, 0, 0}));
    Var<double> row = ad::matmul(e0, X);
    CHECK(row.value()[0] == 1.0);
    CHECK(row.value()[1] == 2.0);
}

TEST_CASE("conv1d delta kernel is identity") {
    Graph<double> g;
    Var<double> x = g.constant(Tensor<double>::row({1, 2, 3}));
    Var<double> k = g.constant(Tensor<double>({1, 1, 1}, {1.0}));
    Var<double> y = ad::conv1d_same(x, k);
    CHECK(y.value().values() == std::vector<double>{1, 2, 3});
}

TEST_CASE("primitive gradients vs central differences") {
    // matmul
    {
        auto store = random_store({{"A", {3, 4}}, {"B", {4, 2}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::matmul(b["A"], b["B"]);
              }) < 1e-6);
    }
    // matmul_nt
    {
        auto store = random_store({{"A", {3, 4}}, {"B", {2, 4}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::matmul_nt(b["A"], b["B"]);
              }) < 1e-6);
    }
    // conv1d
    {
        auto store = random_store({{"x", {2, 7}}, {"k", {3, 2, 3}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::conv1d_same(b["x"], b["k"]);
              }) < 1e-6);
    }
    // layer norm
    {
        auto store = random_store({{"x", {3, 5}}, {"g", {1, 5}}, {"b", {1, 5}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& bd) {
                  return ad::layer_norm_rows(bd["x"], bd["g"], bd["b"]);
              }) < 1e-6);
    }
    // unary chain: gelu, sigmoid, tanh, softplus, exp, sqrt via softplus
    {
        auto store = random_store({{"x", {2, 6}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::gelu(ad::sigmoid_v(ad::tanh_v(ad::softplus_v(b["x"]))));
              }) < 1e-6);
    }
    // relu away from the kink
    {
        ParamStore<double> store;
        store.add("x", Tensor<double>::row({0.5, -0.7, 1.2, -2.0}), true);
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::relu(b["x"]);
              }) < 1e-6);
    }
    // softmax / log_softmax / causal softmax
    {
        auto store = random_store({{"x", {4, 4}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::softmax_rows(b["x"]);
              }) < 1e-6);
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::log_softmax_rows(b["x"]);
              }) < 1e-6);
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::causal_softmax(b["x"]);
              }) < 1e-6);
    }
    // normalize + diag + normal cdf
    {
        auto store = random_store({{"x", {3, 3}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::diag(ad::normalize_rows(b["x"]));
              }) < 1e-6);
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::normal_cdf_v(b["x"]);
              }) < 1e-6);
    }
    // elementwise binary + broadcast + reductions
    {
        auto store = random_store({{"a", {3, 4}}, {"b", {3, 4}}, {"r", {1, 4}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& bd) {
                  auto prod = ad::mul(bd["a"], bd["b"]);
                  auto mixed = ad::add_row(prod, bd["r"]);
                  return ad::div_elem(mixed, ad::add_const(ad::square(bd["b"]), 1.0));
              }) < 1e-6);
    }
    // lstm-style composite: slices, mul, tanh on running state
    {
        auto store = random_store({{"x", {1, 4}}, {"w", {1, 8}}, {"u", {2, 8}}});
        CHECK(op_grad_err(store, [](Graph<double>& g, const Binding<double>& b) {
                  Var<double> h = g.constant(Tensor<double>::zeros({1, 2}));
                  for (std::size_t t = 0; t < 4; ++t) {
                      Var<double> xt = ad::slice_cols(b["x"], t, t + 1);
                      Var<double> gates =
                          ad::add(ad::matmul(xt, b["w"]), ad::matmul(h, b["u"]));
                      Var<double> i = ad::sigmoid_v(ad::slice_cols(gates, 0, 2));
                      Var<double> c = ad::tanh_v(ad::slice_cols(gates, 2, 4));
                      h = ad::mul(i, c);
                  }
                  return h;
              }) < 1e-6);
    }
    // keep_topk + softmax gating path
    {
        ParamStore<double> store;
        store.add("h", Tensor<double>::row({0.8, 0.1, -0.4}), true);
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  return ad::softmax_rows(ad::keep_topk_row(b["h"], 2, {}));
              }) < 1e-6);
    }
    // gathers and concats
    {
        auto store = random_store({{"m", {4, 3}}});
        CHECK(op_grad_err(store, [](Graph<double>&, const Binding<double>& b) {
                  auto r1 = ad::gather_rows(b["m"], {2, 0, 2});
                  auto parts = std::vector<Var<double>>{ad::slice_rows(r1, 0, 1),
                                                        ad::slice_rows(r1, 1, 3)};
                  return ad::mean_rows_to_row(ad::concat_rows(parts));
              }) < 1e-6);
    }
}

TEST_CASE("backward requires scalar loss") {
    Graph<double> g;
    Var<double> x = g.leaf(Tensor<double>::row({1, 2}), true);
    CHECK_THROWS_AS(g.backward(x), std::invalid_argument);
}

TEST_CASE("mse_against value and gradient") {
    ParamStore<double> store;
    store.add("p", Tensor<double>::row({1.0, 2.0, 3.0}), true);
    Tensor<double> target = Tensor<double>::row({2.0, 2.0, 2.0});
    auto err = op_grad_err(store, [target](Graph<double>&, const Binding<double>& b) {
        return ad::mse_against(b["p"], target);
    });
    CHECK(err < 1e-6);
    Graph<double> g;
    Binding<double> bound(g, store);
    CHECK(ad::mse_against(bound["p"], target).value()[0] == doctest::Approx(2.0 / 3));
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex(std::string("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
