#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "talon/complexity.hpp"
#include "talon/numerics.hpp"
#include "talon/rng.hpp"

using namespace talon;

namespace {

// Brute-force decomposition oracle: a literal, standalone translation of the
// classical additive scheme, kept independent of the library implementation.
struct OracleDecomp {
    std::vector<double> trend, seasonal, residual;
};

OracleDecomp oracle_decompose(const std::vector<double>& s, std::size_t period) {
    const std::size_t n = s.size();
    OracleDecomp d;
    d.trend.assign(n, 0.0);
    d.seasonal.assign(n, 0.0);
    d.residual.assign(n, 0.0);

    std::vector<double> w;
    std::ptrdiff_t off;
    if (period % 2 == 0 && period >= 2) {
        w.assign(period + 1, 1.0);
        w.front() = w.back() = 0.5;
        off = std::ptrdiff_t(period / 2);
    } else {
        w.assign(period, 1.0);
        off = std::ptrdiff_t(period / 2);
    }
    for (std::size_t t = 0; t < n; ++t) {
        double num = 0, den = 0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            std::ptrdiff_t i = std::ptrdiff_t(t) + std::ptrdiff_t(j) - off;
            if (i < 0 || i >= std::ptrdiff_t(n)) continue;
            num += w[j] * s[std::size_t(i)];
            den += w[j];
        }
        d.trend[t] = num / den;
    }
    if (n >= 2 * period && period >= 2) {
        std::size_t lo = std::size_t(off), hi = n - (w.size() - 1 - std::size_t(off));
        if (hi <= lo || hi - lo < period) {
            lo = 0;
            hi = n;
        }
        std::vector<double> sum(period, 0.0);
        std::vector<std::size_t> cnt(period, 0);
        for (std::size_t t = lo; t < hi; ++t) {
            sum[t % period] += s[t] - d.trend[t];
            ++cnt[t % period];
        }
        double grand = 0;
        for (std::size_t p = 0; p < period; ++p) {
            if (cnt[p]) sum[p] /= double(cnt[p]);
            grand += sum[p];
        }
        grand /= double(period);
        for (std::size_t t = 0; t < n; ++t) d.seasonal[t] = sum[t % period] - grand;
    }
    for (std::size_t t = 0; t < n; ++t) d.residual[t] = s[t] - d.trend[t] - d.seasonal[t];
    return d;
}

std::vector<double> ramp(std::size_t n) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = double(i);
    return s;
}

std::vector<double> seeded_noise(std::size_t n, std::uint64_t seed) {
    Rng rng(seed, "test/noise");
    std::vector<double> s(n);
    for (auto& x : s) x = rng.normal();
    return s;
}

}  // namespace

TEST_CASE("decompose constant series") {
    std::vector<double> s(48, 7.0);
    Decomposition d = decompose(s, 24);
    for (std::size_t t = 0; t < s.size(); ++t) {
        CHECK(d.trend[t] == doctest::Approx(7.0).epsilon(1e-12));
        CHECK(d.seasonal[t] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(d.residual[t] == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("decompose square wave: interior residual vanishes") {
    const std::size_t p = 8, n = 4 * p;
    std::vector<double> s(n);
    for (std::size_t t = 0; t < n; ++t) s[t] = (t % p) < p / 2 ? 1.0 : -1.0;
    Decomposition d = decompose(s, p);
    double resid_var = 0.0;
    std::size_t cnt = 0;
    for (std::size_t t = p; t + p < n; ++t) {
        resid_var += d.residual[t] * d.residual[t];
        ++cnt;
    }
    resid_var /= double(cnt);
    CHECK(resid_var < 1e-6 * variance(s));
}

TEST_CASE("decompose short patch: seasonal fallback to zero") {
    std::vector<double> s = {1, 5, 2, 8, 3};
    Decomposition d = decompose(s, 24);
    for (double v : d.seasonal) CHECK(v == 0.0);
}

TEST_CASE("decompose errors") {
    CHECK_THROWS_AS(decompose({1, 2}, 4), std::invalid_argument);
    CHECK_THROWS_AS(decompose({1, 2, 3}, 0), std::invalid_argument);
}

TEST_CASE("decompose additivity and oracle agreement") {
    Rng rng(11, "fuzz");
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 16 + std::size_t(rng.uniform() * 96);
        std::size_t period = 2 + std::size_t(rng.uniform() * 23);
        std::vector<double> s(n);
        for (auto& x : s) x = rng.uniform(-5, 5);
        Decomposition d = decompose(s, period);
        OracleDecomp o = oracle_decompose(s, period);
        for (std::size_t t = 0; t < n; ++t) {
            CHECK(std::abs(d.trend[t] + d.seasonal[t] + d.residual[t] - s[t]) < 1e-6);
            CHECK(d.trend[t] == doctest::Approx(o.trend[t]).epsilon(1e-9));
            CHECK(d.seasonal[t] == doctest::Approx(o.seasonal[t]).epsilon(1e-9));
        }
    }
}

TEST_CASE("trend strength") {
    CHECK(trend_strength(std::vector<double>(96, 3.5), 24) == 0.0);
    CHECK(trend_strength(ramp(96), 24) >= 0.99);
    CHECK(trend_strength(seeded_noise(96, 5), 24) < 0.3);
}

TEST_CASE("local variation") {
    CHECK(local_variation(std::vector<double>(96, 2.0)) ==
          doctest::Approx(0.26894).epsilon(1e-5));
    std::vector<double> alt(96);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 1.0 : 0.0;
    CHECK(local_variation(alt) == doctest::Approx(0.4239).epsilon(1e-3));

    // strictly increases with scale for non-constant input
    std::vector<double> s = seeded_noise(64, 9);
    std::vector<double> s10(s);
    for (auto& x : s10) x *= 10.0;
    CHECK(local_variation(s10) > local_variation(s));
}

TEST_CASE("lag-1 autocorrelation") {
    CHECK(autocorr1({1, 2, 3, 4, 5}) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(autocorr1(std::vector<double>(10, 4.0)) == 0.0);
    std::vector<double> alt = {2, 5, 2, 5, 2, 5, 2, 5};
    CHECK(autocorr1(alt) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("complexity vector composition") {
    ComplexityVector c = complexity_vector(std::vector<double>(96, 1.0), 24);
    CHECK(c.trend_strength == doctest::Approx(0.0).epsilon(1e-3));
    CHECK(c.local_variation == doctest::Approx(0.2689).epsilon(1e-3));
    CHECK(c.autocorr == doctest::Approx(0.0).epsilon(1e-3));

    ComplexityVector r = complexity_vector(ramp(96), 24);
    CHECK(r.trend_strength >= 0.99);
    CHECK(r.local_variation > 0.2689);
    CHECK(r.autocorr == doctest::Approx(1.0).epsilon(1e-6));

    ComplexityVector n = complexity_vector(seeded_noise(96, 5), 24);
    CHECK(n.trend_strength < 0.3);
    CHECK(n.autocorr < 0.4);
    CHECK(n.local_variation > 0.2689);
    CHECK(n.local_variation < 0.9);
}

TEST_CASE("complexity stays in the unit cube (fuzz)") {
    Rng rng(13, "cube");
    for (int trial = 0; trial < 10000; ++trial) {
        std::size_t n = 3 + std::size_t(rng.uniform() * 61);
        std::vector<double> s(n);
        double base = rng.uniform(-100, 100), scale = rng.uniform(0, 50);
        for (auto& x : s) x = base + scale * rng.normal();
        ComplexityVector c = complexity_vector(s, 24);
        CHECK(c.trend_strength >= 0.0);
        CHECK(c.trend_strength <= 1.0);
        CHECK(c.local_variation > 0.0);
        CHECK(c.local_variation < 1.0);
        CHECK(c.autocorr >= 0.0);
        CHECK(c.autocorr <= 1.0);
    }
}

TEST_CASE("shift invariance; scale invariance of c1 and c3") {
    std::vector<double> s = seeded_noise(96, 21);
    ComplexityVector a = complexity_vector(s, 24);
    std::vector<double> shifted(s);
    for (auto& x : shifted) x += 123.456;
    ComplexityVector b = complexity_vector(shifted, 24);
    CHECK(std::abs(a.trend_strength - b.trend_strength) < 1e-6);
    CHECK(std::abs(a.local_variation - b.local_variation) < 1e-6);
    CHECK(std::abs(a.autocorr - b.autocorr) < 1e-6);

    std::vector<double> scaled(s);
    for (auto& x : scaled) x *= 7.0;
    ComplexityVector c = complexity_vector(scaled, 24);
    CHECK(std::abs(a.trend_strength - c.trend_strength) < 1e-6);
    CHECK(std::abs(a.autocorr - c.autocorr) < 1e-6);
    CHECK(c.local_variation > a.local_variation);  // c2 deliberately scale-sensitive
}
