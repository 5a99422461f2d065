#include "talon/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "talon/numerics.hpp"

namespace talon {

Decomposition decompose(const std::vector<double>& s, std::size_t period) {
    const std::size_t n = s.size();
    if (n < 3) throw std::invalid_argument("decompose: need at least 3 samples");
    if (period < 1) throw std::invalid_argument("decompose: period must be >= 1");

    Decomposition d;
    d.period = period;
    d.trend.resize(n);
    d.seasonal.assign(n, 0.0);
    d.residual.resize(n);

    // Centered moving average of window `period`. Even periods use the
    // symmetric 2xM scheme (half weights at both ends); the window shrinks
    // and renormalizes near the edges.
    const bool even = period % 2 == 0;
    const std::size_t half = period / 2;
    std::vector<double> w(even ? period + 1 : period, 1.0);
    if (even && period >= 2) w.front() = w.back() = 0.5;
    const std::ptrdiff_t off = even ? std::ptrdiff_t(half) : std::ptrdiff_t(period / 2);
    for (std::size_t t = 0; t < n; ++t) {
        double sum = 0.0, wsum = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            std::ptrdiff_t i = std::ptrdiff_t(t) + std::ptrdiff_t(j) - off;
            if (i < 0 || i >= std::ptrdiff_t(n)) continue;
            sum += w[j] * s[std::size_t(i)];
            wsum += w[j];
        }
        d.trend[t] = sum / wsum;
    }

    if (n >= 2 * period && period >= 2) {
        // Per-phase means of the detrended signal, centered to sum zero.
        // Only full-window positions contribute so edge bias in the trend
        // cannot leak into the seasonal estimate.
        std::size_t lo = std::size_t(off);
        std::size_t hi = n - (w.size() - 1 - std::size_t(off));  // exclusive
        if (hi <= lo || hi - lo < period) {
            lo = 0;
            hi = n;
        }
        std::vector<double> phase_sum(period, 0.0);
        std::vector<std::size_t> phase_cnt(period, 0);
        for (std::size_t t = lo; t < hi; ++t) {
            phase_sum[t % period] += s[t] - d.trend[t];
            ++phase_cnt[t % period];
        }
        double grand = 0.0;
        for (std::size_t p = 0; p < period; ++p) {
            if (phase_cnt[p]) phase_sum[p] /= static_cast<double>(phase_cnt[p]);
            grand += phase_sum[p];
        }
        grand /= static_cast<double>(period);
        for (std::size_t t = 0; t < n; ++t) d.seasonal[t] = phase_sum[t % period] - grand;
    }

    for (std::size_t t = 0; t < n; ++t) d.residual[t] = s[t] - d.trend[t] - d.seasonal[t];
    return d;
}

double trend_strength(const std::vector<double>& s, std::size_t period) {
    Decomposition d = decompose(s, period);
    std::vector<double> deseason(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) deseason[t] = s[t] - d.seasonal[t];
    double var_ds = variance(deseason);
    if (var_ds <= 1e-12) return 0.0;
    double c1 = 1.0 - variance(d.residual) / var_ds;
    return std::clamp(c1, 0.0, 1.0);
}

double local_variation(const std::vector<double>& s) {
    if (s.size() < 2) throw std::invalid_argument("local_variation: need at least 2 samples");
    std::vector<double> diff(s.size() - 1);
    for (std::size_t t = 1; t < s.size(); ++t) diff[t - 1] = s[t] - s[t - 1];
    return sigmoid(std::log1p(stddev(diff)) - 1.0);
}

double autocorr1(const std::vector<double>& s) {
    if (s.size() < 3) throw std::invalid_argument("autocorr1: need at least 3 samples");
    std::vector<double> head(s.begin(), s.end() - 1);
    std::vector<double> tail(s.begin() + 1, s.end());
    double c3 = std::abs(pearson(head, tail));
    return std::min(c3, 1.0);
}

ComplexityVector complexity_vector(const std::vector<double>& s, std::size_t period) {
    ComplexityVector c;
    c.trend_strength = trend_strength(s, period);
    c.local_variation = local_variation(s);
    c.autocorr = autocorr1(s);
    return c;
}

}  // namespace talon
