#pragma once

#include <cstddef>
#include <vector>

namespace talon {

/// Interpretable per-patch descriptor: trend strength, local variation,
/// lag-1 temporal dependency. All components live in [0, 1].
struct ComplexityVector {
    double trend_strength = 0.0;  // c1
    double local_variation = 0.0;  // c2
    double autocorr = 0.0;  // c3
};

/// Additive decomposition s = trend + seasonal + residual.
struct Decomposition {
    std::vector<double> trend;
    std::vector<double> seasonal;
    std::vector<double> residual;
    std::size_t period = 0;
};

/// Classical additive decomposition: centered moving-average trend of window
/// `period` (window shrinks at the edges), per-phase-mean seasonal of the
/// detrended signal (centered to sum zero), residual as remainder.
/// When the patch is shorter than two periods the seasonal part is all-zero.
Decomposition decompose(const std::vector<double>& s, std::size_t period);

/// Share of deseasonalized variance explained by the trend, clamped to [0,1].
/// Zero-variance deseasonalized input maps to 0.
double trend_strength(const std::vector<double>& s, std::size_t period);

/// sigmoid(log1p(std(first differences)) - 1); strictly inside (0, 1).
double local_variation(const std::vector<double>& s);

/// |lag-1 Pearson autocorrelation|; constant input maps to 0.
double autocorr1(const std::vector<double>& s);

ComplexityVector complexity_vector(const std::vector<double>& s, std::size_t period);

}  // namespace talon
