#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "talon/params.hpp"
#include "talon/tensor.hpp"

namespace talon {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Central-difference verification of a deterministic scalar loss over the
/// trainable parameters of `store` (f64). The callable must not mutate any
/// hidden state between calls; stochastic paths have to be frozen first.
///
/// `loss_and_grads(store, grads_out)` returns the loss; when grads_out is
/// non-null it also fills analytic gradients per trainable parameter.
inline GradCheckResult grad_check(
    const std::function<double(ParamStore<double>&,
                               std::unordered_map<std::string, Tensor<double>>*)>& loss_and_grads,
    ParamStore<double>& store, double eps) {
    std::unordered_map<std::string, Tensor<double>> analytic;
    double base = loss_and_grads(store, &analytic);
    if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");

    GradCheckResult res;
    for (auto& p : store.all()) {
        if (!p.trainable) continue;
        auto it = analytic.find(p.name);
        for (std::size_t i = 0; i < p.tensor.size(); ++i) {
            double orig = p.tensor[i];
            p.tensor[i] = orig + eps;
            double up = loss_and_grads(store, nullptr);
            p.tensor[i] = orig - eps;
            double dn = loss_and_grads(store, nullptr);
            p.tensor[i] = orig;
            if (!std::isfinite(up) || !std::isfinite(dn))
                throw std::runtime_error("grad_check: non-finite loss at " + p.name);
            double numeric = (up - dn) / (2.0 * eps);
            double a = it == analytic.end() ? 0.0 : it->second[i];
            double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = p.name;
                res.worst_index = i;
            }
        }
    }
    return res;
}

}  // namespace talon
