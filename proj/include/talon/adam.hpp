#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "talon/params.hpp"
#include "talon/tensor.hpp"

namespace talon {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Updates trainable groups only; frozen groups
/// are never touched, even when a gradient is supplied for them.
template <typename T>
class Adam {
public:
    explicit Adam(AdamHyper hyper = {}) : hyper_(hyper) {}

    const AdamHyper& hyper() const { return hyper_; }
    std::uint64_t step_count() const { return step_; }
    void set_step_count(std::uint64_t s) { step_ = s; }

    /// One update over the whole store; `grads` maps param name -> gradient.
    /// Missing entries mean zero gradient (parameter left as-is).
    void step(ParamStore<T>& params,
              const std::unordered_map<std::string, Tensor<T>>& grads) {
        ++step_;
        const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
        for (auto& p : params.all()) {
            if (!p.trainable) continue;
            auto it = grads.find(p.name);
            if (it == grads.end()) continue;
            const Tensor<T>& g = it->second;
            if (!g.same_shape(p.tensor))
                throw std::invalid_argument("adam: gradient shape mismatch for " + p.name);
            Moments& m = moments_[p.name];
            if (m.m.empty()) {
                m.m = Tensor<T>::zeros(p.tensor.shape());
                m.v = Tensor<T>::zeros(p.tensor.shape());
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                double gi = static_cast<double>(g[i]);
                double mi = hyper_.beta1 * static_cast<double>(m.m[i]) + (1.0 - hyper_.beta1) * gi;
                double vi = hyper_.beta2 * static_cast<double>(m.v[i]) + (1.0 - hyper_.beta2) * gi * gi;
                m.m[i] = static_cast<T>(mi);
                m.v[i] = static_cast<T>(vi);
                double mhat = mi / bc1;
                double vhat = vi / bc2;
                p.tensor[i] = static_cast<T>(static_cast<double>(p.tensor[i]) -
                                             hyper_.lr * mhat / (std::sqrt(vhat) + hyper_.eps));
            }
        }
    }

private:
    struct Moments {
        Tensor<T> m, v;
    };
    AdamHyper hyper_;
    std::uint64_t step_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

}  // namespace talon
