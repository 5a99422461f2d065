#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "talon/autodiff.hpp"
#include "talon/rng.hpp"
#include "talon/tensor.hpp"

namespace talon {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
};

/// Named parameter arrays in insertion order. Insertion order fixes the
/// checkpoint payload order and every deterministic iteration.
template <typename T>
class ParamStore {
public:
    Param<T>& add(const std::string& name, Tensor<T> t, bool trainable) {
        if (index_.count(name)) throw std::invalid_argument("param exists: " + name);
        index_[name] = params_.size();
        params_.push_back(Param<T>{name, std::move(t), trainable});
        return params_.back();
    }

    /// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init on its own
    /// RNG stream, so values do not depend on creation order.
    Param<T>& add_uniform(const std::string& name, std::vector<std::size_t> shape,
                          std::size_t fan_in, std::uint64_t seed, bool trainable) {
        Rng rng(seed, "init/" + name);
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor<T> t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(rng.uniform(-bound, bound));
        return add(name, std::move(t), trainable);
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Param<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown param: " + name);
        return params_[it->second];
    }
    const Param<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown param: " + name);
        return params_[it->second];
    }

    std::vector<Param<T>>& all() { return params_; }
    const std::vector<Param<T>>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    std::size_t scalar_count(bool trainable_only) const {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (!trainable_only || p.trainable) n += p.tensor.size();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& p : params_)
            out.add(p.name, p.tensor.template cast<U>(), p.trainable);
        return out;
    }

private:
    std::vector<Param<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Per-graph leaf bindings of a ParamStore; lets a forward pass look up
/// parameters by name and the optimizer read their gradients afterwards.
template <typename T>
class Binding {
public:
    Binding(ad::Graph<T>& g, const ParamStore<T>& store) {
        for (const auto& p : store.all())
            vars_.emplace(p.name, g.leaf(p.tensor, p.trainable));
    }

    ad::Var<T> operator[](const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw std::invalid_argument("unbound param: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return vars_.count(name) != 0; }

    /// Gradient of a bound parameter; zeros when the parameter was not
    /// touched by the loss.
    Tensor<T> grad_of(const std::string& name) const {
        ad::Var<T> v = (*this)[name];
        if (!v.has_grad()) return Tensor<T>::zeros(v.value().shape());
        return v.grad();
    }

private:
    std::unordered_map<std::string, ad::Var<T>> vars_;
};

/// Little-endian f32 serialization of all parameters in store order; the
/// substrate for checkpoint payloads and freeze hashing.
template <typename T>
std::string serialize_params_f32(const ParamStore<T>& store, const std::string& prefix = "") {
    std::string bytes;
    for (const auto& p : store.all()) {
        if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
        for (std::size_t i = 0; i < p.tensor.size(); ++i) {
            float f = static_cast<float>(p.tensor[i]);
            std::uint32_t u;
            static_assert(sizeof(u) == sizeof(f));
            std::memcpy(&u, &f, sizeof(u));
            bytes.push_back(static_cast<char>(u & 0xFF));
            bytes.push_back(static_cast<char>((u >> 8) & 0xFF));
            bytes.push_back(static_cast<char>((u >> 16) & 0xFF));
            bytes.push_back(static_cast<char>((u >> 24) & 0xFF));
        }
    }
    return bytes;
}

}  // namespace talon
