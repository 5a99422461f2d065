#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "talon/tensor.hpp"

namespace talon::ad {

template <typename T>
class Graph;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Node*> parents;
    std::function<void(Node&)> backprop;  // scatter this->grad into parents

    void accumulate(const Tensor<T>& g) {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
};

/// Handle into a Graph; cheap to copy, valid while the graph lives.
template <typename T>
struct Var {
    Node<T>* node = nullptr;
    Graph<T>* graph = nullptr;

    const Tensor<T>& value() const { return node->value; }
    const Tensor<T>& grad() const { return node->grad; }
    bool has_grad() const { return !node->grad.empty(); }
    std::size_t rows() const { return node->value.rows(); }
    std::size_t cols() const { return node->value.cols(); }
    explicit operator bool() const { return node != nullptr; }
};

/// Arena of nodes for one forward/backward pass. Creation order is a valid
/// topological order, so backward is a single reverse sweep.
template <typename T>
class Graph {
public:
    Var<T> constant(Tensor<T> v) { return leaf(std::move(v), false); }

    Var<T> leaf(Tensor<T> v, bool requires_grad) {
        auto n = std::make_unique<Node<T>>();
        n->value = std::move(v);
        n->requires_grad = requires_grad && grad_enabled_;
        Node<T>* raw = n.get();
        nodes_.push_back(std::move(n));
        return Var<T>{raw, this};
    }

    Var<T> make(Tensor<T> v, std::vector<Node<T>*> parents,
                std::function<void(Node<T>&)> bp) {
        auto n = std::make_unique<Node<T>>();
        n->value = std::move(v);
        bool need = false;
        if (grad_enabled_)
            for (Node<T>* p : parents) need = need || p->requires_grad;
        n->requires_grad = need;
        if (need) {
            n->parents = std::move(parents);
            n->backprop = std::move(bp);
        }
        Node<T>* raw = n.get();
        nodes_.push_back(std::move(n));
        return Var<T>{raw, this};
    }

    /// Seeds d(loss)/d(loss)=1 and runs the reverse sweep. Loss must be scalar.
    void backward(Var<T> loss) {
        if (loss.node->value.size() != 1)
            throw std::invalid_argument("backward: loss must be scalar");
        loss.node->accumulate(Tensor<T>::full(loss.node->value.shape(), T(1)));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>& n = **it;
            if (!n.grad.empty() && n.backprop) n.backprop(n);
        }
    }

    /// With grads disabled, make() drops parents/backprop and leaves are plain
    /// constants; forward values are unchanged.
    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }

    std::size_t node_count() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    bool grad_enabled_ = true;
};

// ---- elementwise / scalar ----
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div_elem(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T c);
template <typename T> Var<T> add_const(Var<T> a, T c);
/// a * s where s is a 1x1 graph scalar.
template <typename T> Var<T> mul_by_scalar(Var<T> a, Var<T> s);
/// Broadcast-add a 1xC row vector to every row of an RxC matrix.
template <typename T> Var<T> add_row(Var<T> m, Var<T> row);

// ---- unary ----
template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> sigmoid_v(Var<T> a);
template <typename T> Var<T> tanh_v(Var<T> a);
template <typename T> Var<T> softplus_v(Var<T> a);
template <typename T> Var<T> exp_v(Var<T> a);
template <typename T> Var<T> log_v(Var<T> a);
template <typename T> Var<T> square(Var<T> a);
template <typename T> Var<T> sqrt_v(Var<T> a);
template <typename T> Var<T> normal_cdf_v(Var<T> a);

// ---- linear algebra ----
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// a (m x k) times b^T where b is (n x k); result (m x n).
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);

// ---- shape ----
template <typename T> Var<T> slice_rows(Var<T> a, std::size_t r0, std::size_t r1);
template <typename T> Var<T> slice_cols(Var<T> a, std::size_t c0, std::size_t c1);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& rows);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& cols);
/// Row gather (embedding lookup): out row i = a row idx[i].
template <typename T> Var<T> gather_rows(Var<T> a, const std::vector<std::size_t>& idx);
/// Column gather from a 1xN row vector: out[0,i] = a[0, idx[i]].
template <typename T> Var<T> gather_cols(Var<T> a, const std::vector<std::size_t>& idx);
/// RxC -> 1xR vector of row means.
template <typename T> Var<T> mean_rows_to_row(Var<T> a);
/// NxN -> 1xN main diagonal.
template <typename T> Var<T> diag(Var<T> a);

// ---- reductions ----
template <typename T> Var<T> sum_all(Var<T> a);
template <typename T> Var<T> mean_all(Var<T> a);

// ---- structured ----
/// Keeps the top-k entries per the keep mask semantics of noisy gating:
/// non-kept (or disallowed) entries become -inf and receive no gradient.
/// `allowed` may be empty (all allowed). Ties break toward lower index.
template <typename T>
Var<T> keep_topk_row(Var<T> row, std::size_t k, const std::vector<std::uint8_t>& allowed);

/// Row-wise softmax; -inf entries map to exactly 0. Throws on fully masked rows.
template <typename T> Var<T> softmax_rows(Var<T> a);

/// NxN attention scores; row i is softmaxed over columns 0..i only.
template <typename T> Var<T> causal_softmax(Var<T> a);

template <typename T> Var<T> log_softmax_rows(Var<T> a);

/// Row-wise x / ||x||_2. Throws "degenerate embedding" when a row norm
/// falls below 1e-12.
template <typename T> Var<T> normalize_rows(Var<T> a);

template <typename T>
Var<T> layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

/// Same-padded 1-D convolution: x (Cin x S), kernel (Cout x Cin x K) -> (Cout x S).
template <typename T> Var<T> conv1d_same(Var<T> x, Var<T> kernel);

/// Mean squared error against a constant target of identical shape.
template <typename T> Var<T> mse_against(Var<T> pred, const Tensor<T>& target);

}  // namespace talon::ad
