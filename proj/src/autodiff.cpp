#include "talon/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace talon::ad {

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
}

template <typename T>
T neg_inf() {
    return -std::numeric_limits<T>::infinity();
}

// Shared helper for elementwise unary ops: y = f(x), dx += g * dfdx(x, y).
template <typename T, typename F, typename DF>
Var<T> unary(Var<T> a, F f, DF dfdx) {
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.value()[i]);
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, dfdx](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g(an->value.shape());
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = n.grad[i] * dfdx(an->value[i], n.value[i]);
        an->accumulate(g);
    });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "add");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    Node<T>*an = a.node, *bn = b.node;
    return a.graph->make(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) an->accumulate(n.grad);
        if (bn->requires_grad) bn->accumulate(n.grad);
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    Node<T>*an = a.node, *bn = b.node;
    return a.graph->make(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) an->accumulate(n.grad);
        if (bn->requires_grad) {
            Tensor<T> g(n.grad.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = -n.grad[i];
            bn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    Node<T>*an = a.node, *bn = b.node;
    return a.graph->make(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) {
            Tensor<T> g(n.grad.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * bn->value[i];
            an->accumulate(g);
        }
        if (bn->requires_grad) {
            Tensor<T> g(n.grad.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * an->value[i];
            bn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> div_elem(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "div");
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
    Node<T>*an = a.node, *bn = b.node;
    return a.graph->make(std::move(out), {an, bn}, [an, bn](Node<T>& n) {
        if (an->requires_grad) {
            Tensor<T> g(n.grad.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] / bn->value[i];
            an->accumulate(g);
        }
        if (bn->requires_grad) {
            Tensor<T> g(n.grad.shape());
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] = -n.grad[i] * an->value[i] / (bn->value[i] * bn->value[i]);
            bn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
    return unary(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_const(Var<T> a, T c) {
    return unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_by_scalar(Var<T> a, Var<T> s) {
    if (s.value().size() != 1) throw std::invalid_argument("mul_by_scalar: s must be 1x1");
    const T sv = s.value()[0];
    Tensor<T> out(a.value().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * sv;
    Node<T>*an = a.node, *sn = s.node;
    return a.graph->make(std::move(out), {an, sn}, [an, sn](Node<T>& n) {
        const T sv2 = sn->value[0];
        if (an->requires_grad) {
            Tensor<T> g(n.grad.shape());
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * sv2;
            an->accumulate(g);
        }
        if (sn->requires_grad) {
            T acc = T(0);
            for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * an->value[i];
            sn->accumulate(Tensor<T>::scalar(acc));
        }
    });
}

template <typename T>
Var<T> add_row(Var<T> m, Var<T> row) {
    if (row.rows() != 1 || row.cols() != m.cols())
        throw std::invalid_argument("add_row: shape mismatch");
    Tensor<T> out(m.value().shape());
    const std::size_t R = m.rows(), C = m.cols();
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
            out.at(r, c) = m.value().at(r, c) + row.value()[c];
    Node<T>*mn = m.node, *rn = row.node;
    return m.graph->make(std::move(out), {mn, rn}, [mn, rn, R, C](Node<T>& n) {
        if (mn->requires_grad) mn->accumulate(n.grad);
        if (rn->requires_grad) {
            Tensor<T> g(rn->value.shape());
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) g[c] += n.grad.at(r, c);
            rn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    return unary(a, [](T x) { return x > T(0) ? x : T(0); },
                 [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
    const T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(0.39894228040143267794);
    return unary(
        a,
        [=](T x) { return x * T(0.5) * (T(1) + std::erf(x * inv_sqrt2)); },
        [=](T x, T) {
            T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            return cdf + x * pdf;
        });
}

template <typename T>
Var<T> sigmoid_v(Var<T> a) {
    return unary(a,
                 [](T x) {
                     if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
                     T e = std::exp(x);
                     return e / (T(1) + e);
                 },
                 [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh_v(Var<T> a) {
    return unary(a, [](T x) { return std::tanh(x); },
                 [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> softplus_v(Var<T> a) {
    return unary(a,
                 [](T x) {
                     if (x > T(0)) return x + std::log1p(std::exp(-x));
                     return std::log1p(std::exp(x));
                 },
                 [](T x, T) {
                     if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
                     T e = std::exp(x);
                     return e / (T(1) + e);
                 });
}

template <typename T>
Var<T> exp_v(Var<T> a) {
    return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_v(Var<T> a) {
    return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> square(Var<T> a) {
    return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> sqrt_v(Var<T> a) {
    return unary(a, [](T x) { return std::sqrt(x); },
                 [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> normal_cdf_v(Var<T> a) {
    const T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(0.39894228040143267794);
    return unary(a,
                 [=](T x) { return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)); },
                 [=](T x, T) { return inv_sqrt2pi * std::exp(T(-0.5) * x * x); });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw std::invalid_argument("matmul: shape mismatch " + a.value().shape_str() +
                                    " x " + b.value().shape_str());
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            T av = a.value().at(i, p);
            if (av == T(0)) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.value().at(p, j);
        }
    Node<T>*an = a.node, *bn = b.node;
    return a.graph->make(std::move(out), {an, bn}, [an, bn, m, k, n](Node<T>& nd) {
        if (an->requires_grad) {  // dA = G B^T
            Tensor<T> g({m, k});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    T gv = nd.grad.at(i, j);
                    if (gv == T(0)) continue;
                    for (std::size_t p = 0; p < k; ++p) g.at(i, p) += gv * bn->value.at(p, j);
                }
            an->accumulate(g);
        }
        if (bn->requires_grad) {  // dB = A^T G
            Tensor<T> g({k, n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    T av = an->value.at(i, p);
                    if (av == T(0)) continue;
                    for (std::size_t j = 0; j < n; ++j) g.at(p, j) += av * nd.grad.at(i, j);
                }
            bn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k)
        throw std::invalid_argument("matmul_nt: shape mismatch " + a.value().shape_str() +
                                    " x " + b.value().shape_str() + "^T");
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T s = T(0);
            for (std::size_t p = 0; p < k; ++p) s += a.value().at(i, p) * b.value().at(j, p);
            out.at(i, j) = s;
        }
    Node<T>*an = a.node, *bn = b.node;
    return a.graph->make(std::move(out), {an, bn}, [an, bn, m, k, n](Node<T>& nd) {
        if (an->requires_grad) {  // dA = G B
            Tensor<T> g({m, k});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    T gv = nd.grad.at(i, j);
                    if (gv == T(0)) continue;
                    for (std::size_t p = 0; p < k; ++p) g.at(i, p) += gv * bn->value.at(j, p);
                }
            an->accumulate(g);
        }
        if (bn->requires_grad) {  // dB = G^T A
            Tensor<T> g({n, k});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    T gv = nd.grad.at(i, j);
                    if (gv == T(0)) continue;
                    for (std::size_t p = 0; p < k; ++p) g.at(j, p) += gv * an->value.at(i, p);
                }
            bn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t r0, std::size_t r1) {
    const std::size_t C = a.cols();
    if (r0 >= r1 || r1 > a.rows()) throw std::invalid_argument("slice_rows: bad range");
    Tensor<T> out({r1 - r0, C});
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(r - r0, c) = a.value().at(r, c);
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, r0, r1, C](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g(an->value.shape());
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = 0; c < C; ++c) g.at(r, c) = n.grad.at(r - r0, c);
        an->accumulate(g);
    });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t c0, std::size_t c1) {
    const std::size_t R = a.rows();
    if (c0 >= c1 || c1 > a.cols()) throw std::invalid_argument("slice_cols: bad range");
    Tensor<T> out({R, c1 - c0});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = a.value().at(r, c);
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, c0, c1, R](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g(an->value.shape());
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = c0; c < c1; ++c) g.at(r, c) = n.grad.at(r, c - c0);
        an->accumulate(g);
    });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& rows) {
    if (rows.empty()) throw std::invalid_argument("concat_rows: empty");
    const std::size_t C = rows[0].cols();
    std::size_t R = 0;
    for (const auto& v : rows) {
        if (v.cols() != C) throw std::invalid_argument("concat_rows: column mismatch");
        R += v.rows();
    }
    Tensor<T> out({R, C});
    std::vector<Node<T>*> parents;
    std::vector<std::size_t> offsets;
    std::size_t r = 0;
    for (const auto& v : rows) {
        offsets.push_back(r);
        for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t c = 0; c < C; ++c) out.at(r + i, c) = v.value().at(i, c);
        r += v.rows();
        parents.push_back(v.node);
    }
    return rows[0].graph->make(std::move(out), parents,
                               [parents, offsets, C](Node<T>& n) {
        for (std::size_t p = 0; p < parents.size(); ++p) {
            if (!parents[p]->requires_grad) continue;
            Tensor<T> g(parents[p]->value.shape());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t c = 0; c < C; ++c)
                    g.at(i, c) = n.grad.at(offsets[p] + i, c);
            parents[p]->accumulate(g);
        }
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& cols) {
    if (cols.empty()) throw std::invalid_argument("concat_cols: empty");
    const std::size_t R = cols[0].rows();
    std::size_t C = 0;
    for (const auto& v : cols) {
        if (v.rows() != R) throw std::invalid_argument("concat_cols: row mismatch");
        C += v.cols();
    }
    Tensor<T> out({R, C});
    std::vector<Node<T>*> parents;
    std::vector<std::size_t> offsets;
    std::size_t c0 = 0;
    for (const auto& v : cols) {
        offsets.push_back(c0);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, c0 + c) = v.value().at(r, c);
        c0 += v.cols();
        parents.push_back(v.node);
    }
    return cols[0].graph->make(std::move(out), parents,
                               [parents, offsets, R](Node<T>& n) {
        for (std::size_t p = 0; p < parents.size(); ++p) {
            if (!parents[p]->requires_grad) continue;
            Tensor<T> g(parents[p]->value.shape());
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < g.cols(); ++c)
                    g.at(r, c) = n.grad.at(r, offsets[p] + c);
            parents[p]->accumulate(g);
        }
    });
}

template <typename T>
Var<T> gather_rows(Var<T> a, const std::vector<std::size_t>& idx) {
    const std::size_t C = a.cols();
    Tensor<T> out({idx.size(), C});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw std::invalid_argument("gather_rows: index out of range");
        for (std::size_t c = 0; c < C; ++c) out.at(i, c) = a.value().at(idx[i], c);
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, idx, C](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g(an->value.shape());
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < C; ++c) g.at(idx[i], c) += n.grad.at(i, c);
        an->accumulate(g);
    });
}

template <typename T>
Var<T> gather_cols(Var<T> a, const std::vector<std::size_t>& idx) {
    if (a.rows() != 1) throw std::invalid_argument("gather_cols: expects a row vector");
    Tensor<T> out({1, idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.cols()) throw std::invalid_argument("gather_cols: index out of range");
        out[i] = a.value()[idx[i]];
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, idx](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g(an->value.shape());
        for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += n.grad[i];
        an->accumulate(g);
    });
}

template <typename T>
Var<T> mean_rows_to_row(Var<T> a) {
    const std::size_t R = a.rows(), C = a.cols();
    Tensor<T> out({1, R});
    for (std::size_t r = 0; r < R; ++r) {
        T s = T(0);
        for (std::size_t c = 0; c < C; ++c) s += a.value().at(r, c);
        out[r] = s / T(C);
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, R, C](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g({R, C});
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) g.at(r, c) = n.grad[r] / T(C);
        an->accumulate(g);
    });
}

template <typename T>
Var<T> diag(Var<T> a) {
    const std::size_t N = a.rows();
    if (a.cols() != N) throw std::invalid_argument("diag: expects a square matrix");
    Tensor<T> out({1, N});
    for (std::size_t i = 0; i < N; ++i) out[i] = a.value().at(i, i);
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, N](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g({N, N});
        for (std::size_t i = 0; i < N; ++i) g.at(i, i) = n.grad[i];
        an->accumulate(g);
    });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    Node<T>* an = a.node;
    return a.graph->make(Tensor<T>::scalar(s), {an}, [an](Node<T>& n) {
        if (!an->requires_grad) return;
        an->accumulate(Tensor<T>::full(an->value.shape(), n.grad[0]));
    });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
    const std::size_t N = a.value().size();
    T s = T(0);
    for (std::size_t i = 0; i < N; ++i) s += a.value()[i];
    Node<T>* an = a.node;
    return a.graph->make(Tensor<T>::scalar(s / T(N)), {an}, [an, N](Node<T>& n) {
        if (!an->requires_grad) return;
        an->accumulate(Tensor<T>::full(an->value.shape(), n.grad[0] / T(N)));
    });
}

template <typename T>
Var<T> keep_topk_row(Var<T> row, std::size_t k, const std::vector<std::uint8_t>& allowed) {
    if (row.rows() != 1) throw std::invalid_argument("keep_topk_row: expects a row vector");
    const std::size_t K = row.cols();
    if (!allowed.empty() && allowed.size() != K)
        throw std::invalid_argument("keep_topk_row: mask size mismatch");
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < K; ++j)
        if (allowed.empty() || allowed[j]) order.push_back(j);
    if (k > order.size()) throw std::invalid_argument("keep_topk_row: k exceeds expert count");
    // stable sort by value desc; ties resolve to the lower index
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return row.value()[a] > row.value()[b];
    });
    std::vector<std::uint8_t> kept(K, 0);
    for (std::size_t i = 0; i < k; ++i) kept[order[i]] = 1;
    Tensor<T> out({1, K});
    for (std::size_t j = 0; j < K; ++j) out[j] = kept[j] ? row.value()[j] : neg_inf<T>();
    Node<T>* an = row.node;
    return row.graph->make(std::move(out), {an}, [an, kept](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g(an->value.shape());
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = kept[j] ? n.grad[j] : T(0);
        an->accumulate(g);
    });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
    const std::size_t R = a.rows(), C = a.cols();
    Tensor<T> out({R, C});
    for (std::size_t r = 0; r < R; ++r) {
        T mx = neg_inf<T>();
        for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, a.value().at(r, c));
        if (!(mx > neg_inf<T>())) throw std::invalid_argument("softmax: fully masked");
        T sum = T(0);
        for (std::size_t c = 0; c < C; ++c) {
            T x = a.value().at(r, c);
            out.at(r, c) = std::isinf(x) && x < T(0) ? T(0) : std::exp(x - mx);
            sum += out.at(r, c);
        }
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) /= sum;
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, R, C](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g({R, C});
        for (std::size_t r = 0; r < R; ++r) {
            T dot = T(0);
            for (std::size_t c = 0; c < C; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
            for (std::size_t c = 0; c < C; ++c)
                g.at(r, c) = n.value.at(r, c) * (n.grad.at(r, c) - dot);
        }
        an->accumulate(g);
    });
}

template <typename T>
Var<T> causal_softmax(Var<T> a) {
    const std::size_t N = a.rows();
    if (a.cols() != N) throw std::invalid_argument("causal_softmax: expects square scores");
    Tensor<T> out({N, N});
    for (std::size_t r = 0; r < N; ++r) {
        T mx = neg_inf<T>();
        for (std::size_t c = 0; c <= r; ++c) mx = std::max(mx, a.value().at(r, c));
        T sum = T(0);
        for (std::size_t c = 0; c <= r; ++c) {
            out.at(r, c) = std::exp(a.value().at(r, c) - mx);
            sum += out.at(r, c);
        }
        for (std::size_t c = 0; c <= r; ++c) out.at(r, c) /= sum;
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, N](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g({N, N});
        for (std::size_t r = 0; r < N; ++r) {
            T dot = T(0);
            for (std::size_t c = 0; c <= r; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
            for (std::size_t c = 0; c <= r; ++c)
                g.at(r, c) = n.value.at(r, c) * (n.grad.at(r, c) - dot);
        }
        an->accumulate(g);
    });
}

template <typename T>
Var<T> log_softmax_rows(Var<T> a) {
    const std::size_t R = a.rows(), C = a.cols();
    Tensor<T> out({R, C});
    for (std::size_t r = 0; r < R; ++r) {
        T mx = neg_inf<T>();
        for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, a.value().at(r, c));
        T sum = T(0);
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(a.value().at(r, c) - mx);
        T lse = mx + std::log(sum);
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) = a.value().at(r, c) - lse;
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, R, C](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g({R, C});
        for (std::size_t r = 0; r < R; ++r) {
            T gsum = T(0);
            for (std::size_t c = 0; c < C; ++c) gsum += n.grad.at(r, c);
            for (std::size_t c = 0; c < C; ++c)
                g.at(r, c) = n.grad.at(r, c) - std::exp(n.value.at(r, c)) * gsum;
        }
        an->accumulate(g);
    });
}

template <typename T>
Var<T> normalize_rows(Var<T> a) {
    const std::size_t R = a.rows(), C = a.cols();
    Tensor<T> out({R, C});
    std::vector<T> norms(R);
    for (std::size_t r = 0; r < R; ++r) {
        T s = T(0);
        for (std::size_t c = 0; c < C; ++c) s += a.value().at(r, c) * a.value().at(r, c);
        norms[r] = std::sqrt(s);
        if (!(norms[r] > T(1e-12))) throw std::invalid_argument("degenerate embedding");
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) = a.value().at(r, c) / norms[r];
    }
    Node<T>* an = a.node;
    return a.graph->make(std::move(out), {an}, [an, norms, R, C](Node<T>& n) {
        if (!an->requires_grad) return;
        Tensor<T> g({R, C});
        for (std::size_t r = 0; r < R; ++r) {
            T dot = T(0);
            for (std::size_t c = 0; c < C; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
            for (std::size_t c = 0; c < C; ++c)
                g.at(r, c) = (n.grad.at(r, c) - n.value.at(r, c) * dot) / norms[r];
        }
        an->accumulate(g);
    });
}

template <typename T>
Var<T> layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
    const std::size_t R = x.rows(), C = x.cols();
    if (gain.cols() != C || bias.cols() != C || gain.rows() != 1 || bias.rows() != 1)
        throw std::invalid_argument("layer_norm: gain/bias shape mismatch");
    Tensor<T> out({R, C});
    std::vector<T> mu(R), inv_sd(R);
    Tensor<T> xhat({R, C});
    for (std::size_t r = 0; r < R; ++r) {
        T m = T(0);
        for (std::size_t c = 0; c < C; ++c) m += x.value().at(r, c);
        m /= T(C);
        T v = T(0);
        for (std::size_t c = 0; c < C; ++c) {
            T d = x.value().at(r, c) - m;
            v += d * d;
        }
        v /= T(C);
        mu[r] = m;
        inv_sd[r] = T(1) / std::sqrt(v + eps);
        for (std::size_t c = 0; c < C; ++c) {
            xhat.at(r, c) = (x.value().at(r, c) - m) * inv_sd[r];
            out.at(r, c) = xhat.at(r, c) * gain.value()[c] + bias.value()[c];
        }
    }
    Node<T>*xn = x.node, *gn = gain.node, *bn = bias.node;
    return x.graph->make(std::move(out), {xn, gn, bn},
                         [xn, gn, bn, xhat, inv_sd, R, C](Node<T>& n) {
        if (gn->requires_grad) {
            Tensor<T> g(gn->value.shape());
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) g[c] += n.grad.at(r, c) * xhat.at(r, c);
            gn->accumulate(g);
        }
        if (bn->requires_grad) {
            Tensor<T> g(bn->value.shape());
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) g[c] += n.grad.at(r, c);
            bn->accumulate(g);
        }
        if (xn->requires_grad) {
            Tensor<T> g({R, C});
            for (std::size_t r = 0; r < R; ++r) {
                // dxhat = g * gain; dx via the standard layer-norm backward
                T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                for (std::size_t c = 0; c < C; ++c) {
                    T dxh = n.grad.at(r, c) * gn->value[c];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xhat.at(r, c);
                }
                for (std::size_t c = 0; c < C; ++c) {
                    T dxh = n.grad.at(r, c) * gn->value[c];
                    g.at(r, c) = inv_sd[r] * (dxh - sum_dxhat / T(C) -
                                              xhat.at(r, c) * sum_dxhat_xhat / T(C));
                }
            }
            xn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> conv1d_same(Var<T> x, Var<T> kernel) {
    const auto& ks = kernel.value().shape();
    if (ks.size() != 3) throw std::invalid_argument("conv1d: kernel must be rank 3");
    const std::size_t Cout = ks[0], Cin = ks[1], K = ks[2];
    if (K % 2 == 0) throw std::invalid_argument("conv1d: kernel width must be odd");
    if (x.rows() != Cin)
        throw std::invalid_argument("conv1d: input channels mismatch");
    const std::size_t S = x.cols(), P = (K - 1) / 2;
    auto kat = [Cin, K](const Tensor<T>& t, std::size_t co, std::size_t ci, std::size_t u) -> T {
        return t[(co * Cin + ci) * K + u];
    };
    Tensor<T> out({Cout, S});
    for (std::size_t co = 0; co < Cout; ++co)
        for (std::size_t t = 0; t < S; ++t) {
            T s = T(0);
            for (std::size_t ci = 0; ci < Cin; ++ci)
                for (std::size_t u = 0; u < K; ++u) {
                    std::ptrdiff_t j = std::ptrdiff_t(t + u) - std::ptrdiff_t(P);
                    if (j < 0 || j >= std::ptrdiff_t(S)) continue;
                    s += kat(kernel.value(), co, ci, u) * x.value().at(ci, std::size_t(j));
                }
            out.at(co, t) = s;
        }
    Node<T>*xn = x.node, *kn = kernel.node;
    return x.graph->make(std::move(out), {xn, kn},
                         [xn, kn, Cout, Cin, K, S, P, kat](Node<T>& n) {
        if (xn->requires_grad) {
            Tensor<T> g({Cin, S});
            for (std::size_t co = 0; co < Cout; ++co)
                for (std::size_t t = 0; t < S; ++t) {
                    T gv = n.grad.at(co, t);
                    if (gv == T(0)) continue;
                    for (std::size_t ci = 0; ci < Cin; ++ci)
                        for (std::size_t u = 0; u < K; ++u) {
                            std::ptrdiff_t j = std::ptrdiff_t(t + u) - std::ptrdiff_t(P);
                            if (j < 0 || j >= std::ptrdiff_t(S)) continue;
                            g.at(ci, std::size_t(j)) += gv * kat(kn->value, co, ci, u);
                        }
                }
            xn->accumulate(g);
        }
        if (kn->requires_grad) {
            Tensor<T> g(kn->value.shape());
            for (std::size_t co = 0; co < Cout; ++co)
                for (std::size_t t = 0; t < S; ++t) {
                    T gv = n.grad.at(co, t);
                    if (gv == T(0)) continue;
                    for (std::size_t ci = 0; ci < Cin; ++ci)
                        for (std::size_t u = 0; u < K; ++u) {
                            std::ptrdiff_t j = std::ptrdiff_t(t + u) - std::ptrdiff_t(P);
                            if (j < 0 || j >= std::ptrdiff_t(S)) continue;
                            g[(co * Cin + ci) * K + u] += gv * xn->value.at(ci, std::size_t(j));
                        }
                }
            kn->accumulate(g);
        }
    });
}

template <typename T>
Var<T> mse_against(Var<T> pred, const Tensor<T>& target) {
    if (!pred.value().same_shape(target))
        throw std::invalid_argument("mse: shape mismatch");
    const std::size_t N = target.size();
    T s = T(0);
    for (std::size_t i = 0; i < N; ++i) {
        T d = pred.value()[i] - target[i];
        s += d * d;
    }
    Node<T>* pn = pred.node;
    return pred.graph->make(Tensor<T>::scalar(s / T(N)), {pn}, [pn, target, N](Node<T>& n) {
        if (!pn->requires_grad) return;
        Tensor<T> g(pn->value.shape());
        for (std::size_t i = 0; i < N; ++i)
            g[i] = n.grad[0] * T(2) * (pn->value[i] - target[i]) / T(N);
        pn->accumulate(g);
    });
}

#define TALON_INSTANTIATE_OPS(T)                                                          \
    template Var<T> add<T>(Var<T>, Var<T>);                                               \
    template Var<T> sub<T>(Var<T>, Var<T>);                                               \
    template Var<T> mul<T>(Var<T>, Var<T>);                                               \
    template Var<T> div_elem<T>(Var<T>, Var<T>);                                          \
    template Var<T> scale<T>(Var<T>, T);                                                  \
    template Var<T> add_const<T>(Var<T>, T);                                              \
    template Var<T> mul_by_scalar<T>(Var<T>, Var<T>);                                     \
    template Var<T> add_row<T>(Var<T>, Var<T>);                                           \
    template Var<T> relu<T>(Var<T>);                                                      \
    template Var<T> gelu<T>(Var<T>);                                                      \
    template Var<T> sigmoid_v<T>(Var<T>);                                                 \
    template Var<T> tanh_v<T>(Var<T>);                                                    \
    template Var<T> softplus_v<T>(Var<T>);                                                \
    template Var<T> exp_v<T>(Var<T>);                                                     \
    template Var<T> log_v<T>(Var<T>);                                                     \
    template Var<T> square<T>(Var<T>);                                                    \
    template Var<T> sqrt_v<T>(Var<T>);                                                    \
    template Var<T> normal_cdf_v<T>(Var<T>);                                              \
    template Var<T> matmul<T>(Var<T>, Var<T>);                                            \
    template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                         \
    template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                      \
    template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                      \
    template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                           \
    template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                           \
    template Var<T> gather_rows<T>(Var<T>, const std::vector<std::size_t>&);              \
    template Var<T> gather_cols<T>(Var<T>, const std::vector<std::size_t>&);              \
    template Var<T> mean_rows_to_row<T>(Var<T>);                                          \
    template Var<T> diag<T>(Var<T>);                                                      \
    template Var<T> sum_all<T>(Var<T>);                                                   \
    template Var<T> mean_all<T>(Var<T>);                                                  \
    template Var<T> keep_topk_row<T>(Var<T>, std::size_t, const std::vector<std::uint8_t>&); \
    template Var<T> softmax_rows<T>(Var<T>);                                              \
    template Var<T> causal_softmax<T>(Var<T>);                                            \
    template Var<T> log_softmax_rows<T>(Var<T>);                                          \
    template Var<T> normalize_rows<T>(Var<T>);                                            \
    template Var<T> layer_norm_rows<T>(Var<T>, Var<T>, Var<T>, T);                        \
    template Var<T> conv1d_same<T>(Var<T>, Var<T>);                                       \
    template Var<T> mse_against<T>(Var<T>, const Tensor<T>&);

TALON_INSTANTIATE_OPS(float)
TALON_INSTANTIATE_OPS(double)

#undef TALON_INSTANTIATE_OPS

}  // namespace talon::ad
