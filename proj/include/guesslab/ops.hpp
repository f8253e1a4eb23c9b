#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "guesslab/error.hpp"
#include "guesslab/param.hpp"
#include "guesslab/tensor.hpp"

namespace guesslab {

// Weight layout convention: a matrix mapping `in` values to `out` values is
// stored row-major with shape (in, out), so the inner loops below run over
// contiguous memory.

// y[j] += sum_i x[i] * W[i, j]
inline void matvec_acc(double* y, const double* w, const double* x, std::size_t in,
                       std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = w + i * out;
        for (std::size_t j = 0; j < out; ++j) y[j] += xi * row[j];
    }
}

// dx[i] += sum_j W[i, j] * dy[j]
inline void matvec_transpose_acc(double* dx, const double* w, const double* dy, std::size_t in,
                                 std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double* row = w + i * out;
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += row[j] * dy[j];
        dx[i] += acc;
    }
}

// dW[i, j] += x[i] * dy[j]
inline void outer_acc(double* dw, const double* x, const double* dy, std::size_t in,
                      std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* row = dw + i * out;
        for (std::size_t j = 0; j < out; ++j) row[j] += xi * dy[j];
    }
}

inline void add_inplace(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// softmax / nll

// Max-subtracted softmax over a 1-D range, written into `out`.
inline void softmax_into(const double* logits, double* out, std::size_t n) {
    if (n == 0) throw DomainError("softmax of empty input");
    double mx = logits[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) out[i] *= inv;
}

inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1) throw DimensionError("softmax expects a 1-D tensor, got " +
                                                 logits.shape_string());
    Tensor out(logits.shape());
    softmax_into(logits.data(), out.data(), logits.size());
    return out;
}

// -ln(p), with p clamped below at 1e-12.
inline double nll(double prob_of_truth) {
    const double p = std::max(prob_of_truth, 1e-12);
    return -std::log(p);
}

// Backward of loss = -ln(softmax(logits)[truth]) given the cached probs.
// dlogits[i] += scale * (p_i - [i == truth])
inline void softmax_nll_backward(const double* probs, std::size_t n, std::size_t truth,
                                 double scale, double* dlogits) {
    for (std::size_t i = 0; i < n; ++i) dlogits[i] += scale * probs[i];
    dlogits[truth] -= scale;
}

// ---------------------------------------------------------------------------
// affine + tanh: y = tanh(x . W + b), W stored (in, out).

struct AffineTanhCache {
    std::vector<double> x;
    std::vector<double> y;
};

inline void affine_tanh_forward(const Param& W, const Param& b, const double* x, std::size_t in,
                                AffineTanhCache& cache) {
    const std::size_t out = W.value.dim(1);
    if (W.value.dim(0) != in) {
        throw DimensionError("affine_tanh: input length " + std::to_string(in) +
                             " does not match weight shape " + W.value.shape_string());
    }
    cache.x.assign(x, x + in);
    cache.y.assign(b.value.data(), b.value.data() + out);
    matvec_acc(cache.y.data(), W.value.data(), x, in, out);
    for (auto& v : cache.y) v = std::tanh(v);
}

// dy is consumed; dx (length in) is accumulated if non-null.
inline void affine_tanh_backward(Param& W, Param& b, const AffineTanhCache& cache,
                                 const double* dy, double* dx) {
    const std::size_t in = cache.x.size();
    const std::size_t out = cache.y.size();
    std::vector<double> da(out);
    for (std::size_t j = 0; j < out; ++j) da[j] = dy[j] * (1.0 - cache.y[j] * cache.y[j]);
    outer_acc(W.grad.data(), cache.x.data(), da.data(), in, out);
    add_inplace(b.grad.data(), da.data(), out);
    if (dx) matvec_transpose_acc(dx, W.value.data(), da.data(), in, out);
}

// Convenience wrapper matching the scalar examples; does not record anything.
inline Tensor affine_tanh(const Tensor& x, const Param& W, const Param& b) {
    AffineTanhCache cache;
    affine_tanh_forward(W, b, x.data(), x.size(), cache);
    return Tensor({cache.y.size()}, cache.y);
}

// ---------------------------------------------------------------------------
// plain linear: y = x . W + b

struct LinearCache {
    std::vector<double> x;
};

inline void linear_forward(const Param& W, const Param& b, const double* x, std::size_t in,
                           double* y, LinearCache& cache) {
    const std::size_t out = W.value.dim(1);
    if (W.value.dim(0) != in) {
        throw DimensionError("linear: input length " + std::to_string(in) +
                             " does not match weight shape " + W.value.shape_string());
    }
    cache.x.assign(x, x + in);
    std::copy(b.value.data(), b.value.data() + out, y);
    matvec_acc(y, W.value.data(), x, in, out);
}

inline void linear_backward(Param& W, Param& b, const LinearCache& cache, const double* dy,
                            double* dx) {
    const std::size_t in = cache.x.size();
    const std::size_t out = W.value.dim(1);
    outer_acc(W.grad.data(), cache.x.data(), dy, in, out);
    add_inplace(b.grad.data(), dy, out);
    if (dx) matvec_transpose_acc(dx, W.value.data(), dy, in, out);
}

// ---------------------------------------------------------------------------
// token embedding table: rows of shape (vocab, dim)

inline const double* embedding_row(const Param& table, std::size_t id) {
    if (id >= table.value.dim(0)) {
        throw DomainError("embedding id " + std::to_string(id) + " out of range for table " +
                          table.value.shape_string());
    }
    return table.value.data() + id * table.value.dim(1);
}

inline void embedding_backward(Param& table, std::size_t id, const double* dvec) {
    double* row = table.grad.data() + id * table.value.dim(1);
    add_inplace(row, dvec, table.value.dim(1));
}

// ---------------------------------------------------------------------------
// two-layer MLP with tanh hidden: y = h . W2 + b2, h = tanh(x . W1 + b1)

struct Mlp2 {
    Param* W1 = nullptr;
    Param* b1 = nullptr;
    Param* W2 = nullptr;
    Param* b2 = nullptr;

    static Mlp2 build(ParamStore& store, const std::string& prefix, std::size_t in,
                      std::size_t hidden, std::size_t out) {
        Mlp2 m;
        m.W1 = &store.add_matrix(prefix + ".W1", in, hidden, in);
        m.b1 = &store.add_zeros(prefix + ".b1", {hidden});
        m.W2 = &store.add_matrix(prefix + ".W2", hidden, out, hidden);
        m.b2 = &store.add_zeros(prefix + ".b2", {out});
        return m;
    }

    static Mlp2 resolve(ParamStore& store, const std::string& prefix) {
        Mlp2 m;
        m.W1 = &store.get(prefix + ".W1");
        m.b1 = &store.get(prefix + ".b1");
        m.W2 = &store.get(prefix + ".W2");
        m.b2 = &store.get(prefix + ".b2");
        return m;
    }

    std::size_t in_dim() const { return W1->value.dim(0); }
    std::size_t out_dim() const { return W2->value.dim(1); }

    struct Cache {
        AffineTanhCache hidden;
        LinearCache out;
    };

    void forward(const double* x, double* y, Cache& cache) const {
        affine_tanh_forward(*W1, *b1, x, W1->value.dim(0), cache.hidden);
        linear_forward(*W2, *b2, cache.hidden.y.data(), cache.hidden.y.size(), y, cache.out);
    }

    void backward(const Cache& cache, const double* dy, double* dx) const {
        std::vector<double> dh(cache.hidden.y.size(), 0.0);
        linear_backward(*W2, *b2, cache.out, dy, dh.data());
        affine_tanh_backward(*W1, *b1, cache.hidden, dh.data(), dx);
    }
};

}  // namespace guesslab
