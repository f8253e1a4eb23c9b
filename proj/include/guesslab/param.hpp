#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "guesslab/error.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/tensor.hpp"

namespace guesslab {

// A trainable tensor with its gradient and Adam state.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    uint64_t step_count = 0;

    Param() = default;
    Param(std::string n, Tensor v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(Tensor::zeros(value.shape())),
          adam_m(Tensor::zeros(value.shape())),
          adam_v(Tensor::zeros(value.shape())) {}
};

// Ordered collection of Params plus the RNG that initialized them.
// Iteration order is insertion order; names are unique.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : rng_(seed) {}

    // Weight matrices: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
    Param& add_matrix(const std::string& name, std::size_t rows, std::size_t cols,
                      std::size_t fan_in) {
        Tensor t({rows, cols});
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng_.uniform(-bound, bound);
        return add(name, std::move(t));
    }

    Param& add_zeros(const std::string& name, std::vector<std::size_t> shape) {
        return add(name, Tensor::zeros(std::move(shape)));
    }

    Param& add(const std::string& name, Tensor value) {
        if (index_.count(name)) throw ConfigError("duplicate param name: " + name);
        index_[name] = params_.size();
        params_.emplace_back(name, std::move(value));
        return params_.back();
    }

    Param& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw LookupError("no param named " + name);
        return params_[it->second];
    }

    const Param& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw LookupError("no param named " + name);
        return params_[it->second];
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::deque<Param>& params() { return params_; }
    const std::deque<Param>& params() const { return params_; }

    std::size_t size() const { return params_.size(); }

    Rng& rng() { return rng_; }
    const Rng& rng() const { return rng_; }

    void zero_grads() {
        for (auto& p : params_) p.grad.fill(0.0);
    }

    void scale_grads(double s) {
        for (auto& p : params_) {
            double* g = p.grad.data();
            for (std::size_t i = 0; i < p.grad.size(); ++i) g[i] *= s;
        }
    }

    double grad_sq_norm() const {
        double acc = 0.0;
        for (const auto& p : params_) {
            const double* g = p.grad.data();
            for (std::size_t i = 0; i < p.grad.size(); ++i) acc += g[i] * g[i];
        }
        return acc;
    }

private:
    std::deque<Param> params_;
    std::map<std::string, std::size_t> index_;
    Rng rng_;
};

// Clips the global gradient norm across several stores jointly.
inline void clip_global_norm(std::vector<ParamStore*> stores, double max_norm) {
    double sq = 0.0;
    for (auto* s : stores) sq += s->grad_sq_norm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto* s : stores) s->scale_grads(scale);
    }
}

// Bias-corrected Adam over every Param in the store. Grads are consumed
// (zeroed) and per-param step counts advance.
inline void adam_step(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    for (auto& p : store.params()) {
        if (!p.grad.all_finite()) {
            throw NumericError("NaN/Inf gradient in param " + p.name);
        }
        p.step_count += 1;
        const double t = static_cast<double>(p.step_count);
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        double* value = p.value.data();
        double* grad = p.grad.data();
        double* m = p.adam_m.data();
        double* v = p.adam_v.data();
        const std::size_t n = p.value.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            grad[i] = 0.0;
        }
    }
}

}  // namespace guesslab
