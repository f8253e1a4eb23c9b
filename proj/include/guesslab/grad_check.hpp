#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

#include "guesslab/param.hpp"

namespace guesslab {

// Central finite-difference gradient verification.
//
// `loss` recomputes the scalar loss from the store's current values; when
// called with with_grad=true it must also accumulate analytic gradients into
// the store. It must be deterministic (no fresh randomness per call).
//
// Returns the max relative error over all coordinates, with denominator
// max(|analytic|, |numeric|, 1e-8).
inline double grad_check(std::vector<ParamStore*> stores,
                         const std::function<double(bool with_grad)>& loss, double h = 1e-5) {
    for (auto* s : stores) s->zero_grads();
    loss(true);

    std::vector<std::vector<Tensor>> analytic;
    analytic.reserve(stores.size());
    for (auto* s : stores) {
        std::vector<Tensor> grads;
        grads.reserve(s->size());
        for (auto& p : s->params()) grads.push_back(p.grad);
        analytic.push_back(std::move(grads));
    }

    double max_rel = 0.0;
    for (std::size_t si = 0; si < stores.size(); ++si) {
        auto& params = stores[si]->params();
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            double* theta = params[pi].value.data();
            const double* a = analytic[si][pi].data();
            for (std::size_t i = 0; i < params[pi].value.size(); ++i) {
                const double saved = theta[i];
                theta[i] = saved + h;
                const double fp = loss(false);
                theta[i] = saved - h;
                const double fm = loss(false);
                theta[i] = saved;
                const double numeric = (fp - fm) / (2.0 * h);
                const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-8});
                max_rel = std::max(max_rel, std::abs(a[i] - numeric) / denom);
            }
        }
    }
    for (auto* s : stores) s->zero_grads();
    return max_rel;
}

inline double grad_check(ParamStore& store, const std::function<double(bool with_grad)>& loss,
                         double h = 1e-5) {
    return grad_check(std::vector<ParamStore*>{&store}, loss, h);
}

// Runs a seeded scenario factory over several seeds and returns the worst error.
inline double grad_check_many(int seeds,
                              const std::function<double(uint64_t seed)>& one_seed_check) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) worst = std::max(worst, one_seed_check(static_cast<uint64_t>(s) + 1));
    return worst;
}

}  // namespace guesslab
