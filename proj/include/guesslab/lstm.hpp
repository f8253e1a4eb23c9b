#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "guesslab/ops.hpp"
#include "guesslab/param.hpp"

namespace guesslab {

// Standard LSTM cell. Each gate weight is stored as one matrix of shape
// (input_dim + hidden_dim, hidden_dim) applied to z = [x; h_prev].
// Gate order throughout: input, forget, output, candidate.
struct LstmCell {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Param* W[4] = {nullptr, nullptr, nullptr, nullptr};
    Param* b[4] = {nullptr, nullptr, nullptr, nullptr};

    static constexpr const char* kGateNames[4] = {"i", "f", "o", "g"};

    static LstmCell build(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                          std::size_t hidden_dim) {
        LstmCell cell;
        cell.input_dim = input_dim;
        cell.hidden_dim = hidden_dim;
        const std::size_t zdim = input_dim + hidden_dim;
        for (int k = 0; k < 4; ++k) {
            cell.W[k] = &store.add_matrix(prefix + ".W" + kGateNames[k], zdim, hidden_dim, zdim);
            cell.b[k] = &store.add_zeros(prefix + ".b" + kGateNames[k], {hidden_dim});
        }
        // Forget-gate bias starts at +1 so early training does not wipe the cell state.
        cell.b[1]->value.fill(1.0);
        return cell;
    }

    static LstmCell resolve(ParamStore& store, const std::string& prefix) {
        LstmCell cell;
        for (int k = 0; k < 4; ++k) {
            cell.W[k] = &store.get(prefix + ".W" + kGateNames[k]);
            cell.b[k] = &store.get(prefix + ".b" + kGateNames[k]);
        }
        cell.hidden_dim = cell.b[0]->value.dim(0);
        cell.input_dim = cell.W[0]->value.dim(0) - cell.hidden_dim;
        return cell;
    }

    struct StepCache {
        std::vector<double> z;       // [x; h_prev]
        std::vector<double> c_prev;
        std::vector<double> gate[4]; // post-nonlinearity i, f, o, g
        std::vector<double> c;
        std::vector<double> tanh_c;
        std::vector<double> h;
    };

    void step_forward(const double* x, const double* h_prev, const double* c_prev,
                      StepCache& cache) const {
        const std::size_t H = hidden_dim;
        const std::size_t zdim = input_dim + H;
        cache.z.resize(zdim);
        std::copy(x, x + input_dim, cache.z.begin());
        std::copy(h_prev, h_prev + H, cache.z.begin() + input_dim);
        cache.c_prev.assign(c_prev, c_prev + H);
        for (int k = 0; k < 4; ++k) {
            cache.gate[k].assign(b[k]->value.data(), b[k]->value.data() + H);
            matvec_acc(cache.gate[k].data(), W[k]->value.data(), cache.z.data(), zdim, H);
        }
        for (std::size_t j = 0; j < H; ++j) {
            cache.gate[0][j] = sigmoid(cache.gate[0][j]);
            cache.gate[1][j] = sigmoid(cache.gate[1][j]);
            cache.gate[2][j] = sigmoid(cache.gate[2][j]);
            cache.gate[3][j] = std::tanh(cache.gate[3][j]);
        }
        cache.c.resize(H);
        cache.tanh_c.resize(H);
        cache.h.resize(H);
        for (std::size_t j = 0; j < H; ++j) {
            cache.c[j] = cache.gate[1][j] * cache.c_prev[j] + cache.gate[0][j] * cache.gate[3][j];
            cache.tanh_c[j] = std::tanh(cache.c[j]);
            cache.h[j] = cache.gate[2][j] * cache.tanh_c[j];
        }
    }

    // dh/dc_in are the gradients flowing into this step's outputs; dx, dh_prev
    // and dc_prev are accumulated. Weight gradients accumulate into the Params.
    void step_backward(const StepCache& cache, const double* dh, const double* dc_in, double* dx,
                       double* dh_prev, double* dc_prev) const {
        const std::size_t H = hidden_dim;
        const std::size_t zdim = input_dim + H;
        std::vector<double> da[4];
        for (int k = 0; k < 4; ++k) da[k].resize(H);
        std::vector<double> dz(zdim, 0.0);
        for (std::size_t j = 0; j < H; ++j) {
            const double i = cache.gate[0][j];
            const double f = cache.gate[1][j];
            const double o = cache.gate[2][j];
            const double g = cache.gate[3][j];
            const double tc = cache.tanh_c[j];
            double dc = dh[j] * o * (1.0 - tc * tc);
            if (dc_in) dc += dc_in[j];
            da[0][j] = dc * g * i * (1.0 - i);
            da[1][j] = dc * cache.c_prev[j] * f * (1.0 - f);
            da[2][j] = dh[j] * tc * o * (1.0 - o);
            da[3][j] = dc * i * (1.0 - g * g);
            if (dc_prev) dc_prev[j] += dc * f;
        }
        for (int k = 0; k < 4; ++k) {
            outer_acc(W[k]->grad.data(), cache.z.data(), da[k].data(), zdim, hidden_dim);
            add_inplace(b[k]->grad.data(), da[k].data(), H);
            matvec_transpose_acc(dz.data(), W[k]->value.data(), da[k].data(), zdim, H);
        }
        if (dx) add_inplace(dx, dz.data(), input_dim);
        if (dh_prev) add_inplace(dh_prev, dz.data() + input_dim, H);
    }
};

// One step with Tensor in/out, matching the scalar examples. Returns (h, c).
inline std::pair<Tensor, Tensor> lstm_step(const LstmCell& cell, const Tensor& x,
                                           const Tensor& h_prev, const Tensor& c_prev) {
    if (x.size() != cell.input_dim || h_prev.size() != cell.hidden_dim ||
        c_prev.size() != cell.hidden_dim) {
        throw DimensionError("lstm_step: got x " + x.shape_string() + ", h " +
                             h_prev.shape_string() + ", c " + c_prev.shape_string() +
                             " for cell dims (" + std::to_string(cell.input_dim) + ", " +
                             std::to_string(cell.hidden_dim) + ")");
    }
    LstmCell::StepCache cache;
    cell.step_forward(x.data(), h_prev.data(), c_prev.data(), cache);
    return {Tensor({cell.hidden_dim}, cache.h), Tensor({cell.hidden_dim}, cache.c)};
}

}  // namespace guesslab
