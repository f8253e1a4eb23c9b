#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "guesslab/grad_check.hpp"
#include "guesslab/lstm.hpp"
#include "guesslab/ops.hpp"
#include "guesslab/param.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/tensor.hpp"

using namespace guesslab;

namespace {

// exp-based scalar references, independent of std::tanh and of the library path
double ref_tanh(double x) {
    const double e2 = std::exp(2.0 * x);
    return (e2 - 1.0) / (e2 + 1.0);
}
double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("affine_tanh matches scalar references", "[numcore]") {
    ParamStore store(7);

    SECTION("zero weights give zero output") {
        Param& W = store.add("W", Tensor::zeros({3, 2}));
        Param& b = store.add("b", Tensor::zeros({2}));
        Tensor y = affine_tanh(Tensor::row({0.3, -1.2, 4.0}), W, b);
        REQUIRE(y.size() == 2);
        CHECK(y[0] == 0.0);
        CHECK(y[1] == 0.0);
    }

    SECTION("identity weights, zero input") {
        Tensor eye({2, 2});
        eye.at(0, 0) = 1.0;
        eye.at(1, 1) = 1.0;
        Param& W = store.add("W", eye);
        Param& b = store.add("b", Tensor::zeros({2}));
        Tensor y = affine_tanh(Tensor::row({0.0, 0.0}), W, b);
        CHECK(y[0] == 0.0);
        CHECK(y[1] == 0.0);
    }

    SECTION("1x1 case equals tanh(0.5)") {
        Param& W = store.add("W", Tensor({1, 1}, {1.0}));
        Param& b = store.add("b", Tensor::zeros({1}));
        Tensor y = affine_tanh(Tensor::row({0.5}), W, b);
        CHECK(y[0] == Approx(0.46211715726000974).epsilon(1e-12));
        CHECK(y[0] == Approx(ref_tanh(0.5)).epsilon(1e-12));
    }

    SECTION("shape mismatch names both shapes") {
        Param& W = store.add("W", Tensor::zeros({3, 2}));
        Param& b = store.add("b", Tensor::zeros({2}));
        REQUIRE_THROWS_WITH(affine_tanh(Tensor::row({1.0, 2.0}), W, b),
                            Catch::Contains("2") && Catch::Contains("[3x2]"));
    }
}

TEST_CASE("softmax values and invariants", "[numcore]") {
    SECTION("constant logits are uniform") {
        Tensor p = softmax(Tensor::row({3.3, 3.3, 3.3, 3.3}));
        for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == Approx(0.25).margin(1e-12));
    }

    SECTION("saturation at s=20") {
        Tensor p = softmax(Tensor::row({20.0, -20.0}));
        CHECK(p[0] >= 1.0 - 1e-8);
    }

    SECTION("log-count logits give count proportions") {
        Tensor p = softmax(Tensor::row({std::log(1.0), std::log(2.0), std::log(3.0)}));
        CHECK(p[0] == Approx(1.0 / 6.0).epsilon(1e-12));
        CHECK(p[1] == Approx(2.0 / 6.0).epsilon(1e-12));
        CHECK(p[2] == Approx(3.0 / 6.0).epsilon(1e-12));
    }

    SECTION("empty input is an error") {
        REQUIRE_THROWS_AS(softmax(Tensor::row({})), DomainError);
    }

    SECTION("sums to one and is permutation-equivariant on random inputs") {
        Rng rng(99);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng.below(12);
            std::vector<double> logits(n);
            for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
            Tensor p = softmax(Tensor::row(logits));
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += p[i];
            CHECK(sum == Approx(1.0).margin(1e-9));

            // rotate-by-one permutation
            std::vector<double> rotated(n);
            for (std::size_t i = 0; i < n; ++i) rotated[i] = logits[(i + 1) % n];
            Tensor q = softmax(Tensor::row(rotated));
            for (std::size_t i = 0; i < n; ++i)
                CHECK(q[i] == Approx(p[(i + 1) % n]).margin(1e-12));
        }
    }
}

TEST_CASE("nll matches ln references", "[numcore]") {
    CHECK(nll(1.0) == 0.0);
    CHECK(nll(std::exp(-2.0)) == Approx(2.0).epsilon(1e-12));
    CHECK(nll(0.25) == Approx(1.3862943611198906).epsilon(1e-12));
    CHECK(nll(0.0) <= -std::log(1e-13) + 1.0);  // clamp keeps it finite
    CHECK(nll(1e-30) == Approx(-std::log(1e-12)).epsilon(1e-12));
}

TEST_CASE("lstm_step fixed points and saturation", "[numcore]") {
    ParamStore store(3);
    LstmCell cell = LstmCell::build(store, "cell", 1, 1);

    SECTION("all-zero weights give zero state") {
        for (int k = 0; k < 4; ++k) {
            cell.W[k]->value.fill(0.0);
            cell.b[k]->value.fill(0.0);
        }
        auto [h, c] = lstm_step(cell, Tensor::row({0.0}), Tensor::row({0.0}), Tensor::row({0.0}));
        CHECK(h[0] == 0.0);
        CHECK(c[0] == 0.0);
    }

    SECTION("saturated forget gate and closed input gate preserve the cell") {
        for (int k = 0; k < 4; ++k) cell.W[k]->value.fill(0.0);
        cell.b[0]->value.fill(-40.0);  // input gate -> 0
        cell.b[1]->value.fill(40.0);   // forget gate -> 1
        cell.b[2]->value.fill(0.0);
        cell.b[3]->value.fill(0.0);
        auto [h, c] = lstm_step(cell, Tensor::row({0.7}), Tensor::row({0.1}), Tensor::row({-0.6}));
        CHECK(c[0] == Approx(-0.6).margin(1e-9));
    }

    SECTION("scalar recurrence hand-evaluated with all weights 0.1") {
        for (int k = 0; k < 4; ++k) {
            cell.W[k]->value.fill(0.1);
            cell.b[k]->value.fill(0.1);
        }
        auto [h, c] = lstm_step(cell, Tensor::row({1.0}), Tensor::row({0.0}), Tensor::row({0.0}));
        // z = [1, 0]; every gate pre-activation is 0.1*1 + 0.1*0 + 0.1 = 0.2
        const double i = ref_sigmoid(0.2);
        const double f = ref_sigmoid(0.2);
        const double o = ref_sigmoid(0.2);
        const double g = ref_tanh(0.2);
        (void)f;
        const double c_ref = i * g;
        const double h_ref = o * ref_tanh(c_ref);
        CHECK(c[0] == Approx(c_ref).epsilon(1e-12));
        CHECK(h[0] == Approx(h_ref).epsilon(1e-12));
    }

    SECTION("hidden output is bounded in (-1, 1)") {
        Rng rng(5);
        ParamStore big(11);
        LstmCell wide = LstmCell::build(big, "wide", 3, 4);
        for (int trial = 0; trial < 100; ++trial) {
            Tensor x({3});
            Tensor h0({4});
            Tensor c0({4});
            for (std::size_t i = 0; i < 3; ++i) x[i] = rng.uniform(-5.0, 5.0);
            for (std::size_t i = 0; i < 4; ++i) h0[i] = rng.uniform(-1.0, 1.0);
            for (std::size_t i = 0; i < 4; ++i) c0[i] = rng.uniform(-10.0, 10.0);
            auto [h, c] = lstm_step(wide, x, h0, c0);
            for (std::size_t i = 0; i < 4; ++i) {
                CHECK(h[i] > -1.0);
                CHECK(h[i] < 1.0);
            }
        }
    }

    SECTION("dimension mismatch is an error") {
        REQUIRE_THROWS_AS(
            lstm_step(cell, Tensor::row({1.0, 2.0}), Tensor::row({0.0}), Tensor::row({0.0})),
            DimensionError);
    }
}

TEST_CASE("adam_step closed-form behaviour", "[numcore]") {
    SECTION("zero gradients leave parameters unchanged") {
        ParamStore store(1);
        Param& p = store.add("p", Tensor::row({1.5, -2.5}));
        adam_step(store, 1e-3);
        CHECK(p.value[0] == 1.5);
        CHECK(p.value[1] == -2.5);
        CHECK(p.step_count == 1);
    }

    SECTION("first step with unit gradient") {
        ParamStore store(1);
        Param& p = store.add("p", Tensor::row({0.0}));
        p.grad[0] = 1.0;
        adam_step(store, 1e-4);
        CHECK(p.value[0] == Approx(-1e-4 / (1.0 + 1e-8)).epsilon(1e-12));
        CHECK(p.grad[0] == 0.0);
    }

    SECTION("two identical unit-gradient steps move equally") {
        ParamStore store(1);
        Param& p = store.add("p", Tensor::row({0.0}));
        p.grad[0] = 1.0;
        adam_step(store, 1e-4);
        const double d1 = p.value[0];
        p.grad[0] = 1.0;
        adam_step(store, 1e-4);
        const double d2 = p.value[0] - d1;
        CHECK(std::abs(d2) == Approx(std::abs(d1)).epsilon(1e-6));
    }

    SECTION("NaN gradient is reported with the param name") {
        ParamStore store(1);
        Param& p = store.add("enc.Wf", Tensor::row({0.0}));
        p.grad[0] = std::nan("");
        REQUIRE_THROWS_WITH(adam_step(store, 1e-4), Catch::Contains("enc.Wf"));
    }
}

TEST_CASE("grad_check harness on closed-form functions", "[numcore]") {
    SECTION("quadratic has near-zero error") {
        ParamStore store(1);
        Param& p = store.add("theta", Tensor::row({3.0}));
        auto loss = [&](bool with_grad) {
            const double t = p.value[0];
            if (with_grad) p.grad[0] += 2.0 * t;
            return t * t;
        };
        CHECK(grad_check(store, loss) <= 1e-9);
    }

    SECTION("a corrupted gradient is caught") {
        ParamStore store(1);
        Param& p = store.add("theta", Tensor::row({3.0}));
        auto loss = [&](bool with_grad) {
            const double t = p.value[0];
            if (with_grad) p.grad[0] += 2.0 * t + 0.1;
            return t * t;
        };
        CHECK(grad_check(store, loss) > 1e-2);
    }
}

TEST_CASE("layer gradients match finite differences over seeds", "[numcore]") {
    SECTION("affine_tanh") {
        const double worst = grad_check_many(10, [](uint64_t seed) {
            ParamStore store(seed);
            Param& W = store.add_matrix("W", 4, 3, 4);
            Param& b = store.add_zeros("b", {3});
            Rng rng(seed + 100);
            std::vector<double> x(4);
            for (auto& v : x) v = rng.uniform(-2.0, 2.0);
            std::vector<double> target(3);
            for (auto& v : target) v = rng.uniform(-0.5, 0.5);
            auto loss = [&](bool with_grad) {
                AffineTanhCache cache;
                affine_tanh_forward(W, b, x.data(), 4, cache);
                double L = 0.0;
                std::vector<double> dy(3);
                for (std::size_t j = 0; j < 3; ++j) {
                    const double d = cache.y[j] - target[j];
                    L += 0.5 * d * d;
                    dy[j] = d;
                }
                if (with_grad) affine_tanh_backward(W, b, cache, dy.data(), nullptr);
                return L;
            };
            return grad_check(store, loss);
        });
        CHECK(worst <= 1e-4);
    }

    SECTION("two-layer MLP with softmax NLL head") {
        const double worst = grad_check_many(10, [](uint64_t seed) {
            ParamStore store(seed);
            Mlp2 mlp = Mlp2::build(store, "mlp", 5, 4, 3);
            Rng rng(seed + 17);
            std::vector<double> x(5);
            for (auto& v : x) v = rng.uniform(-1.5, 1.5);
            const std::size_t truth = rng.below(3);
            auto loss = [&](bool with_grad) {
                Mlp2::Cache cache;
                std::vector<double> logits(3);
                mlp.forward(x.data(), logits.data(), cache);
                std::vector<double> probs(3);
                softmax_into(logits.data(), probs.data(), 3);
                const double L = nll(probs[truth]);
                if (with_grad) {
                    std::vector<double> dlogits(3, 0.0);
                    softmax_nll_backward(probs.data(), 3, truth, 1.0, dlogits.data());
                    mlp.backward(cache, dlogits.data(), nullptr);
                }
                return L;
            };
            return grad_check(store, loss);
        });
        CHECK(worst <= 1e-4);
    }

    SECTION("three-step LSTM chain") {
        const double worst = grad_check_many(10, [](uint64_t seed) {
            ParamStore store(seed);
            LstmCell cell = LstmCell::build(store, "cell", 3, 4);
            Rng rng(seed + 31);
            std::vector<std::vector<double>> xs(3, std::vector<double>(3));
            for (auto& x : xs)
                for (auto& v : x) v = rng.uniform(-1.0, 1.0);
            std::vector<double> target(4);
            for (auto& v : target) v = rng.uniform(-0.5, 0.5);
            auto loss = [&](bool with_grad) {
                std::vector<LstmCell::StepCache> caches(3);
                std::vector<double> h(4, 0.0), c(4, 0.0);
                for (int t = 0; t < 3; ++t) {
                    cell.step_forward(xs[t].data(), h.data(), c.data(), caches[t]);
                    h = caches[t].h;
                    c = caches[t].c;
                }
                double L = 0.0;
                std::vector<double> dh(4);
                for (std::size_t j = 0; j < 4; ++j) {
                    const double d = h[j] - target[j];
                    L += 0.5 * d * d;
                    dh[j] = d;
                }
                if (with_grad) {
                    std::vector<double> dc(4, 0.0);
                    for (int t = 2; t >= 0; --t) {
                        std::vector<double> dh_prev(4, 0.0), dc_prev(4, 0.0);
                        cell.step_backward(caches[t], dh.data(), dc.data(), nullptr,
                                           dh_prev.data(), dc_prev.data());
                        dh = dh_prev;
                        dc = dc_prev;
                    }
                }
                return L;
            };
            return grad_check(store, loss);
        });
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("param stores with equal seeds and updates stay bit-identical", "[numcore]") {
    auto make = [](uint64_t seed) {
        ParamStore store(seed);
        store.add_matrix("a", 3, 3, 3);
        store.add_matrix("b", 2, 5, 2);
        return store;
    };
    ParamStore s1 = make(42);
    ParamStore s2 = make(42);
    Rng g1(7), g2(7);
    for (int step = 0; step < 5; ++step) {
        for (auto* s : {&s1, &s2}) {
            Rng& g = (s == &s1) ? g1 : g2;
            for (auto& p : s->params())
                for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = g.uniform(-1.0, 1.0);
            adam_step(*s, 1e-3);
        }
    }
    for (std::size_t pi = 0; pi < s1.size(); ++pi) {
        const auto& p1 = s1.params()[pi];
        const auto& p2 = s2.params()[pi];
        for (std::size_t i = 0; i < p1.value.size(); ++i) {
            REQUIRE(p1.value[i] == p2.value[i]);
            REQUIRE(p1.adam_m[i] == p2.adam_m[i]);
            REQUIRE(p1.adam_v[i] == p2.adam_v[i]);
        }
    }
}

TEST_CASE("global norm clipping", "[numcore]") {
    ParamStore store(1);
    Param& p = store.add("p", Tensor::row({0.0, 0.0}));
    p.grad[0] = 3.0;
    p.grad[1] = 4.0;
    clip_global_norm({&store}, 5.0);
    CHECK(p.grad[0] == 3.0);  // norm exactly 5: untouched
    p.grad[0] = 30.0;
    p.grad[1] = 40.0;
    clip_global_norm({&store}, 5.0);
    CHECK(std::sqrt(p.grad[0] * p.grad[0] + p.grad[1] * p.grad[1]) == Approx(5.0).epsilon(1e-12));
}
