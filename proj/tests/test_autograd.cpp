#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spikeir/tape.hpp"

using namespace spikeir;
using oracle::random_tensor;

TEST_CASE("d/dx of sum x^2 is 2x") {
    Rng rng(101);
    Tensor x = random_tensor({1, 1, 2, 4}, rng);
    x.set_requires_grad(true);
    Tape tape(true);
    TensorId xs = tape.param(x);
    // sum x^2 = abs_sum(x * x) for the squares; mse against zeros scaled by n works too
    TensorId loss = abs_sum(tape, mul(tape, xs, xs));
    tape.backward(loss);
    for (std::int64_t i = 0; i < x.size(); ++i)
        CHECK(x.grad()[static_cast<std::size_t>(i)] == doctest::Approx(2.0f * x.data()[i]).epsilon(1e-5));
}

TEST_CASE("fan-out accumulates branch gradients additively") {
    Rng rng(103);
    Tensor x = random_tensor({1, 1, 1, 4}, rng);
    x.set_requires_grad(true);
    Tape tape(true);
    TensorId xs = tape.param(x);
    TensorId twice = add(tape, xs, xs); // x used twice
    tape.backward(mean_all(tape, twice));
    for (auto g : x.grad()) CHECK(g == doctest::Approx(2.0 / 4.0));
}

TEST_CASE("backward demands a scalar loss and a used tape") {
    Rng rng(105);
    Tensor x = random_tensor({1, 1, 2, 2}, rng);
    x.set_requires_grad(true);
    Tape tape(true);
    TensorId xs = tape.param(x);
    CHECK_THROWS_AS(tape.backward(xs), ContractError);
    Tape empty(true);
    CHECK_THROWS_AS(empty.backward(0), ContractError);
}

TEST_CASE("conv -> relu -> mean chain matches finite differences") {
    Rng rng(107);
    for (int it = 0; it < 5; ++it) {
        // resample until no conv output sits inside the relu kink window
        Tensor x, k, b;
        for (int attempt = 0; attempt < 100; ++attempt) {
            x = random_tensor({1, 2, 5, 5}, rng);
            k = random_tensor({3, 2, 3, 3}, rng);
            b = random_tensor({1, 3, 1, 1}, rng);
            oracle::DT bd(b);
            oracle::DT y = oracle::d_conv2d(oracle::DT(x), oracle::DT(k), &bd, 1);
            bool safe = true;
            for (double v : y.v)
                if (std::fabs(v) < 0.02) safe = false;
            if (safe) break;
        }
        auto build = [&](Tape& t) {
            TensorId y = relu(t, conv2d(t, t.param(x), t.param(k), t.param(b)));
            return mean_all(t, y);
        };
        for (Tensor* p : {&x, &k, &b}) {
            p->set_requires_grad(true);
            p->zero_grad();
        }
        Tape tape(true);
        tape.backward(build(tape));
        auto fd = oracle::finite_diff(
            [&] {
                oracle::DT bd(b);
                return oracle::d_mean_all(
                    oracle::d_relu(oracle::d_conv2d(oracle::DT(x), oracle::DT(k), &bd, 1)));
            },
            {&x, &k, &b});
        std::vector<Tensor*> leaves{&x, &k, &b};
        for (std::size_t li = 0; li < leaves.size(); ++li)
            for (std::size_t i = 0; i < leaves[li]->grad().size(); ++i)
                CHECK(oracle::rel_err(leaves[li]->grad()[i], fd[li][i]) < 1e-3);
        for (Tensor* p : leaves) {
            p->set_requires_grad(false);
            p->clear_grad();
        }
    }
}

TEST_CASE("param gradients accumulate across tapes (batch accumulation)") {
    Rng rng(109);
    Tensor w = random_tensor({1, 1, 1, 3}, rng);
    w.set_requires_grad(true);
    w.zero_grad();
    std::vector<float> single;
    {
        Tape tape(true);
        tape.backward(mean_all(tape, tape.param(w)));
        single = w.grad();
    }
    {
        Tape tape(true);
        tape.backward(mean_all(tape, tape.param(w)));
    }
    for (std::size_t i = 0; i < single.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(2.0f * single[i]));
}

TEST_CASE("grad-disabled tapes record nothing") {
    Rng rng(111);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    x.set_requires_grad(true);
    Tape tape(false);
    TensorId y = relu(tape, tape.param(x));
    mean_all(tape, y);
    CHECK(tape.num_nodes() == 0);
}
