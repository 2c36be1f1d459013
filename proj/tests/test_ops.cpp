#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spikeir/tape.hpp"

using namespace spikeir;
using oracle::random_tensor;
using oracle::rel_err;

namespace {

// Backward grads vs central finite differences of the 64-bit mirror loss.
// Also cross-checks the float forward against the double forward.
void check_gradients(std::vector<Tensor*> leaves, const std::function<TensorId(Tape&)>& build,
                     const std::function<double()>& dloss, double tol = 1e-3) {
    for (Tensor* l : leaves) {
        l->set_requires_grad(true);
        l->zero_grad();
    }
    Tape tape(true);
    TensorId loss = build(tape);
    tape.backward(loss);
    CHECK(rel_err(tape.val(loss).data()[0], dloss(), 1e-3) < 1e-4);
    auto fd = oracle::finite_diff(dloss, leaves);
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const auto& g = leaves[li]->grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            CAPTURE(li);
            CAPTURE(i);
            CHECK(rel_err(g[i], fd[li][i]) < tol);
        }
    }
    for (Tensor* l : leaves) {
        l->set_requires_grad(false);
        l->clear_grad();
    }
}

} // namespace

TEST_CASE("conv2d: 1x1 identity kernel passes input through") {
    Rng rng(7);
    Tensor x = random_tensor({2, 3, 5, 4}, rng);
    Tensor k({3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) k.at(c, c, 0, 0) = 1.0f;
    Tape tape(false);
    TensorId y = conv2d(tape, tape.value(x), tape.value(k), -1);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(tape.val(y).data()[i] == x.data()[i]);
}

TEST_CASE("conv2d: all-ones 3x3 kernel on constant input") {
    Tensor x = Tensor::full({1, 1, 5, 5}, 7.0f);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tape tape(false);
    TensorId y = conv2d(tape, tape.value(x), tape.value(k), -1); // same padding
    const Tensor& out = tape.val(y);
    REQUIRE(out.dim(2) == 5);
    for (int h = 1; h < 4; ++h)
        for (int w = 1; w < 4; ++w) CHECK(out.at(0, 0, h, w) == 63.0f);
    CHECK(out.at(0, 0, 0, 0) == 28.0f); // corner sees a 2x2 window
}

TEST_CASE("conv2d: zero input stays zero") {
    Rng rng(3);
    Tensor x({1, 2, 6, 6});
    Tensor k = random_tensor({4, 2, 3, 3}, rng);
    Tensor b({1, 4, 1, 1});
    Tape tape(false);
    TensorId y = conv2d(tape, tape.value(x), tape.value(k), tape.value(b));
    for (std::int64_t i = 0; i < tape.val(y).size(); ++i) CHECK(tape.val(y).data()[i] == 0.0f);
}

TEST_CASE("conv2d agrees with the nested-loop oracle on random instances") {
    Rng rng(11);
    for (int it = 0; it < 24; ++it) {
        const int ci = 1 + rng.uniform_int(4);
        const int co = 1 + rng.uniform_int(4);
        const int h = 3 + rng.uniform_int(6);
        const int w = 3 + rng.uniform_int(6);
        const int k = (it % 3 == 0) ? 1 : ((it % 3 == 1) ? 3 : 5);
        const int stride = (it % 2) + 1;
        if (k > h || k > w) continue;
        Tensor x = random_tensor({2, ci, h, w}, rng);
        Tensor kr = random_tensor({co, ci, k, k}, rng);
        Tensor b = random_tensor({1, co, 1, 1}, rng);
        Tape tape(false);
        TensorId y = conv2d(tape, tape.value(x), tape.value(kr), tape.value(b), stride);
        Tensor ref = oracle::conv2d_direct(x, kr, &b, stride, (k - 1) / 2);
        REQUIRE(tape.val(y).shape() == ref.shape());
        for (std::int64_t i = 0; i < ref.size(); ++i) {
            const float got = tape.val(y).data()[i];
            const float want = ref.data()[i];
            // same rounding mode; allow one ulp of reassociation slack
            const bool ok = got == want || got == std::nextafter(want, got);
            CHECK(ok);
        }
    }
}

TEST_CASE("conv2d errors") {
    Rng rng(5);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor k_bad_c = random_tensor({1, 3, 3, 3}, rng);
    Tensor k_even = random_tensor({1, 2, 2, 2}, rng);
    Tensor k = random_tensor({1, 2, 3, 3}, rng);
    Tape tape(false);
    CHECK_THROWS_AS(conv2d(tape, tape.value(x), tape.value(k_bad_c), -1), DimensionError);
    CHECK_THROWS_AS(conv2d(tape, tape.value(x), tape.value(k_even), -1), DimensionError);
    CHECK_THROWS_AS(conv2d(tape, tape.value(x), tape.value(k), -1, 0, 0), ConfigError);
}

TEST_CASE("relu clamps negatives, add identity, scale by one") {
    Tensor x({1, 1, 1, 3});
    x.data()[0] = -1.0f;
    x.data()[1] = 0.0f;
    x.data()[2] = 2.0f;
    Tape tape(false);
    TensorId y = relu(tape, tape.value(x));
    CHECK(tape.val(y).data()[0] == 0.0f);
    CHECK(tape.val(y).data()[1] == 0.0f);
    CHECK(tape.val(y).data()[2] == 2.0f);

    Rng rng(9);
    Tensor a = random_tensor({1, 2, 3, 3}, rng);
    TensorId id = add(tape, tape.value(a), tape.value(Tensor(a.shape())));
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(tape.val(id).data()[i] == a.data()[i]);
    TensorId sc = scale(tape, tape.value(a), 1.0f);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(tape.val(sc).data()[i] == a.data()[i]);

    Tensor b = random_tensor({1, 2, 3, 4}, rng);
    CHECK_THROWS_AS(add(tape, tape.value(a), tape.value(b)), DimensionError);
}

TEST_CASE("reduce_mean basics") {
    // replicated input: mean over time gives the slice back
    Rng rng(13);
    Tensor img = random_tensor({1, 2, 3, 3}, rng);
    Tape tape(false);
    TensorId rep = encode_direct(tape, tape.value(img), 4);
    TensorId m = reduce_mean(tape, rep, 0);
    for (std::int64_t i = 0; i < img.size(); ++i)
        CHECK(tape.val(m).data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));

    Tensor v({1, 1, 1, 4});
    for (int i = 0; i < 4; ++i) v.data()[i] = static_cast<float>(i + 1);
    TensorId mv = reduce_mean(tape, tape.value(v), 3);
    CHECK(tape.val(mv).data()[0] == doctest::Approx(2.5));

    CHECK_THROWS_AS(reduce_mean(tape, tape.value(v), 4), DimensionError);
}

TEST_CASE("bilinear_resize: constants, identity, 2x2 -> 4x4 oracle") {
    Tape tape(false);
    Tensor c = Tensor::full({1, 2, 3, 5}, 0.625f);
    TensorId up = bilinear_resize(tape, tape.value(c), 7, 9);
    for (std::int64_t i = 0; i < tape.val(up).size(); ++i) CHECK(tape.val(up).data()[i] == 0.625f);

    Rng rng(17);
    Tensor x = random_tensor({1, 3, 4, 6}, rng);
    TensorId same = bilinear_resize(tape, tape.value(x), 4, 6);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(tape.val(same).data()[i] == x.data()[i]);

    Tensor q({1, 1, 2, 2});
    q.data()[0] = 0.0f;
    q.data()[1] = 1.0f;
    q.data()[2] = 2.0f;
    q.data()[3] = 3.0f;
    TensorId four = bilinear_resize(tape, tape.value(q), 4, 4);
    for (int oh = 0; oh < 4; ++oh)
        for (int ow = 0; ow < 4; ++ow) {
            const double sy = (oh + 0.5) * 0.5 - 0.5;
            const double sx = (ow + 0.5) * 0.5 - 0.5;
            CHECK(tape.val(four).at(0, 0, oh, ow) ==
                  doctest::Approx(oracle::bilinear_sample(q, 0, 0, sy, sx)).epsilon(1e-6));
        }
}

TEST_CASE("channel_avg_pool: group means, identity, constants, ragged groups") {
    Tape tape(false);
    Tensor x({1, 4, 1, 1});
    for (int c = 0; c < 4; ++c) x.at(0, c, 0, 0) = static_cast<float>(c + 1); // a,b,c,d = 1..4
    TensorId p = channel_avg_pool(tape, tape.value(x), 2);
    CHECK(tape.val(p).at(0, 0, 0, 0) == doctest::Approx(1.5));
    CHECK(tape.val(p).at(0, 1, 0, 0) == doctest::Approx(3.5));

    Rng rng(19);
    Tensor y = random_tensor({1, 3, 2, 2}, rng);
    TensorId same = channel_avg_pool(tape, tape.value(y), 3);
    for (std::int64_t i = 0; i < y.size(); ++i)
        CHECK(tape.val(same).data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-6));

    Tensor c = Tensor::full({1, 6, 2, 2}, 0.3f);
    TensorId pc = channel_avg_pool(tape, tape.value(c), 2);
    for (std::int64_t i = 0; i < tape.val(pc).size(); ++i)
        CHECK(tape.val(pc).data()[i] == doctest::Approx(0.3f));

    // 5 -> 2: trailing group pads by repeating the last channel
    Tensor r({1, 5, 1, 1});
    for (int i = 0; i < 5; ++i) r.at(0, i, 0, 0) = static_cast<float>(i);
    TensorId rp = channel_avg_pool(tape, tape.value(r), 2);
    CHECK(tape.val(rp).at(0, 0, 0, 0) == doctest::Approx((0.0 + 1.0 + 2.0) / 3.0));
    CHECK(tape.val(rp).at(0, 1, 0, 0) == doctest::Approx((3.0 + 4.0 + 4.0) / 3.0));

    CHECK_THROWS_AS(channel_avg_pool(tape, tape.value(r), 6), DimensionError);
}

TEST_CASE("pad_reflect and crop invert each other") {
    Rng rng(23);
    Tensor x = random_tensor({2, 2, 5, 6}, rng);
    Tape tape(false);
    TensorId padded = pad_reflect(tape, tape.value(x), 2, 1, 3, 2);
    TensorId back = crop(tape, padded, 2, 3, 5, 6);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(tape.val(back).data()[i] == x.data()[i]);
    CHECK(tape.val(padded).at(0, 0, 0, 3) == x.at(0, 0, 2, 0)); // mirrored row
}

TEST_CASE("mul broadcasts gate shapes") {
    Rng rng(29);
    Tensor x = random_tensor({2, 3, 2, 2}, rng);
    Tensor g = random_tensor({1, 3, 1, 1}, rng);
    Tape tape(false);
    TensorId y = mul(tape, tape.value(x), tape.value(g));
    for (int t = 0; t < 2; ++t)
        for (int c = 0; c < 3; ++c)
            for (int h = 0; h < 2; ++h)
                for (int w = 0; w < 2; ++w)
                    CHECK(tape.val(y).at(t, c, h, w) == x.at(t, c, h, w) * g.at(0, c, 0, 0));
}

TEST_CASE("ops are pure: same inputs give bit-identical outputs") {
    Rng rng(31);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    auto run = [&] {
        Tape tape(false);
        TensorId y = conv2d(tape, tape.value(x), tape.value(k), -1, 2);
        auto [re, im] = rdft2(tape, y);
        TensorId out = mean_all(tape, add(tape, abs_sum(tape, re), abs_sum(tape, im)));
        return tape.val(out).data()[0];
    };
    CHECK(run() == run());
}

TEST_CASE("non-finite op results are rejected") {
    Tensor x = Tensor::full({1, 1, 1, 1}, std::numeric_limits<float>::max());
    Tape tape(false);
    CHECK_THROWS_AS(add(tape, tape.value(x), tape.value(x)), NumericError);
}

// --- finite-difference gradient checks --------------------------------------

TEST_CASE("gradients: conv2d w.r.t. input, kernel and bias") {
    Rng rng(41);
    for (int it = 0; it < 5; ++it) {
        Tensor x = random_tensor({2, 2, 4 + it % 2, 5}, rng);
        Tensor k = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({1, 3, 1, 1}, rng);
        const int stride = 1 + it % 2;
        check_gradients(
            {&x, &k, &b},
            [&](Tape& t) {
                TensorId y = conv2d(t, t.param(x), t.param(k), t.param(b), stride);
                return mse_mean(t, y, t.value(Tensor(t.val(y).shape())));
            },
            [&] {
                oracle::DT bd(b);
                oracle::DT y = oracle::d_conv2d(oracle::DT(x), oracle::DT(k), &bd, stride);
                return oracle::d_mse_mean(y, oracle::DT(y.shape));
            });
    }
}

TEST_CASE("gradients: elementwise and reductions") {
    Rng rng(43);
    for (int it = 0; it < 5; ++it) {
        Tensor a = random_tensor({1, 2, 3, 3}, rng);
        Tensor b = random_tensor({1, 2, 3, 3}, rng);
        // keep the operands away from the relu/abs/l1 kinks so the FD window
        // stays smooth
        for (auto& v : a.values())
            if (std::fabs(v) < 0.05f) v += 0.1f;
        for (std::size_t i = 0; i < b.values().size(); ++i)
            if (std::fabs(a.values()[i] - b.values()[i]) < 0.05f) b.values()[i] += 0.1f;
        check_gradients(
            {&a, &b},
            [&](Tape& t) {
                return mean_all(t, add(t, relu(t, t.param(a)), sigmoid(t, t.param(b))));
            },
            [&] { return oracle::d_mean_all(oracle::d_add(oracle::d_relu(oracle::DT(a)),
                                                          oracle::d_sigmoid(oracle::DT(b)))); });
        check_gradients(
            {&a}, [&](Tape& t) { return abs_sum(t, scale(t, t.param(a), 0.37f)); },
            [&] { return oracle::d_abs_sum(oracle::d_scale(oracle::DT(a), 0.37)); });
        check_gradients(
            {&a, &b}, [&](Tape& t) { return l1_mean(t, t.param(a), t.param(b)); },
            [&] { return oracle::d_l1_mean(oracle::DT(a), oracle::DT(b)); });
        check_gradients(
            {&a, &b}, [&](Tape& t) { return mse_mean(t, t.param(a), t.param(b)); },
            [&] { return oracle::d_mse_mean(oracle::DT(a), oracle::DT(b)); });
        const int axis2 = it % 2 ? 2 : 3;
        check_gradients(
            {&a},
            [&](Tape& t) { return mean_all(t, reduce_mean(t, reduce_mean(t, t.param(a), 1), axis2)); },
            [&] { return oracle::d_mean_all(oracle::d_reduce_mean(oracle::d_reduce_mean(oracle::DT(a), 1), axis2)); });
    }
}

TEST_CASE("gradient of a mean is 1/n everywhere") {
    Rng rng(47);
    Tensor x = random_tensor({1, 1, 4, 4}, rng);
    x.set_requires_grad(true);
    Tape tape(true);
    tape.backward(mean_all(tape, tape.param(x)));
    for (auto g : x.grad()) CHECK(g == doctest::Approx(1.0 / 16.0));
    // finite differences agree
    auto fd = oracle::finite_diff([&] { return oracle::d_mean_all(oracle::DT(x)); }, {&x});
    for (auto v : fd[0]) CHECK(rel_err(v, 1.0 / 16.0) < 1e-3);
    x.set_requires_grad(false);
}

TEST_CASE("gradients: resize, pooling, broadcast mul, affine, layout ops") {
    Rng rng(53);
    for (int it = 0; it < 5; ++it) {
        Tensor x = random_tensor({1, 4, 4, 4}, rng);
        Tensor g = random_tensor({1, 4, 1, 1}, rng);
        Tensor gain = random_tensor({1, 4, 1, 1}, rng, 0.5f, 1.5f);
        Tensor bias = random_tensor({1, 4, 1, 1}, rng);
        check_gradients(
            {&x}, [&](Tape& t) { return mean_all(t, bilinear_resize(t, t.param(x), 4 + it, 7 - it)); },
            [&] { return oracle::d_mean_all(oracle::d_bilinear(oracle::DT(x), 4 + it, 7 - it)); });
        const int out_c = it % 2 ? 2 : 3;
        check_gradients(
            {&x}, [&](Tape& t) { return mean_all(t, channel_avg_pool(t, t.param(x), out_c)); },
            [&] { return oracle::d_mean_all(oracle::d_channel_pool(oracle::DT(x), out_c)); });
        check_gradients(
            {&x, &g}, [&](Tape& t) { return mean_all(t, mul(t, t.param(x), t.param(g))); },
            [&] { return oracle::d_mean_all(oracle::d_mul(oracle::DT(x), oracle::DT(g))); });
        check_gradients(
            {&x, &gain, &bias},
            [&](Tape& t) {
                return mse_mean(t, affine_channel(t, t.param(x), t.param(gain), t.param(bias)),
                                t.value(Tensor({1, 4, 4, 4})));
            },
            [&] {
                return oracle::d_mse_mean(oracle::d_affine(oracle::DT(x), oracle::DT(gain), oracle::DT(bias)),
                                          oracle::DT(Shape{1, 4, 4, 4}));
            });
        Tensor img = random_tensor({1, 2, 3, 3}, rng);
        check_gradients(
            {&img},
            [&](Tape& t) {
                TensorId rep = encode_direct(t, t.param(img), 3);
                return mean_all(t, mul(t, rep, rep));
            },
            [&] {
                oracle::DT rep = oracle::d_encode(oracle::DT(img), 3);
                return oracle::d_mean_all(oracle::d_mul(rep, rep));
            });
        check_gradients(
            {&img},
            [&](Tape& t) {
                TensorId padded = pad_reflect(t, t.param(img), 1, 2, 2, 1);
                return mse_mean(t, padded, t.value(Tensor(t.val(padded).shape())));
            },
            [&] {
                oracle::DT padded = oracle::d_pad_reflect(oracle::DT(img), 1, 2, 2, 1);
                return oracle::d_mse_mean(padded, oracle::DT(padded.shape));
            });
    }
}
