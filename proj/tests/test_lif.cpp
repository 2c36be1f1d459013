#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spikeir/lif.hpp"

using namespace spikeir;
using oracle::random_tensor;

TEST_CASE("lif_step: subthreshold input integrates without spiking") {
    LifParams p; // beta 0.5, v_th 1.0, soft
    LifState st;
    Tensor current = Tensor::full({1, 1, 1, 1}, 0.4f);
    Tensor s = lif_step(current, st, p);
    CHECK(s.data()[0] == 0.0f);
    CHECK(st.v.data()[0] == doctest::Approx(0.4f));
}

TEST_CASE("lif_step: suprathreshold input fires and soft-resets") {
    LifParams p;
    LifState st;
    Tensor current = Tensor::full({1, 1, 1, 1}, 1.2f);
    Tensor s = lif_step(current, st, p);
    CHECK(s.data()[0] == 1.0f);
    CHECK(st.v.data()[0] == doctest::Approx(0.2f));
}

TEST_CASE("lif_step: hard reset zeroes the membrane") {
    LifParams p;
    p.reset = LifParams::Reset::Hard;
    LifState st;
    Tensor s = lif_step(Tensor::full({1, 1, 1, 1}, 1.2f), st, p);
    CHECK(s.data()[0] == 1.0f);
    CHECK(st.v.data()[0] == 0.0f);
}

TEST_CASE("zero input decays geometrically and never spikes") {
    LifParams p;
    LifState st;
    lif_step(Tensor::full({1, 1, 1, 1}, 0.9f), st, p);
    float v = st.v.data()[0];
    for (int i = 0; i < 6; ++i) {
        Tensor s = lif_step(Tensor({1, 1, 1, 1}), st, p);
        CHECK(s.data()[0] == 0.0f);
        CHECK(st.v.data()[0] == doctest::Approx(0.5f * v));
        v = st.v.data()[0];
    }
}

TEST_CASE("surrogate peaks at threshold, decays in the tails, and is even") {
    LifParams p; // alpha = 2
    CHECK(surrogate_grad(1.0f, p) == doctest::Approx(1.0)); // alpha/2
    CHECK(surrogate_grad(50.0f, p) < 1e-3);
    CHECK(surrogate_grad(-50.0f, p) < 1e-3);
    for (float d : {0.1f, 0.5f, 2.0f})
        CHECK(surrogate_grad(1.0f + d, p) == doctest::Approx(surrogate_grad(1.0f - d, p)));
    CHECK(surrogate_grad(3.0f, p) > 0.0f);
    // integral is the antiderivative: S(vth) = 1/2, saturates to 0/1
    CHECK(surrogate_integral(1.0, p) == doctest::Approx(0.5));
    CHECK(surrogate_integral(100.0, p) == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(surrogate_integral(-100.0, p) == doctest::Approx(0.0).epsilon(1e-2));
}

TEST_CASE("lif_sequence: silence stays silent") {
    LifParams p;
    LifSeqStats st;
    Tensor s = lif_sequence(Tensor({4, 2, 3, 3}), p, &st);
    for (std::int64_t i = 0; i < s.size(); ++i) CHECK(s.data()[i] == 0.0f);
    CHECK(st.firing_rate == 0.0);
}

TEST_CASE("lif_sequence: constant 2*v_th current fires every step") {
    LifParams p;
    LifSeqStats st;
    Tensor s = lif_sequence(Tensor::full({4, 1, 2, 2}, 2.0f), p, &st);
    // u_1 = 2 >= 1, then v stays positive so u_t >= 2 always
    for (std::int64_t i = 0; i < s.size(); ++i) CHECK(s.data()[i] == 1.0f);
    CHECK(st.firing_rate == doctest::Approx(1.0));
}

TEST_CASE("spikes are strictly binary and the rate is their mean") {
    Rng rng(211);
    for (int it = 0; it < 5; ++it) {
        Tensor current = random_tensor({4, 2, 4, 4}, rng, -1.5f, 2.5f);
        LifParams p;
        p.reset = it % 2 ? LifParams::Reset::Hard : LifParams::Reset::Soft;
        LifSeqStats st;
        Tensor s = lif_sequence(current, p, &st);
        double mean = 0.0;
        for (std::int64_t i = 0; i < s.size(); ++i) {
            CHECK((s.data()[i] == 0.0f || s.data()[i] == 1.0f));
            mean += s.data()[i];
        }
        mean /= static_cast<double>(s.size());
        CHECK(st.firing_rate == doctest::Approx(mean));
        CHECK(st.firing_rate >= 0.0);
        CHECK(st.firing_rate <= 1.0);
    }
}

TEST_CASE("hand-traced soft-reset sequence") {
    LifParams p; // beta .5 v_th 1
    Tensor current({3, 1, 1, 1});
    current.data()[0] = 0.8f;  // u=0.8 -> no spike, v=0.8
    current.data()[1] = 0.7f;  // u=0.5*0.8+0.7=1.1 -> spike, v=0.1
    current.data()[2] = 0.94f; // u=0.05+0.94=0.99 -> no spike
    LifSeqStats st;
    Tensor s = lif_sequence(current, p, &st, true);
    CHECK(s.data()[0] == 0.0f);
    CHECK(s.data()[1] == 1.0f);
    CHECK(s.data()[2] == 0.0f);
    CHECK(st.membrane.data()[0] == doctest::Approx(0.8f));
    CHECK(st.membrane.data()[1] == doctest::Approx(1.1f));
    CHECK(st.membrane.data()[2] == doctest::Approx(0.99f));
}

namespace {

// Currents whose membrane trace stays clear of the threshold, so the hard
// reset decisions cannot flip inside the finite-difference window.
Tensor margin_safe_currents(Shape shape, const LifParams& p, Rng& rng, float margin) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        Tensor c = random_tensor(shape, rng, -1.0f, 2.0f);
        LifSeqStats st;
        lif_sequence(c, p, &st, true);
        bool ok = true;
        for (std::int64_t i = 0; i < st.membrane.size() && ok; ++i)
            if (std::fabs(st.membrane.data()[i] - p.v_th) < margin) ok = false;
        if (ok) return c;
    }
    FAIL("could not find margin-safe currents");
    return Tensor(shape);
}

} // namespace

TEST_CASE("surrogate backward matches the smoothed forward's finite differences") {
    Rng rng(223);
    for (int it = 0; it < 5; ++it) {
        LifParams p;
        p.reset = it % 2 ? LifParams::Reset::Hard : LifParams::Reset::Soft;
        Tensor current = margin_safe_currents({3, 1, 2, 2}, p, rng, 0.05f);
        Tensor target = random_tensor({3, 1, 2, 2}, rng);
        auto build = [&](Tape& t) {
            LifSeqOut o = lif_sequence(t, t.param(current), p, nullptr, /*smooth=*/true);
            // touch both outputs so the membrane path is checked too
            return add(t, mse_mean(t, o.spikes, t.value(target)),
                       scale(t, mean_all(t, o.membrane), 0.25f));
        };
        current.set_requires_grad(true);
        current.zero_grad();
        Tape tape(true);
        tape.backward(build(tape));
        auto fd = oracle::finite_diff(
            [&] {
                Tape t(false);
                return static_cast<double>(t.val(build(t)).data()[0]);
            },
            {&current});
        for (std::size_t i = 0; i < current.grad().size(); ++i)
            CHECK(oracle::rel_err(current.grad()[i], fd[0][i]) < 1e-2);
        current.set_requires_grad(false);
        current.clear_grad();
    }
}

TEST_CASE("invalid neuron parameters are rejected") {
    LifParams p;
    p.beta = 0.0f;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = LifParams{};
    p.v_th = -1.0f;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = LifParams{};
    p.surrogate_alpha = 0.0f;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}
