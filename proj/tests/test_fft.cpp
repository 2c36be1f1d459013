#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "spikeir/fft.hpp"
#include "spikeir/tape.hpp"

using namespace spikeir;
using oracle::random_tensor;

namespace {

// Half-spectrum via the library, full spectrum via the direct oracle.
void compare_against_direct(const Tensor& x, double tol) {
    const int h = x.dim(2), w = x.dim(3), wh = w / 2 + 1;
    Tape tape(false);
    auto [re_id, im_id] = rdft2(tape, tape.value(x));
    const Tensor& re = tape.val(re_id);
    const Tensor& im = tape.val(im_id);
    for (int t = 0; t < x.dim(0); ++t)
        for (int c = 0; c < x.dim(1); ++c) {
            std::vector<double> plane(static_cast<std::size_t>(h) * w);
            for (int i = 0; i < h * w; ++i)
                plane[static_cast<std::size_t>(i)] = x.data()[x.index(t, c, 0, 0) + i];
            std::vector<std::complex<double>> ref;
            oracle::dft2_direct(plane, h, w, ref);
            for (int u = 0; u < h; ++u)
                for (int v = 0; v < wh; ++v) {
                    CHECK(std::fabs(re.at(t, c, u, v) - ref[static_cast<std::size_t>(u) * w + v].real()) < tol);
                    CHECK(std::fabs(im.at(t, c, u, v) - ref[static_cast<std::size_t>(u) * w + v].imag()) < tol);
                }
        }
}

} // namespace

TEST_CASE("rdft2: constant image concentrates in the DC bin") {
    const float c = 0.73f;
    Tensor x = Tensor::full({1, 1, 6, 8}, c);
    Tape tape(false);
    auto [re_id, im_id] = rdft2(tape, tape.value(x));
    const Tensor& re = tape.val(re_id);
    const Tensor& im = tape.val(im_id);
    CHECK(std::fabs(re.at(0, 0, 0, 0) - c * 6 * 8) < 1e-4);
    for (int u = 0; u < 6; ++u)
        for (int v = 0; v < 5; ++v) {
            if (u == 0 && v == 0) continue;
            CHECK(std::fabs(re.at(0, 0, u, v)) < 1e-4);
            CHECK(std::fabs(im.at(0, 0, u, v)) < 1e-4);
        }
}

TEST_CASE("rdft2: unit impulse is flat with magnitude one") {
    Tensor x({1, 1, 8, 8});
    x.at(0, 0, 3, 5) = 1.0f;
    Tape tape(false);
    auto [re_id, im_id] = rdft2(tape, tape.value(x));
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 5; ++v) {
            const double mag = std::hypot(tape.val(re_id).at(0, 0, u, v), tape.val(im_id).at(0, 0, u, v));
            CHECK(mag == doctest::Approx(1.0).epsilon(1e-4));
        }
}

TEST_CASE("rdft2 matches the direct DFT oracle") {
    Rng rng(61);
    for (int it = 0; it < 6; ++it) compare_against_direct(random_tensor({1, 2, 8, 8}, rng), 1e-4);
    // non power-of-two extents exercise the direct fallback path
    compare_against_direct(random_tensor({1, 1, 5, 7}, rng), 1e-4);
    compare_against_direct(random_tensor({2, 1, 6, 12}, rng), 1e-4);
    compare_against_direct(random_tensor({1, 1, 1, 1}, rng), 1e-6);
}

TEST_CASE("Parseval: spatial energy equals spectral energy over the mirrored spectrum") {
    Rng rng(67);
    for (int it = 0; it < 5; ++it) {
        Tensor x = random_tensor({1, 1, 8, 8}, rng);
        double spatial = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i)
            spatial += static_cast<double>(x.data()[i]) * x.data()[i];
        std::vector<double> plane(x.values().begin(), x.values().end());
        std::vector<std::complex<double>> spec;
        oracle::dft2_direct(plane, 8, 8, spec);
        double spectral = 0.0;
        for (const auto& z : spec) spectral += std::norm(z);
        spectral /= 64.0;
        CHECK(std::fabs(spatial - spectral) / std::fabs(spatial) < 1e-4);

        // and the half-spectrum of the implementation reproduces the full sum
        Tape tape(false);
        auto [re_id, im_id] = rdft2(tape, tape.value(x));
        double half = 0.0;
        for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 5; ++v) {
                const double p = std::norm(std::complex<double>(tape.val(re_id).at(0, 0, u, v),
                                                                tape.val(im_id).at(0, 0, u, v)));
                const bool self_conjugate = (v == 0 || v == 4);
                half += self_conjugate ? p : 2.0 * p;
            }
        half /= 64.0;
        CHECK(std::fabs(spatial - half) / std::fabs(spatial) < 1e-4);
    }
}

TEST_CASE("rdft2 backward is the exact adjoint (finite differences)") {
    Rng rng(71);
    for (int it = 0; it < 5; ++it) {
        Tensor x = random_tensor({1, 1, 4, it % 2 ? 6 : 5}, rng);
        Tensor wre = random_tensor({1, 1, 4, it % 2 ? 4 : 3}, rng);
        Tensor wim = random_tensor({1, 1, 4, it % 2 ? 4 : 3}, rng);
        auto build = [&](Tape& t) {
            auto [re, im] = rdft2(t, t.param(x));
            TensorId s = add(t, mean_all(t, mul(t, re, t.value(wre))),
                             mean_all(t, mul(t, im, t.value(wim))));
            return s;
        };
        x.set_requires_grad(true);
        x.zero_grad();
        Tape tape(true);
        tape.backward(build(tape));
        auto fd = oracle::finite_diff(
            [&] {
                auto [re, im] = oracle::d_rdft2(oracle::DT(x));
                return oracle::d_mean_all(oracle::d_mul(re, oracle::DT(wre))) +
                       oracle::d_mean_all(oracle::d_mul(im, oracle::DT(wim)));
            },
            {&x});
        for (std::size_t i = 0; i < x.grad().size(); ++i)
            CHECK(oracle::rel_err(x.grad()[i], fd[0][i]) < 1e-3);
        x.set_requires_grad(false);
        x.clear_grad();
    }
}
