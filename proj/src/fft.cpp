#include "spikeir/fft.hpp"

#include <cmath>

namespace spikeir::fft {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void radix2(std::complex<double>* a, int n, int sign) {
    // bit reversal
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = sign * kTwoPi / len;
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void direct(std::complex<double>* a, int n, int sign) {
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (int j = 0; j < n; ++j) {
            double ang = sign * kTwoPi * k * j / n;
            acc += a[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[static_cast<std::size_t>(k)] = acc;
    }
    for (int k = 0; k < n; ++k) a[k] = out[static_cast<std::size_t>(k)];
}

// Rows then columns over a full H x W complex grid.
void grid_transform(std::vector<std::complex<double>>& g, int H, int W, int sign) {
    for (int h = 0; h < H; ++h) transform(&g[static_cast<std::size_t>(h) * W], W, sign);
    std::vector<std::complex<double>> col(static_cast<std::size_t>(H));
    for (int w = 0; w < W; ++w) {
        for (int h = 0; h < H; ++h) col[static_cast<std::size_t>(h)] = g[static_cast<std::size_t>(h) * W + w];
        transform(col.data(), H, sign);
        for (int h = 0; h < H; ++h) g[static_cast<std::size_t>(h) * W + w] = col[static_cast<std::size_t>(h)];
    }
}

} // namespace

void transform(std::complex<double>* a, int n, int sign) {
    if (n <= 1) return;
    if (is_pow2(n)) {
        radix2(a, n, sign);
    } else {
        direct(a, n, sign);
    }
}

void plane_rdft2(const float* x, int H, int W, float* out_re, float* out_im) {
    const int Wh = W / 2 + 1;
    std::vector<std::complex<double>> g(static_cast<std::size_t>(H) * W);
    for (int i = 0; i < H * W; ++i) g[static_cast<std::size_t>(i)] = std::complex<double>(x[i], 0.0);
    grid_transform(g, H, W, -1);
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < Wh; ++v) {
            const std::complex<double>& z = g[static_cast<std::size_t>(u) * W + v];
            out_re[u * Wh + v] = static_cast<float>(z.real());
            out_im[u * Wh + v] = static_cast<float>(z.imag());
        }
    }
}

void plane_rdft2_adjoint(const float* g_re, const float* g_im, int H, int W, float* out_x) {
    const int Wh = W / 2 + 1;
    std::vector<std::complex<double>> g(static_cast<std::size_t>(H) * W, std::complex<double>(0.0, 0.0));
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < Wh; ++v) {
            g[static_cast<std::size_t>(u) * W + v] =
                std::complex<double>(g_re[u * Wh + v], g_im[u * Wh + v]);
        }
    }
    grid_transform(g, H, W, +1);
    for (int i = 0; i < H * W; ++i) out_x[i] = static_cast<float>(g[static_cast<std::size_t>(i)].real());
}

} // namespace spikeir::fft
