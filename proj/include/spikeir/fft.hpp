#pragma once

#include <complex>
#include <vector>

namespace spikeir::fft {

// In-place length-n complex transform with the given exponent sign
// (-1 forward, +1 unnormalized inverse). Radix-2 iterative when n is a
// power of two, direct O(n^2) evaluation otherwise. Double precision
// throughout; the contract is the DFT definition, not speed.
void transform(std::complex<double>* a, int n, int sign);

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Half-spectrum 2-D DFT of one real H x W plane:
//   X[u,v] = sum_{h,w} x[h,w] * exp(-2*pi*i*(u*h/H + v*w/W)),  v = 0..W/2.
// out_re/out_im hold H*(W/2+1) bins row-major.
void plane_rdft2(const float* x, int H, int W, float* out_re, float* out_im);

// Adjoint of plane_rdft2 viewed as a linear map R^{HW} -> R^{2*H*(W/2+1)}:
//   out_x[h,w] = Re( sum_{u, v<=W/2} (g_re + i*g_im)[u,v] * exp(+2*pi*i*(u*h/H + v*w/W)) ).
void plane_rdft2_adjoint(const float* g_re, const float* g_im, int H, int W, float* out_x);

} // namespace spikeir::fft
