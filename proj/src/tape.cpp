#include "spikeir/tape.hpp"

#include <algorithm>
#include <cmath>

#include "spikeir/fft.hpp"
#include "spikeir/parallel.hpp"

namespace spikeir {

void Tape::backward(TensorId loss) {
    if (nodes_.empty() && slots_.empty()) throw ContractError("backward on empty tape");
    if (val(loss).size() != 1) throw ContractError("backward requires a scalar loss");
    grad(loss)[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
    for (auto& s : slots_) {
        if (s.external && s.requires_grad && !s.grad.empty()) {
            auto& g = s.external->grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
        }
    }
}

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw DimensionError(msg);
}

// Output extent of a same-padded correlation: (H + 2p - k)/stride + 1.
int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

} // namespace

// ---------------------------------------------------------------------------
// conv2d

namespace {

// The conv kernels copy the input into zero-padded scratch planes once per
// call, so the accumulation loops run branch-free over contiguous rows.
struct PaddedPlanes {
    std::vector<float> data;
    int planes = 0, ph_n = 0, pw_n = 0;

    PaddedPlanes(const Tensor& x, int ph, int pw) {
        planes = x.dim(0) * x.dim(1);
        ph_n = x.dim(2) + 2 * ph;
        pw_n = x.dim(3) + 2 * pw;
        data.assign(static_cast<std::size_t>(planes) * ph_n * pw_n, 0.0f);
        const int h = x.dim(2), w = x.dim(3);
        for (int p = 0; p < planes; ++p)
            for (int row = 0; row < h; ++row) {
                const float* src = x.data() + (static_cast<std::size_t>(p) * h + row) * w;
                float* dst = plane(p) + static_cast<std::size_t>(row + ph) * pw_n + pw;
                std::copy(src, src + w, dst);
            }
    }

    float* plane(int p) { return data.data() + static_cast<std::size_t>(p) * ph_n * pw_n; }
    const float* plane(int p) const { return data.data() + static_cast<std::size_t>(p) * ph_n * pw_n; }
};

// Two loop orders cover the shape range: row-major passes vectorize along
// the output row (wide shallow layers), pixel-major passes vectorize across
// output channels (narrow deep and strided layers).
bool pixel_major_wins(int vec_channels, int ow_n, int stride) {
    return vec_channels > ow_n || (stride > 1 && vec_channels >= 8);
}

Tensor conv_forward(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int ph, int pw) {
    const int t_n = x.dim(0), ci_n = x.dim(1), co_n = k.dim(0);
    const int kh_n = k.dim(2), kw_n = k.dim(3);
    const int oh_n = conv_out_extent(x.dim(2), kh_n, stride, ph);
    const int ow_n = conv_out_extent(x.dim(3), kw_n, stride, pw);
    require(oh_n >= 1 && ow_n >= 1, "conv2d output would be empty");
    Tensor y({t_n, co_n, oh_n, ow_n});
    const float* b = bias ? bias->data() : nullptr;
    const PaddedPlanes pad(x, ph, pw);

    if (pixel_major_wins(co_n, ow_n, stride)) {
        // weights transposed to [ci][kh][kw][co] so the inner loop runs
        // contiguously over output channels
        std::vector<float> ktr(static_cast<std::size_t>(ci_n) * kh_n * kw_n * co_n);
        for (int co = 0; co < co_n; ++co)
            for (int ci = 0; ci < ci_n; ++ci)
                for (int kh = 0; kh < kh_n; ++kh)
                    for (int kw = 0; kw < kw_n; ++kw)
                        ktr[static_cast<std::size_t>(((ci * kh_n + kh) * kw_n + kw)) * co_n + co] =
                            k.at(co, ci, kh, kw);
        const std::size_t npix = static_cast<std::size_t>(oh_n) * ow_n;
        parallel_for(t_n, [&](int t) {
            std::vector<double> acc(npix * co_n);
            for (std::size_t p = 0; p < npix; ++p)
                for (int co = 0; co < co_n; ++co)
                    acc[p * co_n + co] = b ? static_cast<double>(b[co]) : 0.0;
            for (int ci = 0; ci < ci_n; ++ci) {
                const float* xp = pad.plane(t * ci_n + ci);
                for (int kh = 0; kh < kh_n; ++kh)
                    for (int kw = 0; kw < kw_n; ++kw) {
                        const float* wrow =
                            ktr.data() + static_cast<std::size_t>((ci * kh_n + kh) * kw_n + kw) * co_n;
                        for (int oh = 0; oh < oh_n; ++oh) {
                            const float* xr =
                                xp + static_cast<std::size_t>(oh * stride + kh) * pad.pw_n + kw;
                            double* ar = acc.data() + static_cast<std::size_t>(oh) * ow_n * co_n;
                            for (int ow = 0; ow < ow_n; ++ow) {
                                const double xv = xr[ow * stride];
                                double* a = ar + static_cast<std::size_t>(ow) * co_n;
                                for (int co = 0; co < co_n; ++co) a[co] += xv * wrow[co];
                            }
                        }
                    }
            }
            for (int co = 0; co < co_n; ++co) {
                float* out = &y.values()[static_cast<std::size_t>(y.index(t, co, 0, 0))];
                for (std::size_t p = 0; p < npix; ++p) out[p] = static_cast<float>(acc[p * co_n + co]);
            }
        });
        return y;
    }

    parallel_for(t_n * co_n, [&](int plane) {
        const int t = plane / co_n, co = plane % co_n;
        std::vector<double> buf(static_cast<std::size_t>(oh_n) * ow_n,
                                b ? static_cast<double>(b[co]) : 0.0);
        for (int ci = 0; ci < ci_n; ++ci) {
            const float* xp = pad.plane(t * ci_n + ci);
            const float* kr = &k.values()[static_cast<std::size_t>(k.index(co, ci, 0, 0))];
            for (int kh = 0; kh < kh_n; ++kh) {
                if (kw_n == 3 && stride == 1) {
                    const double w0 = kr[kh * 3], w1 = kr[kh * 3 + 1], w2 = kr[kh * 3 + 2];
                    for (int oh = 0; oh < oh_n; ++oh) {
                        const float* xr = xp + static_cast<std::size_t>(oh + kh) * pad.pw_n;
                        double* br = buf.data() + static_cast<std::size_t>(oh) * ow_n;
                        for (int ow = 0; ow < ow_n; ++ow)
                            br[ow] += w0 * xr[ow] + w1 * xr[ow + 1] + w2 * xr[ow + 2];
                    }
                } else {
                    for (int kw = 0; kw < kw_n; ++kw) {
                        const double wgt = kr[kh * kw_n + kw];
                        for (int oh = 0; oh < oh_n; ++oh) {
                            const float* xr =
                                xp + static_cast<std::size_t>(oh * stride + kh) * pad.pw_n + kw;
                            double* br = buf.data() + static_cast<std::size_t>(oh) * ow_n;
                            if (stride == 1) {
                                for (int ow = 0; ow < ow_n; ++ow) br[ow] += wgt * xr[ow];
                            } else {
                                for (int ow = 0; ow < ow_n; ++ow) br[ow] += wgt * xr[ow * stride];
                            }
                        }
                    }
                }
            }
        }
        float* out = &y.values()[static_cast<std::size_t>(y.index(t, co, 0, 0))];
        for (std::size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<float>(buf[i]);
    });
    return y;
}

void conv_backward_input(const Tensor& gy, const Tensor& k, int stride, int ph, int pw,
                         const Shape& xshape, std::vector<float>& gx) {
    const int t_n = xshape[0], ci_n = xshape[1], h = xshape[2], w = xshape[3];
    const int co_n = k.dim(0), kh_n = k.dim(2), kw_n = k.dim(3);
    const int oh_n = gy.dim(2), ow_n = gy.dim(3);
    const int ph_n = h + 2 * ph, pw_n = w + 2 * pw;

    if (pixel_major_wins(ci_n, ow_n, stride)) {
        std::vector<float> ktr(static_cast<std::size_t>(co_n) * kh_n * kw_n * ci_n);
        for (int co = 0; co < co_n; ++co)
            for (int ci = 0; ci < ci_n; ++ci)
                for (int kh = 0; kh < kh_n; ++kh)
                    for (int kw = 0; kw < kw_n; ++kw)
                        ktr[static_cast<std::size_t>(((co * kh_n + kh) * kw_n + kw)) * ci_n + ci] =
                            k.at(co, ci, kh, kw);
        parallel_for(t_n, [&](int t) {
            std::vector<double> acc(static_cast<std::size_t>(ph_n) * pw_n * ci_n, 0.0);
            for (int co = 0; co < co_n; ++co)
                for (int kh = 0; kh < kh_n; ++kh)
                    for (int kw = 0; kw < kw_n; ++kw) {
                        const float* wrow =
                            ktr.data() + static_cast<std::size_t>((co * kh_n + kh) * kw_n + kw) * ci_n;
                        for (int oh = 0; oh < oh_n; ++oh) {
                            const float* gr = &gy.values()[static_cast<std::size_t>(gy.index(t, co, oh, 0))];
                            double* arow = acc.data() +
                                           (static_cast<std::size_t>(oh * stride + kh) * pw_n + kw) * ci_n;
                            for (int ow = 0; ow < ow_n; ++ow) {
                                const double gv = gr[ow];
                                double* a = arow + static_cast<std::size_t>(ow) * stride * ci_n;
                                for (int ci = 0; ci < ci_n; ++ci) a[ci] += gv * wrow[ci];
                            }
                        }
                    }
            for (int ci = 0; ci < ci_n; ++ci) {
                const std::size_t base =
                    static_cast<std::size_t>(t) * ci_n * h * w + static_cast<std::size_t>(ci) * h * w;
                for (int row = 0; row < h; ++row)
                    for (int col = 0; col < w; ++col)
                        gx[base + static_cast<std::size_t>(row) * w + col] += static_cast<float>(
                            acc[(static_cast<std::size_t>(row + ph) * pw_n + col + pw) * ci_n + ci]);
            }
        });
        return;
    }

    parallel_for(t_n * ci_n, [&](int plane) {
        const int t = plane / ci_n, ci = plane % ci_n;
        // accumulate into a zero-padded scratch, then strip the halo
        std::vector<double> buf(static_cast<std::size_t>(ph_n) * pw_n, 0.0);
        for (int co = 0; co < co_n; ++co) {
            const float* kr = &k.values()[static_cast<std::size_t>(k.index(co, ci, 0, 0))];
            for (int kh = 0; kh < kh_n; ++kh) {
                for (int kw = 0; kw < kw_n; ++kw) {
                    const double wgt = kr[kh * kw_n + kw];
                    for (int oh = 0; oh < oh_n; ++oh) {
                        const float* gr = &gy.values()[static_cast<std::size_t>(gy.index(t, co, oh, 0))];
                        double* br = buf.data() + static_cast<std::size_t>(oh * stride + kh) * pw_n + kw;
                        if (stride == 1) {
                            for (int ow = 0; ow < ow_n; ++ow) br[ow] += wgt * gr[ow];
                        } else {
                            for (int ow = 0; ow < ow_n; ++ow) br[ow * stride] += wgt * gr[ow];
                        }
                    }
                }
            }
        }
        const std::size_t base =
            static_cast<std::size_t>(t) * ci_n * h * w + static_cast<std::size_t>(ci) * h * w;
        for (int row = 0; row < h; ++row) {
            const double* src = buf.data() + static_cast<std::size_t>(row + ph) * pw_n + pw;
            for (int col = 0; col < w; ++col)
                gx[base + static_cast<std::size_t>(row) * w + col] += static_cast<float>(src[col]);
        }
    });
}

void conv_backward_kernel(const Tensor& gy, const Tensor& x, int stride, int ph, int pw,
                          const Shape& kshape, std::vector<float>& gk) {
    const int co_n = kshape[0], ci_n = kshape[1], kh_n = kshape[2], kw_n = kshape[3];
    const int t_n = x.dim(0);
    const int oh_n = gy.dim(2), ow_n = gy.dim(3);
    const PaddedPlanes pad(x, ph, pw);

    if (pixel_major_wins(co_n, ow_n, stride)) {
        // gy transposed to [t][pixel][co]: the reduction runs as channel-wide
        // axpys instead of a serial chain
        const std::size_t npix = static_cast<std::size_t>(oh_n) * ow_n;
        std::vector<float> gtr(static_cast<std::size_t>(t_n) * npix * co_n);
        for (int t = 0; t < t_n; ++t)
            for (int co = 0; co < co_n; ++co) {
                const float* gr = &gy.values()[static_cast<std::size_t>(gy.index(t, co, 0, 0))];
                float* dst = gtr.data() + static_cast<std::size_t>(t) * npix * co_n + co;
                for (std::size_t p = 0; p < npix; ++p) dst[p * co_n] = gr[p];
            }
        parallel_for(ci_n, [&](int ci) {
            std::vector<double> acc(static_cast<std::size_t>(co_n));
            for (int kh = 0; kh < kh_n; ++kh)
                for (int kw = 0; kw < kw_n; ++kw) {
                    std::fill(acc.begin(), acc.end(), 0.0);
                    for (int t = 0; t < t_n; ++t) {
                        const float* xp = pad.plane(t * ci_n + ci);
                        const float* gbase = gtr.data() + static_cast<std::size_t>(t) * npix * co_n;
                        for (int oh = 0; oh < oh_n; ++oh) {
                            const float* xr =
                                xp + static_cast<std::size_t>(oh * stride + kh) * pad.pw_n + kw;
                            for (int ow = 0; ow < ow_n; ++ow) {
                                const double xv = xr[ow * stride];
                                const float* g =
                                    gbase + (static_cast<std::size_t>(oh) * ow_n + ow) * co_n;
                                for (int co = 0; co < co_n; ++co) acc[static_cast<std::size_t>(co)] += xv * g[co];
                            }
                        }
                    }
                    for (int co = 0; co < co_n; ++co)
                        gk[static_cast<std::size_t>(((co * ci_n + ci) * kh_n + kh) * kw_n + kw)] +=
                            static_cast<float>(acc[static_cast<std::size_t>(co)]);
                }
        });
        return;
    }

    parallel_for(co_n, [&](int co) {
        for (int ci = 0; ci < ci_n; ++ci) {
            for (int kh = 0; kh < kh_n; ++kh) {
                if (kw_n == 3 && stride == 1) {
                    // one pass accumulating the three taps of this kernel row;
                    // even/odd stripes break the serial dependency chains
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0, b0 = 0.0, b1 = 0.0, b2 = 0.0;
                    for (int t = 0; t < t_n; ++t) {
                        const float* xp = pad.plane(t * ci_n + ci);
                        for (int oh = 0; oh < oh_n; ++oh) {
                            const float* gr = &gy.values()[static_cast<std::size_t>(gy.index(t, co, oh, 0))];
                            const float* xr = xp + static_cast<std::size_t>(oh + kh) * pad.pw_n;
                            int ow = 0;
                            for (; ow + 2 <= ow_n; ow += 2) {
                                const double g0 = gr[ow], g1 = gr[ow + 1];
                                a0 += g0 * xr[ow];
                                a1 += g0 * xr[ow + 1];
                                a2 += g0 * xr[ow + 2];
                                b0 += g1 * xr[ow + 1];
                                b1 += g1 * xr[ow + 2];
                                b2 += g1 * xr[ow + 3];
                            }
                            for (; ow < ow_n; ++ow) {
                                const double g = gr[ow];
                                a0 += g * xr[ow];
                                a1 += g * xr[ow + 1];
                                a2 += g * xr[ow + 2];
                            }
                        }
                    }
                    const std::size_t base =
                        static_cast<std::size_t>((co * ci_n + ci) * kh_n + kh) * 3;
                    gk[base] += static_cast<float>(a0 + b0);
                    gk[base + 1] += static_cast<float>(a1 + b1);
                    gk[base + 2] += static_cast<float>(a2 + b2);
                } else {
                    for (int kw = 0; kw < kw_n; ++kw) {
                        double acc = 0.0;
                        for (int t = 0; t < t_n; ++t) {
                            const float* xp = pad.plane(t * ci_n + ci);
                            for (int oh = 0; oh < oh_n; ++oh) {
                                const float* gr =
                                    &gy.values()[static_cast<std::size_t>(gy.index(t, co, oh, 0))];
                                const float* xr =
                                    xp + static_cast<std::size_t>(oh * stride + kh) * pad.pw_n + kw;
                                if (stride == 1) {
                                    for (int ow = 0; ow < ow_n; ++ow)
                                        acc += static_cast<double>(gr[ow]) * xr[ow];
                                } else {
                                    for (int ow = 0; ow < ow_n; ++ow)
                                        acc += static_cast<double>(gr[ow]) * xr[ow * stride];
                                }
                            }
                        }
                        gk[static_cast<std::size_t>(((co * ci_n + ci) * kh_n + kh) * kw_n + kw)] +=
                            static_cast<float>(acc);
                    }
                }
            }
        }
    });
}

} // namespace

TensorId conv2d(Tape& tape, TensorId input, TensorId kernel, TensorId bias, int stride, int pad) {
    const Tensor& x = tape.val(input);
    const Tensor& k = tape.val(kernel);
    if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
    require(k.dim(2) % 2 == 1 && k.dim(3) % 2 == 1, "conv2d kernel extents must be odd");
    require(x.dim(1) == k.dim(1), "conv2d input/kernel channel mismatch");
    const int ph = pad >= 0 ? pad : (k.dim(2) - 1) / 2;
    const int pw = pad >= 0 ? pad : (k.dim(3) - 1) / 2;
    const Tensor* b = nullptr;
    if (bias >= 0) {
        b = &tape.val(bias);
        require(b->dim(0) == 1 && b->dim(1) == k.dim(0) && b->dim(2) == 1 && b->dim(3) == 1,
                "conv2d bias must be [1,Cout,1,1]");
    }
    bool needs = tape.needs_grad(input) || tape.needs_grad(kernel) || (bias >= 0 && tape.needs_grad(bias));
    TensorId out = tape.make(conv_forward(x, k, b, stride, ph, pw), needs, "conv2d");
    if (needs) {
        tape.record([input, kernel, bias, out, stride, ph, pw](Tape& t) {
            const Tensor& gy_t = t.val(out);
            Tensor gy = gy_t;
            gy.values() = t.grad(out);
            const Tensor& x2 = t.val(input);
            const Tensor& k2 = t.val(kernel);
            if (t.needs_grad(input)) conv_backward_input(gy, k2, stride, ph, pw, x2.shape(), t.grad(input));
            if (t.needs_grad(kernel)) conv_backward_kernel(gy, x2, stride, ph, pw, k2.shape(), t.grad(kernel));
            if (bias >= 0 && t.needs_grad(bias)) {
                auto& gb = t.grad(bias);
                const int co_n = k2.dim(0);
                for (int co = 0; co < co_n; ++co) {
                    double acc = 0.0;
                    for (int tt = 0; tt < gy.dim(0); ++tt)
                        for (int oh = 0; oh < gy.dim(2); ++oh)
                            for (int ow = 0; ow < gy.dim(3); ++ow) acc += gy.at(tt, co, oh, ow);
                    gb[static_cast<std::size_t>(co)] += static_cast<float>(acc);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise

TensorId relu(Tape& tape, TensorId x) {
    const Tensor& xv = tape.val(x);
    Tensor y(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) {
        float v = xv.data()[i];
        y.data()[i] = v > 0.0f ? v : 0.0f;
    }
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "relu");
    if (needs) {
        tape.record([x, out](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            for (std::size_t i = 0; i < gx.size(); ++i)
                if (xv2.data()[i] > 0.0f) gx[i] += gy[i];
        });
    }
    return out;
}

TensorId sigmoid(Tape& tape, TensorId x) {
    const Tensor& xv = tape.val(x);
    Tensor y(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i)
        y.data()[i] = 1.0f / (1.0f + std::exp(-xv.data()[i]));
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "sigmoid");
    if (needs) {
        tape.record([x, out](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& yv = t.val(out);
            auto& gx = t.grad(x);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                float s = yv.data()[i];
                gx[i] += gy[i] * s * (1.0f - s);
            }
        });
    }
    return out;
}

namespace {

TensorId add_sub(Tape& tape, TensorId a, TensorId b, float sign, const char* name) {
    const Tensor& av = tape.val(a);
    const Tensor& bv = tape.val(b);
    require(av.same_shape(bv), "elementwise operands must have equal shapes");
    Tensor y(av.shape());
    for (std::int64_t i = 0; i < av.size(); ++i) y.data()[i] = av.data()[i] + sign * bv.data()[i];
    bool needs = tape.needs_grad(a) || tape.needs_grad(b);
    TensorId out = tape.make(std::move(y), needs, name);
    if (needs) {
        tape.record([a, b, out, sign](Tape& t) {
            const auto& gy = t.grad(out);
            if (t.needs_grad(a)) {
                auto& ga = t.grad(a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
            }
            if (t.needs_grad(b)) {
                auto& gb = t.grad(b);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * gy[i];
            }
        });
    }
    return out;
}

} // namespace

TensorId add(Tape& tape, TensorId a, TensorId b) { return add_sub(tape, a, b, 1.0f, "add"); }
TensorId sub(Tape& tape, TensorId a, TensorId b) { return add_sub(tape, a, b, -1.0f, "sub"); }

TensorId scale(Tape& tape, TensorId x, float s) {
    const Tensor& xv = tape.val(x);
    Tensor y(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) y.data()[i] = s * xv.data()[i];
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "scale");
    if (needs) {
        tape.record([x, out, s](Tape& t) {
            const auto& gy = t.grad(out);
            auto& gx = t.grad(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * gy[i];
        });
    }
    return out;
}

TensorId mul(Tape& tape, TensorId x, TensorId g) {
    const Tensor& xv = tape.val(x);
    const Tensor& gv = tape.val(g);
    for (int d = 0; d < 4; ++d)
        require(gv.dim(d) == xv.dim(d) || gv.dim(d) == 1, "mul: gate extent must match or be 1");
    const Shape xs = xv.shape(), gs = gv.shape();
    auto gate_index = [gs](int t, int c, int h, int w) {
        return ((static_cast<std::int64_t>(gs[0] == 1 ? 0 : t) * gs[1] + (gs[1] == 1 ? 0 : c)) * gs[2] +
                (gs[2] == 1 ? 0 : h)) * gs[3] + (gs[3] == 1 ? 0 : w);
    };
    Tensor y(xs);
    for (int t = 0; t < xs[0]; ++t)
        for (int c = 0; c < xs[1]; ++c)
            for (int h = 0; h < xs[2]; ++h)
                for (int w = 0; w < xs[3]; ++w)
                    y.at(t, c, h, w) = xv.at(t, c, h, w) * gv.data()[gate_index(t, c, h, w)];
    bool needs = tape.needs_grad(x) || tape.needs_grad(g);
    TensorId out = tape.make(std::move(y), needs, "mul");
    if (needs) {
        tape.record([x, g, out, xs, gate_index](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& xv2 = t.val(x);
            const Tensor& gv2 = t.val(g);
            const bool nx = t.needs_grad(x), ng = t.needs_grad(g);
            auto* gx = nx ? &t.grad(x) : nullptr;
            auto* gg = ng ? &t.grad(g) : nullptr;
            std::int64_t i = 0;
            for (int tt = 0; tt < xs[0]; ++tt)
                for (int c = 0; c < xs[1]; ++c)
                    for (int h = 0; h < xs[2]; ++h)
                        for (int w = 0; w < xs[3]; ++w, ++i) {
                            const std::int64_t gi = gate_index(tt, c, h, w);
                            if (nx) (*gx)[static_cast<std::size_t>(i)] +=
                                gy[static_cast<std::size_t>(i)] * gv2.data()[gi];
                            if (ng) (*gg)[static_cast<std::size_t>(gi)] +=
                                gy[static_cast<std::size_t>(i)] * xv2.data()[i];
                        }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions

TensorId reduce_mean(Tape& tape, TensorId x, int axis) {
    const Tensor& xv = tape.val(x);
    if (axis < 0 || axis > 3) throw DimensionError("reduce_mean axis must be in 0..3");
    const int n = xv.dim(axis);
    if (n == 0) throw DimensionError("reduce_mean over empty axis");
    Shape os = xv.shape();
    os[static_cast<std::size_t>(axis)] = 1;
    std::vector<double> acc(static_cast<std::size_t>(shape_numel(os)), 0.0);
    const Shape xs = xv.shape();
    Tensor y(os);
    std::int64_t i = 0;
    for (int t = 0; t < xs[0]; ++t)
        for (int c = 0; c < xs[1]; ++c)
            for (int h = 0; h < xs[2]; ++h)
                for (int w = 0; w < xs[3]; ++w, ++i) {
                    int idx[4] = {t, c, h, w};
                    idx[axis] = 0;
                    acc[static_cast<std::size_t>(y.index(idx[0], idx[1], idx[2], idx[3]))] += xv.data()[i];
                }
    for (std::size_t j = 0; j < acc.size(); ++j) y.data()[j] = static_cast<float>(acc[j] / n);
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "reduce_mean");
    if (needs) {
        tape.record([x, out, axis, n, xs](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& yv = t.val(out);
            auto& gx = t.grad(x);
            std::int64_t i = 0;
            const float inv = 1.0f / static_cast<float>(n);
            for (int tt = 0; tt < xs[0]; ++tt)
                for (int c = 0; c < xs[1]; ++c)
                    for (int h = 0; h < xs[2]; ++h)
                        for (int w = 0; w < xs[3]; ++w, ++i) {
                            int idx[4] = {tt, c, h, w};
                            idx[axis] = 0;
                            gx[static_cast<std::size_t>(i)] +=
                                inv * gy[static_cast<std::size_t>(yv.index(idx[0], idx[1], idx[2], idx[3]))];
                        }
        });
    }
    return out;
}

TensorId mean_all(Tape& tape, TensorId x) {
    const Tensor& xv = tape.val(x);
    if (xv.size() == 0) throw DimensionError("mean_all of empty tensor");
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv.data()[i];
    const double n = static_cast<double>(xv.size());
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(Tensor::scalar(static_cast<float>(acc / n)), needs, "mean_all");
    if (needs) {
        tape.record([x, out, n](Tape& t) {
            const float g = t.grad(out)[0] / static_cast<float>(n);
            auto& gx = t.grad(x);
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

TensorId abs_sum(Tape& tape, TensorId x) {
    const Tensor& xv = tape.val(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += std::fabs(static_cast<double>(xv.data()[i]));
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(Tensor::scalar(static_cast<float>(acc)), needs, "abs_sum");
    if (needs) {
        tape.record([x, out](Tape& t) {
            const float g = t.grad(out)[0];
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                float v = xv2.data()[i];
                gx[i] += v > 0.0f ? g : (v < 0.0f ? -g : 0.0f);
            }
        });
    }
    return out;
}

namespace {

TensorId pair_mean(Tape& tape, TensorId a, TensorId b, bool squared, const char* name) {
    const Tensor& av = tape.val(a);
    const Tensor& bv = tape.val(b);
    require(av.same_shape(bv), "loss operands must have equal shapes");
    const double n = static_cast<double>(av.size());
    double acc = 0.0;
    for (std::int64_t i = 0; i < av.size(); ++i) {
        double d = static_cast<double>(av.data()[i]) - bv.data()[i];
        acc += squared ? d * d : std::fabs(d);
    }
    bool needs = tape.needs_grad(a) || tape.needs_grad(b);
    TensorId out = tape.make(Tensor::scalar(static_cast<float>(acc / n)), needs, name);
    if (needs) {
        tape.record([a, b, out, n, squared](Tape& t) {
            const float g = t.grad(out)[0];
            const Tensor& av2 = t.val(a);
            const Tensor& bv2 = t.val(b);
            const bool na = t.needs_grad(a), nb = t.needs_grad(b);
            auto* ga = na ? &t.grad(a) : nullptr;
            auto* gb = nb ? &t.grad(b) : nullptr;
            const float inv = g / static_cast<float>(n);
            for (std::int64_t i = 0; i < av2.size(); ++i) {
                float d = av2.data()[i] - bv2.data()[i];
                float gi = squared ? 2.0f * d * inv : (d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f));
                if (na) (*ga)[static_cast<std::size_t>(i)] += gi;
                if (nb) (*gb)[static_cast<std::size_t>(i)] -= gi;
            }
        });
    }
    return out;
}

} // namespace

TensorId l1_mean(Tape& tape, TensorId a, TensorId b) { return pair_mean(tape, a, b, false, "l1_mean"); }
TensorId mse_mean(Tape& tape, TensorId a, TensorId b) { return pair_mean(tape, a, b, true, "mse_mean"); }

// ---------------------------------------------------------------------------
// resampling

namespace {

struct Tap {
    int lo, hi;
    double frac;
};

// align-corners=false source coordinate; clamped so out-of-range samples
// repeat the border pixel.
Tap resize_tap(int dst, int in_n, int out_n) {
    double src = (dst + 0.5) * (static_cast<double>(in_n) / out_n) - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > in_n - 1) src = in_n - 1;
    int lo = static_cast<int>(src);
    if (lo > in_n - 1) lo = in_n - 1;
    int hi = std::min(lo + 1, in_n - 1);
    return Tap{lo, hi, src - lo};
}

} // namespace

TensorId bilinear_resize(Tape& tape, TensorId x, int out_h, int out_w) {
    const Tensor& xv = tape.val(x);
    if (out_h < 1 || out_w < 1) throw ConfigError("bilinear_resize target extents must be >= 1");
    const int t_n = xv.dim(0), c_n = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    std::vector<Tap> th(static_cast<std::size_t>(out_h)), tw(static_cast<std::size_t>(out_w));
    for (int i = 0; i < out_h; ++i) th[static_cast<std::size_t>(i)] = resize_tap(i, h, out_h);
    for (int i = 0; i < out_w; ++i) tw[static_cast<std::size_t>(i)] = resize_tap(i, w, out_w);
    Tensor y({t_n, c_n, out_h, out_w});
    for (int t = 0; t < t_n; ++t)
        for (int c = 0; c < c_n; ++c)
            for (int oh = 0; oh < out_h; ++oh) {
                const Tap& a = th[static_cast<std::size_t>(oh)];
                for (int ow = 0; ow < out_w; ++ow) {
                    const Tap& b = tw[static_cast<std::size_t>(ow)];
                    double v = (1.0 - a.frac) * (1.0 - b.frac) * xv.at(t, c, a.lo, b.lo) +
                               (1.0 - a.frac) * b.frac * xv.at(t, c, a.lo, b.hi) +
                               a.frac * (1.0 - b.frac) * xv.at(t, c, a.hi, b.lo) +
                               a.frac * b.frac * xv.at(t, c, a.hi, b.hi);
                    y.at(t, c, oh, ow) = static_cast<float>(v);
                }
            }
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "bilinear_resize");
    if (needs) {
        tape.record([x, out, th, tw, t_n, c_n, out_h, out_w](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& yv = t.val(out);
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            for (int tt = 0; tt < t_n; ++tt)
                for (int c = 0; c < c_n; ++c)
                    for (int oh = 0; oh < out_h; ++oh) {
                        const Tap& a = th[static_cast<std::size_t>(oh)];
                        for (int ow = 0; ow < out_w; ++ow) {
                            const Tap& b = tw[static_cast<std::size_t>(ow)];
                            const float g = gy[static_cast<std::size_t>(yv.index(tt, c, oh, ow))];
                            gx[static_cast<std::size_t>(xv2.index(tt, c, a.lo, b.lo))] +=
                                static_cast<float>((1.0 - a.frac) * (1.0 - b.frac)) * g;
                            gx[static_cast<std::size_t>(xv2.index(tt, c, a.lo, b.hi))] +=
                                static_cast<float>((1.0 - a.frac) * b.frac) * g;
                            gx[static_cast<std::size_t>(xv2.index(tt, c, a.hi, b.lo))] +=
                                static_cast<float>(a.frac * (1.0 - b.frac)) * g;
                            gx[static_cast<std::size_t>(xv2.index(tt, c, a.hi, b.hi))] +=
                                static_cast<float>(a.frac * b.frac) * g;
                        }
                    }
        });
    }
    return out;
}

TensorId channel_avg_pool(Tape& tape, TensorId x, int out_c) {
    const Tensor& xv = tape.val(x);
    const int c_n = xv.dim(1);
    if (out_c < 1 || out_c > c_n) throw DimensionError("channel_avg_pool: target channels out of range");
    const int gs = (c_n + out_c - 1) / out_c; // trailing group padded by repeating the last channel
    const int t_n = xv.dim(0), h = xv.dim(2), w = xv.dim(3);
    Tensor y({t_n, out_c, h, w});
    for (int t = 0; t < t_n; ++t)
        for (int g = 0; g < out_c; ++g)
            for (int hh = 0; hh < h; ++hh)
                for (int ww = 0; ww < w; ++ww) {
                    double acc = 0.0;
                    for (int j = 0; j < gs; ++j) {
                        int ci = std::min(g * gs + j, c_n - 1);
                        acc += xv.at(t, ci, hh, ww);
                    }
                    y.at(t, g, hh, ww) = static_cast<float>(acc / gs);
                }
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "channel_avg_pool");
    if (needs) {
        tape.record([x, out, out_c, gs, c_n, t_n, h, w](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& yv = t.val(out);
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            const float inv = 1.0f / static_cast<float>(gs);
            for (int tt = 0; tt < t_n; ++tt)
                for (int g = 0; g < out_c; ++g)
                    for (int hh = 0; hh < h; ++hh)
                        for (int ww = 0; ww < w; ++ww) {
                            const float gv = gy[static_cast<std::size_t>(yv.index(tt, g, hh, ww))] * inv;
                            for (int j = 0; j < gs; ++j) {
                                int ci = std::min(g * gs + j, c_n - 1);
                                gx[static_cast<std::size_t>(xv2.index(tt, ci, hh, ww))] += gv;
                            }
                        }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// spectra

std::pair<TensorId, TensorId> rdft2(Tape& tape, TensorId x) {
    const Tensor& xv = tape.val(x);
    const int t_n = xv.dim(0), c_n = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h < 1 || w < 1) throw DimensionError("rdft2 requires H,W >= 1");
    const int wh = w / 2 + 1;
    Tensor re({t_n, c_n, h, wh}), im({t_n, c_n, h, wh});
    for (int t = 0; t < t_n; ++t)
        for (int c = 0; c < c_n; ++c) {
            const std::size_t xoff = static_cast<std::size_t>(xv.index(t, c, 0, 0));
            const std::size_t ooff = static_cast<std::size_t>(re.index(t, c, 0, 0));
            fft::plane_rdft2(xv.data() + xoff, h, w, re.data() + ooff, im.data() + ooff);
        }
    bool needs = tape.needs_grad(x);
    TensorId out_re = tape.make(std::move(re), needs, "rdft2");
    TensorId out_im = tape.make(std::move(im), needs, "rdft2");
    if (needs) {
        tape.record([x, out_re, out_im, t_n, c_n, h, w](Tape& t) {
            const auto& gre = t.grad(out_re);
            const auto& gim = t.grad(out_im);
            const Tensor& rv = t.val(out_re);
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            std::vector<float> plane(static_cast<std::size_t>(h) * w);
            for (int tt = 0; tt < t_n; ++tt)
                for (int c = 0; c < c_n; ++c) {
                    const std::size_t ooff = static_cast<std::size_t>(rv.index(tt, c, 0, 0));
                    fft::plane_rdft2_adjoint(gre.data() + ooff, gim.data() + ooff, h, w, plane.data());
                    const std::size_t xoff = static_cast<std::size_t>(xv2.index(tt, c, 0, 0));
                    for (std::size_t i = 0; i < plane.size(); ++i) gx[xoff + i] += plane[i];
                }
        });
    }
    return {out_re, out_im};
}

// ---------------------------------------------------------------------------
// layout

TensorId encode_direct(Tape& tape, TensorId image, int time_steps) {
    const Tensor& xv = tape.val(image);
    if (time_steps < 1) throw ConfigError("encode_direct requires T >= 1");
    require(xv.dim(0) == 1, "encode_direct expects a [1,C,H,W] image");
    Tensor y({time_steps, xv.dim(1), xv.dim(2), xv.dim(3)});
    const std::size_t plane = static_cast<std::size_t>(xv.size());
    for (int t = 0; t < time_steps; ++t)
        std::copy(xv.data(), xv.data() + plane, y.data() + static_cast<std::size_t>(t) * plane);
    bool needs = tape.needs_grad(image);
    TensorId out = tape.make(std::move(y), needs, "encode_direct");
    if (needs) {
        tape.record([image, out, time_steps, plane](Tape& t) {
            const auto& gy = t.grad(out);
            auto& gx = t.grad(image);
            for (int tt = 0; tt < time_steps; ++tt)
                for (std::size_t i = 0; i < plane; ++i)
                    gx[i] += gy[static_cast<std::size_t>(tt) * plane + i];
        });
    }
    return out;
}

TensorId pad_reflect(Tape& tape, TensorId x, int top, int bottom, int left, int right) {
    const Tensor& xv = tape.val(x);
    const int h = xv.dim(2), w = xv.dim(3);
    if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ConfigError("negative padding");
    if (top >= h || bottom >= h || left >= w || right >= w)
        throw DimensionError("reflect padding must be smaller than the padded extent");
    const int oh_n = h + top + bottom, ow_n = w + left + right;
    auto mirror = [](int i, int n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return i;
    };
    Tensor y({xv.dim(0), xv.dim(1), oh_n, ow_n});
    for (int t = 0; t < xv.dim(0); ++t)
        for (int c = 0; c < xv.dim(1); ++c)
            for (int oh = 0; oh < oh_n; ++oh) {
                int ih = mirror(oh - top, h);
                for (int ow = 0; ow < ow_n; ++ow)
                    y.at(t, c, oh, ow) = xv.at(t, c, ih, mirror(ow - left, w));
            }
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "pad_reflect");
    if (needs) {
        tape.record([x, out, top, left, h, w, oh_n, ow_n, mirror](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& yv = t.val(out);
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            for (int tt = 0; tt < xv2.dim(0); ++tt)
                for (int c = 0; c < xv2.dim(1); ++c)
                    for (int oh = 0; oh < oh_n; ++oh) {
                        int ih = mirror(oh - top, h);
                        for (int ow = 0; ow < ow_n; ++ow)
                            gx[static_cast<std::size_t>(xv2.index(tt, c, ih, mirror(ow - left, w)))] +=
                                gy[static_cast<std::size_t>(yv.index(tt, c, oh, ow))];
                    }
        });
    }
    return out;
}

TensorId crop(Tape& tape, TensorId x, int top, int left, int out_h, int out_w) {
    const Tensor& xv = tape.val(x);
    require(top >= 0 && left >= 0 && top + out_h <= xv.dim(2) && left + out_w <= xv.dim(3),
            "crop region outside input");
    Tensor y({xv.dim(0), xv.dim(1), out_h, out_w});
    for (int t = 0; t < xv.dim(0); ++t)
        for (int c = 0; c < xv.dim(1); ++c)
            for (int oh = 0; oh < out_h; ++oh)
                for (int ow = 0; ow < out_w; ++ow)
                    y.at(t, c, oh, ow) = xv.at(t, c, oh + top, ow + left);
    bool needs = tape.needs_grad(x);
    TensorId out = tape.make(std::move(y), needs, "crop");
    if (needs) {
        tape.record([x, out, top, left, out_h, out_w](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& yv = t.val(out);
            const Tensor& xv2 = t.val(x);
            auto& gx = t.grad(x);
            for (int tt = 0; tt < xv2.dim(0); ++tt)
                for (int c = 0; c < xv2.dim(1); ++c)
                    for (int oh = 0; oh < out_h; ++oh)
                        for (int ow = 0; ow < out_w; ++ow)
                            gx[static_cast<std::size_t>(xv2.index(tt, c, oh + top, ow + left))] +=
                                gy[static_cast<std::size_t>(yv.index(tt, c, oh, ow))];
        });
    }
    return out;
}

TensorId affine_channel(Tape& tape, TensorId x, TensorId gain, TensorId bias) {
    const Tensor& xv = tape.val(x);
    const Tensor& gv = tape.val(gain);
    const Tensor& bv = tape.val(bias);
    const int c_n = xv.dim(1);
    require(gv.dim(0) == 1 && gv.dim(1) == c_n && gv.dim(2) == 1 && gv.dim(3) == 1 && bv.same_shape(gv),
            "affine_channel gain/bias must be [1,C,1,1]");
    const std::int64_t plane = static_cast<std::int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor y(xv.shape());
    for (int t = 0; t < xv.dim(0); ++t)
        for (int c = 0; c < c_n; ++c) {
            const float g = gv.data()[c], b = bv.data()[c];
            const std::int64_t off = xv.index(t, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) y.data()[off + i] = g * xv.data()[off + i] + b;
        }
    bool needs = tape.needs_grad(x) || tape.needs_grad(gain) || tape.needs_grad(bias);
    TensorId out = tape.make(std::move(y), needs, "affine_channel");
    if (needs) {
        tape.record([x, gain, bias, out, c_n, plane](Tape& t) {
            const auto& gy = t.grad(out);
            const Tensor& xv2 = t.val(x);
            const Tensor& gv2 = t.val(gain);
            const bool nx = t.needs_grad(x), ng = t.needs_grad(gain), nb = t.needs_grad(bias);
            auto* gx = nx ? &t.grad(x) : nullptr;
            auto* gg = ng ? &t.grad(gain) : nullptr;
            auto* gb = nb ? &t.grad(bias) : nullptr;
            for (int tt = 0; tt < xv2.dim(0); ++tt)
                for (int c = 0; c < c_n; ++c) {
                    const std::size_t off = static_cast<std::size_t>(xv2.index(tt, c, 0, 0));
                    double acc_g = 0.0, acc_b = 0.0;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const float gyv = gy[off + static_cast<std::size_t>(i)];
                        if (nx) (*gx)[off + static_cast<std::size_t>(i)] += gv2.data()[c] * gyv;
                        acc_g += static_cast<double>(gyv) * xv2.data()[off + static_cast<std::size_t>(i)];
                        acc_b += gyv;
                    }
                    if (ng) (*gg)[static_cast<std::size_t>(c)] += static_cast<float>(acc_g);
                    if (nb) (*gb)[static_cast<std::size_t>(c)] += static_cast<float>(acc_b);
                }
        });
    }
    return out;
}

} // namespace spikeir
