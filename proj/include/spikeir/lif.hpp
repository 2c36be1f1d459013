#pragma once

#include <cstdint>

#include "spikeir/tape.hpp"
#include "spikeir/tensor.hpp"

namespace spikeir {

// Leaky integrate-and-fire neuron. The membrane update is
//   u_t = beta * v_t + I_t,   spike when u_t >= v_th,
//   soft reset: v_{t+1} = u_t - v_th * s_t,   hard reset: v_{t+1} = u_t * (1 - s_t).
// The backward pass substitutes the arctan surrogate for the threshold and
// detaches the reset term (no gradient through -v_th * s_t).
struct LifParams {
    enum class Reset { Soft, Hard };

    float beta = 0.5f;
    float v_th = 1.0f;
    Reset reset = Reset::Soft;
    float surrogate_alpha = 2.0f;

    void validate() const {
        if (!(beta > 0.0f && beta <= 1.0f)) throw ConfigError("LifParams: beta must be in (0,1]");
        if (!(v_th > 0.0f)) throw ConfigError("LifParams: v_th must be positive");
        if (!(surrogate_alpha > 0.0f)) throw ConfigError("LifParams: surrogate_alpha must be positive");
    }
};

// Per-layer membrane potential carried across time steps of one forward pass.
struct LifState {
    Tensor v;
};

// dS/du = alpha / (2 * (1 + (pi/2 * alpha * (u - v_th))^2)); peaks at u = v_th.
float surrogate_grad(float v_pre, const LifParams& p);

// Smooth spike S(u) = atan(pi/2 * alpha * (u - v_th)) / pi + 1/2, the
// antiderivative of surrogate_grad. Used as the forward substitute when
// gradient-checking the sequence op.
double surrogate_integral(double v_pre, const LifParams& p);

// One step of the dynamics; spikes are exactly 0 or 1.
Tensor lif_step(const Tensor& current, LifState& state, const LifParams& p);

struct LifSeqStats {
    double firing_rate = 0.0;
    std::int64_t spike_count = 0;
    std::int64_t total = 0;
    // neuron-steps whose pre-reset membrane satisfies |u| > 0.01 * v_th
    std::int64_t dense_count = 0;
    bool has_membrane = false;
    Tensor membrane; // [T,C,H,W] pre-reset membrane u_t when requested
};

// Runs the dynamics from a zero state over currents [T,C,H,W] (value level,
// no gradient tracking).
Tensor lif_sequence(const Tensor& currents, const LifParams& p, LifSeqStats* stats = nullptr,
                    bool want_membrane = false);

struct LifSeqOut {
    TensorId spikes;
    TensorId membrane; // pre-reset membrane u_t, same shape as spikes
};

// Tape op over currents [T,C,H,W]. With smooth=true the emitted spike values
// are the surrogate integral S(u_t) instead of the hard threshold (the reset
// still uses the hard decision); this is the finite-difference oracle mode.
LifSeqOut lif_sequence(Tape& tape, TensorId currents, const LifParams& p,
                       LifSeqStats* stats = nullptr, bool smooth = false);

} // namespace spikeir
