#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "spikeir/tensor.hpp"

namespace spikeir {

using TensorId = int;

// Reverse-mode tape. Ops append their forward result as a new slot and, when
// gradients are enabled and some input needs them, record a backward closure.
// Recording order is topological by construction; backward() replays the
// closures in exact reverse order and accumulates additively at fan-out.
//
// One training step owns one tape (single writer). Parameters registered via
// param() keep a pointer to the caller's Tensor; backward() accumulates the
// computed gradients into that tensor's grad slot, so per-sample tapes can be
// discarded while gradients add up across a batch.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    // Constant input (never receives a gradient).
    TensorId value(Tensor t) { return push(std::move(t), false, nullptr); }

    // External leaf; requires_grad is taken from the tensor itself.
    TensorId param(Tensor& t) {
        return push(Tensor(t), grad_enabled_ && t.requires_grad(), &t);
    }

    // Used by op implementations for their outputs.
    TensorId make(Tensor t, bool requires_grad, const char* op_name) {
        t.check_finite(op_name);
        return push(std::move(t), grad_enabled_ && requires_grad, nullptr);
    }

    const Tensor& val(TensorId id) const { return slots_[static_cast<std::size_t>(id)].value; }
    Tensor& val(TensorId id) { return slots_[static_cast<std::size_t>(id)].value; }

    bool needs_grad(TensorId id) const { return slots_[static_cast<std::size_t>(id)].requires_grad; }

    std::vector<float>& grad(TensorId id) {
        auto& s = slots_[static_cast<std::size_t>(id)];
        if (s.grad.empty()) s.grad.assign(static_cast<std::size_t>(s.value.size()), 0.0f);
        return s.grad;
    }

    void record(std::function<void(Tape&)> backward) {
        if (grad_enabled_) nodes_.push_back(std::move(backward));
    }

    // Seeds d(loss)/d(loss) = 1, replays nodes in reverse, then accumulates
    // each param slot's gradient into the external tensor's grad slot.
    void backward(TensorId loss);

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_slots() const { return slots_.size(); }

private:
    struct Slot {
        Tensor value;
        std::vector<float> grad;
        bool requires_grad = false;
        Tensor* external = nullptr;
    };

    TensorId push(Tensor t, bool requires_grad, Tensor* external) {
        slots_.push_back(Slot{std::move(t), {}, requires_grad, external});
        return static_cast<TensorId>(slots_.size() - 1);
    }

    std::vector<Slot> slots_;
    std::vector<std::function<void(Tape&)>> nodes_;
    bool grad_enabled_;
};

// --- differentiable ops -----------------------------------------------------
//
// All ops are pure functions of their inputs: same inputs give bit-identical
// outputs. Shapes are [T|batch, C, H, W] throughout.

// Cross-correlation with odd kernel extents. pad < 0 selects same-padding
// ((k-1)/2), giving H' = ceil(H/stride). bias (shape [1,Cout,1,1]) may be -1.
TensorId conv2d(Tape&, TensorId input, TensorId kernel, TensorId bias, int stride = 1, int pad = -1);

TensorId relu(Tape&, TensorId x);            // subgradient at 0 is 0
TensorId sigmoid(Tape&, TensorId x);
TensorId add(Tape&, TensorId a, TensorId b); // equal shapes
TensorId sub(Tape&, TensorId a, TensorId b);
TensorId scale(Tape&, TensorId x, float s);

// Elementwise product where each extent of g either matches x or is 1
// (broadcast); used for the attention gates.
TensorId mul(Tape&, TensorId x, TensorId g);

// Arithmetic mean along one axis; the axis keeps extent 1.
TensorId reduce_mean(Tape&, TensorId x, int axis);
TensorId mean_all(Tape&, TensorId x);  // scalar [1,1,1,1]
TensorId abs_sum(Tape&, TensorId x);   // scalar sum |x|
TensorId l1_mean(Tape&, TensorId a, TensorId b);
TensorId mse_mean(Tape&, TensorId a, TensorId b);

// align-corners=false bilinear sampling; identity when sizes match.
TensorId bilinear_resize(Tape&, TensorId x, int out_h, int out_w);

// Mean over contiguous channel groups down to out_c channels. When out_c
// does not divide C the trailing group is padded by repeating the last
// input channel.
TensorId channel_avg_pool(Tape&, TensorId x, int out_c);

// Half-spectrum real 2-D DFT per channel plane; returns (re, im), each
// [N, C, H, W/2+1]. Differentiable via the adjoint transform.
std::pair<TensorId, TensorId> rdft2(Tape&, TensorId x);

// Replicates a [1,C,H,W] image T times along axis 0 (direct encoding).
TensorId encode_direct(Tape&, TensorId image, int time_steps);

TensorId pad_reflect(Tape&, TensorId x, int top, int bottom, int left, int right);
TensorId crop(Tape&, TensorId x, int top, int left, int out_h, int out_w);

// Per-channel y = gain[c] * x + bias[c]; gain/bias are [1,C,1,1].
TensorId affine_channel(Tape&, TensorId x, TensorId gain, TensorId bias);

} // namespace spikeir
