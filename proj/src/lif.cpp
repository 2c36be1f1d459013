#include "spikeir/lif.hpp"

#include <cmath>
#include <vector>

namespace spikeir {

namespace {
constexpr double kPi = 3.14159265358979323846264338328;
}

float surrogate_grad(float v_pre, const LifParams& p) {
    const double u = static_cast<double>(v_pre) - p.v_th;
    const double k = 0.5 * kPi * p.surrogate_alpha * u;
    return static_cast<float>(p.surrogate_alpha / (2.0 * (1.0 + k * k)));
}

double surrogate_integral(double v_pre, const LifParams& p) {
    const double u = v_pre - p.v_th;
    return std::atan(0.5 * kPi * p.surrogate_alpha * u) / kPi + 0.5;
}

Tensor lif_step(const Tensor& current, LifState& state, const LifParams& p) {
    p.validate();
    if (state.v.size() == 0) state.v = Tensor(current.shape());
    if (!state.v.same_shape(current)) throw DimensionError("lif_step: current/state shape mismatch");
    Tensor spikes(current.shape());
    const bool soft = p.reset == LifParams::Reset::Soft;
    for (std::int64_t i = 0; i < current.size(); ++i) {
        const float u = p.beta * state.v.data()[i] + current.data()[i];
        const float s = u >= p.v_th ? 1.0f : 0.0f;
        spikes.data()[i] = s;
        state.v.data()[i] = soft ? u - p.v_th * s : u * (1.0f - s);
    }
    return spikes;
}

namespace {

struct SeqForward {
    Tensor spikes;
    Tensor membrane;       // u_t per step
    std::vector<float> hard; // hard spike decisions (drive the reset even in smooth mode)
};

SeqForward run_sequence(const Tensor& currents, const LifParams& p, bool smooth) {
    p.validate();
    if (currents.dim(0) < 1) throw DimensionError("lif_sequence requires T >= 1");
    const int t_n = currents.dim(0);
    const std::int64_t plane = currents.size() / t_n;
    SeqForward f{Tensor(currents.shape()), Tensor(currents.shape()),
                 std::vector<float>(static_cast<std::size_t>(currents.size()))};
    std::vector<float> v(static_cast<std::size_t>(plane), 0.0f);
    const bool soft = p.reset == LifParams::Reset::Soft;
    for (int t = 0; t < t_n; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * static_cast<std::size_t>(plane);
        for (std::int64_t i = 0; i < plane; ++i) {
            const float u = p.beta * v[static_cast<std::size_t>(i)] + currents.data()[off + static_cast<std::size_t>(i)];
            const float s = u >= p.v_th ? 1.0f : 0.0f;
            f.membrane.data()[off + static_cast<std::size_t>(i)] = u;
            f.hard[off + static_cast<std::size_t>(i)] = s;
            f.spikes.data()[off + static_cast<std::size_t>(i)] =
                smooth ? static_cast<float>(surrogate_integral(u, p)) : s;
            v[static_cast<std::size_t>(i)] = soft ? u - p.v_th * s : u * (1.0f - s);
        }
    }
    return f;
}

void fill_stats(const SeqForward& f, const LifParams& p, bool want_membrane, LifSeqStats* stats) {
    if (!stats) return;
    stats->total = f.spikes.size();
    std::int64_t spk = 0, dense = 0;
    const float dense_th = 0.01f * p.v_th;
    for (std::int64_t i = 0; i < f.spikes.size(); ++i) {
        if (f.hard[static_cast<std::size_t>(i)] != 0.0f) ++spk;
        if (std::fabs(f.membrane.data()[i]) > dense_th) ++dense;
    }
    stats->spike_count = spk;
    stats->dense_count = dense;
    double mean = 0.0;
    for (std::int64_t i = 0; i < f.spikes.size(); ++i) mean += f.spikes.data()[i];
    stats->firing_rate = mean / static_cast<double>(f.spikes.size());
    if (want_membrane) {
        stats->membrane = f.membrane;
        stats->has_membrane = true;
    }
}

} // namespace

Tensor lif_sequence(const Tensor& currents, const LifParams& p, LifSeqStats* stats, bool want_membrane) {
    SeqForward f = run_sequence(currents, p, false);
    fill_stats(f, p, want_membrane, stats);
    return std::move(f.spikes);
}

LifSeqOut lif_sequence(Tape& tape, TensorId currents, const LifParams& p, LifSeqStats* stats, bool smooth) {
    // copy extents up front: make() below may reallocate the slot storage
    const int t_n = tape.val(currents).dim(0);
    const std::int64_t plane = tape.val(currents).size() / t_n;
    SeqForward f = run_sequence(tape.val(currents), p, smooth);
    // The membrane trace is available as the second output slot; stats carry
    // only the scalar counters here.
    fill_stats(f, p, false, stats);
    const bool needs = tape.needs_grad(currents);
    Tensor membrane_copy = f.membrane;
    TensorId spikes_id = tape.make(std::move(f.spikes), needs, "lif_sequence");
    TensorId membrane_id = tape.make(std::move(membrane_copy), needs, "lif_sequence");
    if (needs) {
        std::vector<float> u = f.membrane.values();
        std::vector<float> hard = std::move(f.hard);
        tape.record([currents, spikes_id, membrane_id, p, t_n, plane, u = std::move(u),
                     hard = std::move(hard)](Tape& t) {
            const auto& gs = t.grad(spikes_id);
            const auto& gu_extra = t.grad(membrane_id);
            auto& gi = t.grad(currents);
            const bool soft = p.reset == LifParams::Reset::Soft;
            std::vector<float> carry(static_cast<std::size_t>(plane), 0.0f); // dL/dv_{t+1}
            for (int tt = t_n - 1; tt >= 0; --tt) {
                const std::size_t off = static_cast<std::size_t>(tt) * static_cast<std::size_t>(plane);
                for (std::int64_t i = 0; i < plane; ++i) {
                    const std::size_t j = off + static_cast<std::size_t>(i);
                    // reset is detached: s in v_{t+1} is treated as constant
                    const float dv_du = soft ? 1.0f : (1.0f - hard[j]);
                    const float gu = gs[j] * surrogate_grad(u[j], p) + gu_extra[j] +
                                     carry[static_cast<std::size_t>(i)] * dv_du;
                    gi[j] += gu;
                    carry[static_cast<std::size_t>(i)] = p.beta * gu;
                }
            }
        });
    }
    return {spikes_id, membrane_id};
}

} // namespace spikeir
