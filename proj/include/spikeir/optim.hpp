#pragma once

#include <cstdint>
#include <vector>

#include "spikeir/tensor.hpp"

namespace spikeir {

// Decoupled-weight-decay Adam with bias correction. Moment buffers are laid
// out per parameter in registration order and sized on the first step.
struct OptimState {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float weight_decay = 0.05f;
    float eps = 1e-8f;
    std::int64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

// One update over all params using their accumulated grad slots. Parameters
// without a grad slot are treated as zero-gradient (decay still applies).
// NaN/Inf in any gradient aborts with NumericError.
void adamw_step(const std::vector<Tensor*>& params, OptimState& state, float lr);

struct CosineSchedule {
    float lr_max = 5e-4f;
    float lr_min = 1e-5f;
    int total_epochs = 51;
};

// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / (total_epochs - 1))) / 2.
// Monotone non-increasing; endpoints hit lr_max and lr_min exactly.
float lr_at(const CosineSchedule& s, int epoch);

} // namespace spikeir
