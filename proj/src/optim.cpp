#include "spikeir/optim.hpp"

#include <cmath>

namespace spikeir {

void adamw_step(const std::vector<Tensor*>& params, OptimState& st, float lr) {
    if (!(lr > 0.0f)) throw ConfigError("adamw_step: lr must be positive");
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (std::size_t p = 0; p < params.size(); ++p) {
            st.m[p].assign(static_cast<std::size_t>(params[p]->size()), 0.0f);
            st.v[p].assign(static_cast<std::size_t>(params[p]->size()), 0.0f);
        }
    }
    if (st.m.size() != params.size()) throw DimensionError("adamw_step: state/param count mismatch");
    st.step += 1;
    const float bc1 = 1.0f - static_cast<float>(std::pow(static_cast<double>(st.beta1), static_cast<double>(st.step)));
    const float bc2 = 1.0f - static_cast<float>(std::pow(static_cast<double>(st.beta2), static_cast<double>(st.step)));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p];
        if (st.m[p].size() != static_cast<std::size_t>(w.size()))
            throw DimensionError("adamw_step: moment/param shape mismatch");
        const bool has_g = w.has_grad();
        const float* g = has_g ? w.grad().data() : nullptr;
        if (has_g) {
            for (std::size_t i = 0; i < st.m[p].size(); ++i)
                if (!std::isfinite(g[i])) throw NumericError("adamw_step: non-finite gradient");
        }
        float* wd = w.data();
        for (std::size_t i = 0; i < st.m[p].size(); ++i) {
            const float gi = has_g ? g[i] : 0.0f;
            st.m[p][i] = st.beta1 * st.m[p][i] + (1.0f - st.beta1) * gi;
            st.v[p][i] = st.beta2 * st.v[p][i] + (1.0f - st.beta2) * gi * gi;
            const float mhat = st.m[p][i] / bc1;
            const float vhat = st.v[p][i] / bc2;
            wd[i] -= lr * st.weight_decay * wd[i];
            wd[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

float lr_at(const CosineSchedule& s, int epoch) {
    if (epoch < 0 || epoch >= s.total_epochs) throw ConfigError("lr_at: epoch out of range");
    if (s.total_epochs == 1) return s.lr_max;
    const double t = static_cast<double>(epoch) / (s.total_epochs - 1);
    return static_cast<float>(s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(3.14159265358979323846 * t)));
}

} // namespace spikeir
