#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikeir {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Shape precondition violated (mismatched operands, bad axis, ...).
struct DimensionError : Error {
    using Error::Error;
};
// Invalid configuration value (stride < 1, T = 0, epoch out of range, ...).
struct ConfigError : Error {
    using Error::Error;
};
// API contract violated by the caller (non-scalar loss, fr out of range, ...).
struct ContractError : Error {
    using Error::Error;
};
// NaN/Inf surfaced where finite values are required.
struct NumericError : Error {
    using Error::Error;
};
// Malformed input file (PNM, manifest, config text).
struct ParseError : Error {
    using Error::Error;
};

// All data moves through rank-4 arrays laid out row-major as
// [time-or-batch, channel, height, width]. Images and per-step maps use
// extent 1 on axis 0; spike trains use extent T.
using Shape = std::array<int, 4>;

inline std::int64_t shape_numel(const Shape& s) {
    return static_cast<std::int64_t>(s[0]) * s[1] * s[2] * s[3];
}

inline std::string shape_str(const Shape& s) {
    return "[" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," +
           std::to_string(s[2]) + "," + std::to_string(s[3]) + "]";
}

class Tensor {
public:
    Tensor() : shape_{0, 0, 0, 0} {}

    explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape) {
        for (int d : shape_) {
            if (d < 0) throw DimensionError("negative extent in shape " + shape_str(shape_));
        }
        v_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
    }

    static Tensor zeros(Shape shape) { return Tensor(shape, 0.0f); }
    static Tensor full(Shape shape, float value) { return Tensor(shape, value); }
    static Tensor scalar(float value) { return Tensor({1, 1, 1, 1}, value); }

    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }

    float* data() { return v_.data(); }
    const float* data() const { return v_.data(); }
    std::vector<float>& values() { return v_; }
    const std::vector<float>& values() const { return v_; }

    float& at(int t, int c, int h, int w) { return v_[static_cast<std::size_t>(index(t, c, h, w))]; }
    float at(int t, int c, int h, int w) const { return v_[static_cast<std::size_t>(index(t, c, h, w))]; }

    std::int64_t index(int t, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(t) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool on) { requires_grad_ = on; }

    // The gradient slot is absent until first touched; it always matches the
    // value shape once present.
    bool has_grad() const { return !grad_.empty(); }
    std::vector<float>& grad() {
        if (grad_.empty()) grad_.assign(v_.size(), 0.0f);
        return grad_;
    }
    const std::vector<float>& grad() const { return grad_; }
    void zero_grad() { grad_.assign(v_.size(), 0.0f); }
    void clear_grad() { grad_.clear(); }

    void check_finite(const char* what) const {
        for (float x : v_) {
            if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
        }
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::vector<float> v_;
    std::vector<float> grad_;
    bool requires_grad_ = false;
};

} // namespace spikeir
